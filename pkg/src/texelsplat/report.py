"""Matplotlib figures for stability reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {"texel": ("tab:blue", "-"), "naive": ("tab:red", "--")}


def _series(report: dict, key: str) -> tuple[list[int], list[float]]:
    xs, ys = [], []
    for rec in report["frames"]:
        if rec["changed"] is not None:
            xs.append(rec["frame"])
            ys.append(rec["changed"][key])
    return xs, ys


def plot_stability(reports: dict[str, dict], path) -> Path:
    """Changed-pixel fraction per frame, one line per mode.

    The left panel is the total fraction; the right one counts only pixels
    drawn from the grid or previous probe in both frames.
    """
    path = Path(path)
    fig, (ax_total, ax_stable) = plt.subplots(1, 2, figsize=(10, 3.6), sharey=True)
    for mode, report in sorted(reports.items()):
        color, ls = _STYLE.get(mode, ("k", "-"))
        ax_total.plot(*_series(report, "total"), color=color, ls=ls, label=mode)
        if mode != "naive":
            ax_stable.plot(*_series(report, "stable"), color=color, ls=ls, label=mode)
    ax_total.set_title("all pixels")
    ax_stable.set_title("grid/previous pixels")
    for ax in (ax_total, ax_stable):
        ax.set_xlabel("frame")
        ax.grid(alpha=0.3)
    ax_total.set_ylabel("changed fraction vs previous frame")
    ax_total.legend(loc="upper right")
    fig.tight_layout()
    try:
        fig.savefig(path, dpi=110)
    except OSError as exc:
        raise OSError(f"cannot write figure {str(path)!r}: {exc.strerror}") from exc
    finally:
        plt.close(fig)
    return path


def plot_coverage(report: dict, path) -> Path:
    """Stacked per-layer coverage over a texel-mode run."""
    path = Path(path)
    frames = [r["frame"] for r in report["frames"]]
    layers = ["grid", "previous", "eye", "none"]
    stacks = [[r["layer_coverage"].get(name, 0.0) for r in report["frames"]] for name in layers]
    fig, ax = plt.subplots(figsize=(6, 3.4))
    ax.stackplot(frames, stacks, labels=layers)
    ax.set_xlabel("frame")
    ax.set_ylabel("fraction of pixels")
    ax.set_ylim(0, 1)
    ax.legend(loc="lower right", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
