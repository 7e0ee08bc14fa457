"""Command-line entry point: ``texelsplat render | compare | dump-cubemap | assets``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from .cubemap import capture
from .harness import (
    DUMP_CHANNELS,
    MODES,
    ConfigError,
    RunConfig,
    bundled,
    dump_cubemap,
    render_sequence,
    resolve_asset,
)
from .paths import PathError
from .scene import SceneError, load_scene
from .shading import ShadingParams, shade_cubemap

# flag name -> RunConfig field; None defaults mean "not given on the command line"
_RUN_FLAGS = [
    ("--scene", str, "scene JSON file or bundled scene name"),
    ("--path", str, "camera path JSON file or bundled path name"),
    ("--out", str, "output directory"),
    ("--width", int, "frame width in pixels"),
    ("--height", int, "frame height in pixels"),
    ("--face-res", int, "cubemap face resolution R"),
    ("--cell-size", float, "grid cell size in world units"),
    ("--bands", int, "posterization bands"),
    ("--transition-frames", int, "crossfade length in frames"),
    ("--crease-deg", float, "crease threshold in degrees"),
    ("--dl-sil", float, "silhouette lightness shift"),
    ("--dl-crease", float, "crease lightness shift"),
    ("--splat-s", float, "free expansion at depth edges (fraction of h)"),
    ("--splat-eps-d", float, "relative depth similarity threshold"),
    ("--splat-kappa", float, "grazing-angle expansion gain"),
    ("--splat-emax", float, "maximum constrained expansion (fraction of h)"),
    ("--splat-eps-z", float, "relative depth bias applied to eye quads"),
    ("--frames", int, "render only the first N frames of the path"),
    ("--workers", int, "threads used inside a frame"),
]


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run-config JSON; flags override its values")
    for flag, typ, help_ in _RUN_FLAGS:
        p.add_argument(flag, type=typ, default=None, help=help_)
    p.add_argument("--dump-cubemaps", action="store_true", default=None, help="write grid-probe cubemap channels on each grid update")
    p.add_argument("--no-images", dest="write_images", action="store_false", default=None, help="skip per-frame PPM output")
    p.add_argument("--no-plot", dest="plot", action="store_false", default=None, help="skip matplotlib figures")


def _run_config(args: argparse.Namespace, **forced) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    names = {f.name for f in fields(RunConfig)}
    given = {k: v for k, v in vars(args).items() if k in names and v is not None}
    given.update(forced)
    cfg = replace(cfg, **given)
    cfg.validate()
    return cfg


def _print_summary(mode: str, report: dict, out) -> None:
    s = report["summary"]
    print(
        f"{mode}: {s['frames']} frames -> {out}  "
        f"mean changed {s['mean_changed_total']:.4f} (stable layers {s['mean_changed_stable']:.4f})"
    )


def cmd_render(args: argparse.Namespace) -> int:
    forced = {"mode": args.mode} if args.mode else {}
    cfg = _run_config(args, **forced)
    result = render_sequence(cfg)
    _print_summary(cfg.mode, result.report, cfg.out)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    base = _run_config(args)
    root = Path(base.out)
    reports = {}
    for mode in MODES:
        cfg = replace(base, mode=mode, out=str(root / mode), plot=False)
        reports[mode] = render_sequence(cfg).report
        _print_summary(mode, reports[mode], cfg.out)
    doc = {mode: r["summary"] for mode, r in reports.items()}
    with open(root / "comparison.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if base.plot:
        from .report import plot_stability

        plot_stability(reports, root / "stability.png")
    return 0


def cmd_dump(args: argparse.Namespace) -> int:
    scene = load_scene(resolve_asset(args.scene, "scenes"))
    gb = capture(scene, args.origin, args.face_res, workers=args.workers)
    shaded = shade_cubemap(gb, scene, ShadingParams(bands=args.bands), workers=args.workers)
    channels = DUMP_CHANNELS if args.channel == "all" else (args.channel,)
    n = 0
    for ch in channels:
        n += len(dump_cubemap(shaded, ch, args.out))
    print(f"wrote {n} face images to {args.out}")
    return 0


def cmd_assets(args: argparse.Namespace) -> int:
    for kind in ("scenes", "paths"):
        print(f"{kind}: {', '.join(bundled(kind))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="texelsplat", description="Texel-splatting renderer and pixel-stability harness.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a camera path in one mode")
    p.add_argument("--mode", choices=MODES, default=None)
    _add_run_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("compare", help="render a path in both modes and plot their stability")
    _add_run_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dump-cubemap", help="capture and shade one probe, write its faces as PPM")
    p.add_argument("--scene", required=True)
    p.add_argument("--origin", type=float, nargs=3, default=(0.0, 0.0, 0.0), metavar=("X", "Y", "Z"))
    p.add_argument("--face-res", type=int, default=128)
    p.add_argument("--bands", type=int, default=6)
    p.add_argument("--channel", choices=DUMP_CHANNELS + ("all",), default="all")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("assets", help="list bundled scenes and camera paths")
    p.set_defaults(func=cmd_assets)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SceneError, PathError, ValueError, OSError) as exc:
        print(f"texelsplat: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
