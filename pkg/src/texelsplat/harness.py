"""Frame-sequence driver, the naive perspective baseline and stability metrics."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .camera import CameraPose
from .cubemap import FaceId
from .imageio import linear_to_srgb8, write_image, write_ppm
from .paths import CameraPath, load_path
from .probes import ProbeParams, ProbeSet, step
from .scene import Scene, _dot, intersect_batch, load_scene
from .shading import ShadedCubemap, ShadingParams, direct_light_batch, linear_to_oklab, oklab_to_linear, posterize_oklab
from .splatter import Framebuffer, Layer, SplatParams, probe_quads, quad_set_hash, render_frame

log = logging.getLogger(__name__)

MODES = ("texel", "naive")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# bundled assets


def bundled(kind: str) -> list[str]:
    root = resources.files("texelsplat") / "assets" / kind
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_asset(name_or_path: str, kind: str) -> Path:
    """A file path as given, or the bundled asset of that name."""
    p = Path(name_or_path)
    if p.is_file():
        return p
    candidate = resources.files("texelsplat") / "assets" / kind / f"{name_or_path}.json"
    if candidate.is_file():
        return Path(str(candidate))
    raise ConfigError(f"no such {kind[:-1]} file or bundled asset: {name_or_path!r}")


# ---------------------------------------------------------------------------
# baseline and metrics


def naive_render(scene: Scene, camera: CameraPose, width: int, height: int, bands: int = 6) -> Framebuffer:
    """One ray per pixel center, shaded and posterized like the texels but without outlines."""
    fb = Framebuffer.cleared(width, height, scene.background)
    dirs = camera.pixel_rays(width, height).reshape(-1, 3)
    hb = intersect_batch(scene, np.broadcast_to(camera.position, dirs.shape), dirs)
    idx = np.flatnonzero(hb.hit)
    if len(idx):
        albedo = scene.albedo_table[hb.material[idx]]
        lit = direct_light_batch(scene, hb.position[idx], hb.normal[idx], albedo)
        fb.color.reshape(-1, 3)[idx] = oklab_to_linear(posterize_oklab(linear_to_oklab(lit), bands))
        fb.depth.reshape(-1)[idx] = hb.t[idx] * _dot(dirs[idx], camera.forward)
        fb.layer_mask.reshape(-1)[idx] = Layer.DIRECT
        fb.key.reshape(-1)[idx] = hb.primitive[idx]
    return fb


def stability_metrics(frame_a: Framebuffer, frame_b: Framebuffer) -> dict[str, float]:
    """Fraction of pixels whose RGB8 output color changed between two frames.

    ``total`` covers every pixel.  ``stable`` is restricted to pixels drawn
    from the grid or previous probe in both frames; ``grid``, ``previous``
    and ``eye`` restrict to pixels carrying that layer in both frames.
    Empty restrictions report 0.
    """
    if (frame_a.width, frame_a.height) != (frame_b.width, frame_b.height):
        raise ValueError(
            f"frame size mismatch: {frame_a.width}x{frame_a.height} vs {frame_b.width}x{frame_b.height}"
        )
    changed = np.any(frame_a.to_rgb8() != frame_b.to_rgb8(), axis=-1)
    out = {"total": float(changed.mean())}

    def frac(mask):
        n = int(mask.sum())
        return float(changed[mask].sum() / n) if n else 0.0

    la, lb = frame_a.layer_mask, frame_b.layer_mask
    stable_a = (la == Layer.GRID) | (la == Layer.PREVIOUS)
    stable_b = (lb == Layer.GRID) | (lb == Layer.PREVIOUS)
    out["stable"] = frac(stable_a & stable_b)
    for layer in (Layer.GRID, Layer.PREVIOUS, Layer.EYE):
        out[layer.name.lower()] = frac((la == layer) & (lb == layer))
    return out


def layer_coverage(fb: Framebuffer) -> dict[str, float]:
    n = fb.width * fb.height
    return {layer.name.lower(): float((fb.layer_mask == layer).sum() / n) for layer in Layer}


# ---------------------------------------------------------------------------
# cubemap dumps

DUMP_CHANNELS = ("depth", "normal", "albedo", "object_id", "shaded")


def _palette(ids: np.ndarray) -> np.ndarray:
    x = (ids.astype(np.uint64) * np.uint64(2654435761)) & np.uint64(0xFFFFFF)
    rgb = np.stack([(x >> np.uint64(16)) & np.uint64(255), (x >> np.uint64(8)) & np.uint64(255), x & np.uint64(255)], axis=-1)
    rgb = rgb.astype(np.uint8) | np.uint8(0x40)
    rgb[ids == 0] = 0
    return rgb


def cubemap_channel_images(shaded: ShadedCubemap, channel: str) -> np.ndarray:
    """Six ``(R, R, 3)`` uint8 images of one channel, FaceId order."""
    gb = shaded.gbuffer
    hit = gb.hit_mask
    if channel == "depth":
        finite = gb.depth[hit]
        top = float(finite.max()) if finite.size else 1.0
        v = np.where(hit, 1.0 - gb.depth / (top if top > 0 else 1.0), 0.0)
        return np.repeat(np.floor(v * 255.0 + 0.5).astype(np.uint8)[..., None], 3, axis=-1)
    if channel == "normal":
        v = np.where(hit[..., None], (gb.normal + 1.0) * 0.5, 0.0)
        return np.floor(v * 255.0 + 0.5).astype(np.uint8)
    if channel == "albedo":
        return linear_to_srgb8(gb.albedo)
    if channel == "object_id":
        return _palette(gb.object_id)
    if channel == "shaded":
        return linear_to_srgb8(shaded.color)
    raise ValueError(f"unknown cubemap channel {channel!r}; expected one of {DUMP_CHANNELS}")


def dump_cubemap(shaded: ShadedCubemap, channel: str, out_dir, prefix: str = "") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = cubemap_channel_images(shaded, channel)
    written = []
    for face in FaceId:
        label = face.label.replace("+", "pos").replace("-", "neg")
        path = out_dir / f"{prefix}{channel}_{int(face)}_{label}.ppm"
        write_ppm(images[face], path)
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# sequence rendering


@dataclass
class RunConfig:
    scene: str = "village"
    path: str = "dolly_in_cell"
    mode: str = "texel"
    out: str = "out"
    width: int = 320
    height: int = 240
    face_res: int = 128
    cell_size: float = 4.0
    bands: int = 6
    transition_frames: int = 16
    crease_deg: float = 45.0
    dl_sil: float = -0.25
    dl_crease: float = -0.12
    splat_s: float = 0.5
    splat_eps_d: float = 0.02
    splat_kappa: float = 0.5
    splat_emax: float = 1.0
    splat_eps_z: float = 0.05
    dump_cubemaps: bool = False
    frames: int | None = None  # truncate the path
    workers: int = 1
    write_images: bool = True
    plot: bool = True

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        norm = {k.replace("-", "_"): v for k, v in doc.items()}
        unknown = sorted(set(norm) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**norm)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.width < 1 or self.height < 1:
            raise ConfigError("width and height must be positive")
        if self.frames is not None and self.frames < 1:
            raise ConfigError("frames must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            self.shading_params()
            self.probe_params()
            self.splat_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def shading_params(self) -> ShadingParams:
        return ShadingParams(self.bands, self.crease_deg, self.dl_sil, self.dl_crease)

    def probe_params(self) -> ProbeParams:
        if self.face_res < 8 or self.face_res & (self.face_res - 1):
            raise ValueError("face_res must be a power of two >= 8")
        return ProbeParams(self.face_res, self.cell_size, self.transition_frames, self.shading_params(), self.workers)

    def splat_params(self) -> SplatParams:
        return SplatParams(self.splat_s, self.splat_eps_d, self.splat_kappa, self.splat_emax, self.splat_eps_z)


@dataclass
class SequenceResult:
    frames: list[Framebuffer]
    report: dict
    timings: dict = field(default_factory=dict)
    frame_timings: dict = field(default_factory=dict)  # stage -> seconds per frame
    probe_sets: list[ProbeSet] = field(default_factory=list)


def _origin(v) -> list[float] | None:
    arr = np.asarray(v, dtype=np.float64)
    return None if not np.all(np.isfinite(arr)) else [float(x) for x in arr]


class _GridHasher:
    """Grid quad-set hash, recomputed only when the grid probe changes."""

    def __init__(self) -> None:
        self._token = None
        self._hash = None

    def __call__(self, probe_set: ProbeSet, params: SplatParams) -> str | None:
        grid = probe_set.grid
        if not grid.valid:
            return None
        token = (id(grid.shaded), grid.last_update_frame, grid.origin.tobytes())
        if token != self._token:
            self._hash = quad_set_hash(probe_quads(grid.shaded, Layer.GRID, None, params))
            self._token = token
        return self._hash


def render_sequence(config: RunConfig, *, scene: Scene | None = None, path: CameraPath | None = None, keep_probes: bool = False) -> SequenceResult:
    """Render every frame of the camera path and collect stability metrics.

    Writes ``frame_NNNN.ppm``, ``metrics.json`` and ``metrics.csv`` into
    ``config.out`` (plus ``stability.png`` when plotting is enabled).
    Wall-clock timings go to ``timings.json`` so the metrics file stays
    byte-identical between runs.
    """
    config.validate()
    if scene is None:
        scene = load_scene(resolve_asset(config.scene, "scenes"))
    if path is None:
        path = load_path(resolve_asset(config.path, "paths"))
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {os.fspath(out)!r}: {exc.strerror}") from exc

    n_frames = path.n_frames if config.frames is None else min(config.frames, path.n_frames)
    aspect = config.width / config.height
    probe_params = config.probe_params()
    splat_params = config.splat_params()
    probe_set = ProbeSet.empty(probe_params)
    timings: dict[str, list[float]] = defaultdict(list)
    grid_hash = _GridHasher()
    frames: list[Framebuffer] = []
    kept: list[ProbeSet] = []
    records = []
    prev_fb = None

    for k in range(n_frames):
        camera = path.pose(k, aspect=aspect)
        record: dict = {"frame": k, "camera": _origin(camera.position)}
        if config.mode == "texel":
            stage: dict[str, float] = {}
            probe_set = step(probe_set, scene, camera.position, probe_params, stage)
            t1 = time.perf_counter()
            fb = render_frame(probe_set, camera, splat_params, (config.width, config.height), scene.background, config.workers)
            stage["splat"] = time.perf_counter() - t1
            for name in ("capture", "shade", "splat"):
                timings[name].append(stage.get(name, 0.0))
            timings["frame"].append(sum(stage.values()))
            record.update(
                grid_quad_hash=grid_hash(probe_set, splat_params),
                probe_events=list(probe_set.events),
                grid_origin=_origin(probe_set.grid.origin),
                previous_origin=_origin(probe_set.previous.origin) if probe_set.previous.valid else None,
                transition_progress=probe_set.transition_progress,
            )
            log.debug("frame %d events %s", k, probe_set.events)
            if config.dump_cubemaps and "grid_update" in probe_set.events:
                for channel in ("depth", "normal", "object_id", "shaded"):
                    dump_cubemap(probe_set.grid.shaded, channel, out / "cubemaps", prefix=f"frame_{k:04d}_grid_")
            if keep_probes:
                kept.append(probe_set)
        else:
            t0 = time.perf_counter()
            fb = naive_render(scene, camera, config.width, config.height, config.bands)
            timings["naive"].append(time.perf_counter() - t0)
        record["layer_coverage"] = layer_coverage(fb)
        record["changed"] = None if prev_fb is None else stability_metrics(prev_fb, fb)
        records.append(record)
        if config.write_images:
            t0 = time.perf_counter()
            write_image(fb, out / f"frame_{k:04d}.ppm")
            timings["write"].append(time.perf_counter() - t0)
        frames.append(fb)
        prev_fb = fb

    # output location and thread count do not affect what was rendered
    cfg = {k: v for k, v in asdict(config).items() if k not in ("out", "workers")}
    report = {"mode": config.mode, "config": cfg, "frames": records, "summary": summarize(records)}
    _write_json(out / "metrics.json", report)
    _write_csv(out / "metrics.csv", records)
    timing_summary = {stage: {"total_s": sum(v), "mean_s": sum(v) / len(v), "count": len(v)} for stage, v in timings.items()}
    _write_json(out / "timings.json", timing_summary)
    if config.plot:
        from .report import plot_coverage, plot_stability

        plot_stability({config.mode: report}, out / "stability.png")
        if config.mode == "texel":
            plot_coverage(report, out / "coverage.png")
    return SequenceResult(frames, report, timing_summary, dict(timings), kept)


def summarize(records: list[dict]) -> dict:
    pairs = [r["changed"] for r in records if r["changed"] is not None]
    out: dict = {"frames": len(records), "pairs": len(pairs)}
    for key in ("total", "stable"):
        vals = [p[key] for p in pairs]
        out[f"mean_changed_{key}"] = float(np.mean(vals)) if vals else 0.0
        out[f"max_changed_{key}"] = float(np.max(vals)) if vals else 0.0
    hashes = {r.get("grid_quad_hash") for r in records if r.get("grid_quad_hash")}
    out["distinct_grid_quad_hashes"] = len(hashes)
    return out


def _write_json(path: Path, doc) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {os.fspath(path)!r}: {exc.strerror}") from exc


def _write_csv(path: Path, records: list[dict]) -> None:
    cols = ["frame", "total", "stable", "grid", "previous", "eye", "grid_quad_hash", "events"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in records:
            ch = r["changed"] or {}
            w.writerow(
                [r["frame"]]
                + [ch.get(k, "") for k in ("total", "stable", "grid", "previous", "eye")]
                + [r.get("grid_quad_hash") or "", ";".join(r.get("probe_events", []))]
            )
