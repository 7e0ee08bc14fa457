"""Eye / grid / previous probes, cell transitions and the update schedule."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .cubemap import CubemapGBuffer, capture
from .scene import Scene
from .shading import ShadedCubemap, ShadingParams, shade_cubemap


class ProbeKind(str, enum.Enum):
    EYE = "eye"
    GRID = "grid"
    PREVIOUS = "previous"


def snap_origin(camera_pos, cell_size: float) -> np.ndarray:
    """Nearest grid vertex; exact halves round toward +inf per component."""
    if not cell_size > 0:
        raise ValueError("cell_size must be positive")
    p = np.asarray(camera_pos, dtype=np.float64)
    return np.floor(p / cell_size + 0.5) * cell_size + 0.0  # + 0.0 folds -0.0


def bayer_matrix(n: int) -> np.ndarray:
    """Bayer index matrix of size ``n`` (a power of two)."""
    if n < 1 or n & (n - 1):
        raise ValueError("Bayer size must be a power of two")
    m = np.zeros((1, 1), dtype=np.int64)
    while m.shape[0] < n:
        m = np.block([[4 * m, 4 * m + 2], [4 * m + 3, 4 * m + 1]])
    return m


BAYER4 = np.array(
    [
        [0, 8, 2, 10],
        [12, 4, 14, 6],
        [3, 11, 1, 9],
        [15, 7, 13, 5],
    ],
    dtype=np.int64,
)


def bayer4(x, y):
    """4x4 Bayer threshold index at pixel ``(x, y)``, in 0..15."""
    out = BAYER4[np.asarray(y) % 4, np.asarray(x) % 4]
    return int(out) if np.ndim(out) == 0 else out


def crossfade_threshold(t: float) -> int:
    if not 0.0 <= t <= 1.0:
        raise ValueError("transition progress must lie in [0, 1]")
    return int(np.floor(t * 16 + 0.5))


def select_grid_layer(x, y, t: float):
    """True where pixel ``(x, y)`` takes the new grid probe at progress ``t``.

    False selects the previous probe.  The selected set only grows with ``t``.
    """
    return bayer4(x, y) < crossfade_threshold(t)


@dataclass
class Probe:
    kind: ProbeKind
    origin: np.ndarray
    gbuffer: CubemapGBuffer | None = None
    shaded: ShadedCubemap | None = None
    valid: bool = False
    last_update_frame: int = -1
    scene_key: str | None = None  # scene the contents were shaded from

    def needs_refresh(self, scene: Scene) -> bool:
        return not self.valid or self.scene_key != scene.key


@dataclass(frozen=True)
class ProbeParams:
    face_res: int = 128
    cell_size: float = 4.0
    transition_frames: int = 16
    shading: ShadingParams = field(default_factory=ShadingParams)
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if self.transition_frames < 1:
            raise ValueError("transition_frames must be >= 1")


@dataclass
class ProbeSet:
    eye: Probe
    grid: Probe
    previous: Probe
    cell_size: float = 4.0
    transition_frames_total: int = 16
    transition_frames_left: int = 0
    frame: int = 0
    events: list[str] = field(default_factory=list)  # what the last step did

    @classmethod
    def empty(cls, params: ProbeParams) -> "ProbeSet":
        zero = np.zeros(3)
        return cls(
            eye=Probe(ProbeKind.EYE, zero),
            grid=Probe(ProbeKind.GRID, np.full(3, np.nan)),
            previous=Probe(ProbeKind.PREVIOUS, np.full(3, np.nan)),
            cell_size=params.cell_size,
            transition_frames_total=params.transition_frames,
        )

    @property
    def transition_progress(self) -> float:
        """0 at the start of a transition, 1 when none is active."""
        return 1.0 - self.transition_frames_left / self.transition_frames_total


def refresh_probe(probe: Probe, scene: Scene, params: ProbeParams, frame: int, timings: dict | None = None) -> Probe:
    """Recapture and reshade ``probe`` at its current origin.

    Elapsed seconds are added under ``capture`` and ``shade`` when a
    ``timings`` dict is given.
    """
    t0 = time.perf_counter()
    gb = capture(scene, probe.origin, params.face_res, workers=params.workers)
    t1 = time.perf_counter()
    shaded = shade_cubemap(gb, scene, params.shading, workers=params.workers)
    if timings is not None:
        timings["capture"] = timings.get("capture", 0.0) + (t1 - t0)
        timings["shade"] = timings.get("shade", 0.0) + (time.perf_counter() - t1)
    return replace(probe, gbuffer=gb, shaded=shaded, valid=True, last_update_frame=frame, scene_key=scene.key)


def step(probe_set: ProbeSet, scene: Scene, camera_pos, params: ProbeParams, timings: dict | None = None) -> ProbeSet:
    """Advance the probe set by one frame for a camera at ``camera_pos``.

    The eye probe refreshes every frame.  On a cell change the grid probe's
    contents move to the previous slot and a crossfade starts.  Even frames
    may refresh the grid probe, odd frames the previous probe; each only
    when it is stale or the scene changed.  Returns a new ProbeSet; the
    input is left untouched.  ``timings`` collects per-stage seconds.
    """
    ps = replace(probe_set, events=[])
    frame = ps.frame
    camera_pos = np.asarray(camera_pos, dtype=np.float64)

    ps.eye = refresh_probe(replace(ps.eye, origin=camera_pos.copy()), scene, params, frame, timings)
    ps.events.append("eye_update")

    snapped = snap_origin(camera_pos, ps.cell_size)
    if not np.array_equal(snapped, ps.grid.origin):
        if ps.grid.valid:
            # a re-crossing mid-transition drops the older previous probe
            ps.previous = replace(ps.grid, kind=ProbeKind.PREVIOUS)
            ps.transition_frames_left = ps.transition_frames_total
            ps.events.append("transition_start")
        ps.grid = Probe(ProbeKind.GRID, snapped)
        ps.events.append("grid_moved")

    if frame % 2 == 0:
        if ps.grid.needs_refresh(scene):
            ps.grid = refresh_probe(ps.grid, scene, params, frame, timings)
            ps.events.append("grid_update")
    elif ps.previous.valid and ps.previous.scene_key != scene.key:
        ps.previous = refresh_probe(ps.previous, scene, params, frame, timings)
        ps.events.append("previous_update")

    if ps.transition_frames_left > 0:
        ps.transition_frames_left -= 1
        if ps.transition_frames_left == 0:
            ps.previous = Probe(ProbeKind.PREVIOUS, np.full(3, np.nan))
            ps.events.append("transition_end")
    ps.frame = frame + 1
    return ps
