"""Cubemap G-buffers captured by per-texel ray casting.

Face axis convention, with face-plane coordinates ``s, t`` in [-1, 1]::

    +X: ( 1, -t, -s)     -X: (-1, -t,  s)
    +Y: ( s,  1,  t)     -Y: ( s, -1, -t)
    +Z: ( s, -t,  1)     -Z: (-s, -t, -1)

Texel ``(i, j)`` covers ``s`` in ``[2i/R - 1, 2(i+1)/R - 1]`` and likewise
``t`` for ``j``.  Per-face arrays are indexed ``[face, j, i]`` so C order
matches the canonical ``(face, j, i)`` ordering used for tie-breaking.
"""

from __future__ import annotations

import functools
import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .scene import Scene, intersect_batch

__all__ = [
    "FaceId",
    "GBufferTexel",
    "CubemapGBuffer",
    "face_direction",
    "dir_from_texel",
    "texel_from_dir",
    "texel_from_dirs",
    "texel_centers",
    "face_directions",
    "neighbor_table",
    "chebyshev_depth",
    "capture",
]


class FaceId(IntEnum):
    POS_X = 0
    NEG_X = 1
    POS_Y = 2
    NEG_Y = 3
    POS_Z = 4
    NEG_Z = 5

    @property
    def label(self) -> str:
        return ("+X", "-X", "+Y", "-Y", "+Z", "-Z")[self]


# outward axis of each face
FACE_AXES = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64
)


def face_direction(face, s, t) -> np.ndarray:
    """Direction for face-plane coordinates; the face axis component is exactly +-1.

    ``face``, ``s`` and ``t`` broadcast against each other.
    """
    face, s, t = np.broadcast_arrays(np.asarray(face), np.asarray(s, dtype=np.float64), np.asarray(t, dtype=np.float64))
    one = np.ones_like(s)
    table = [
        (one, -t, -s),
        (-one, -t, s),
        (s, one, t),
        (s, -one, -t),
        (s, -t, one),
        (-s, -t, -one),
    ]
    out = np.zeros(s.shape + (3,))
    for f, comps in enumerate(table):
        sel = face == f
        if np.any(sel):
            for axis in range(3):
                out[..., axis] = np.where(sel, comps[axis], out[..., axis])
    return out


def _check_resolution(R: int) -> None:
    if R < 8 or R & (R - 1):
        raise ValueError(f"cubemap resolution must be a power of two >= 8, got {R}")


def texel_centers(R: int) -> np.ndarray:
    """Face-plane coordinate of each texel center, ``2(i + 0.5)/R - 1``."""
    return 2.0 * (np.arange(R) + 0.5) / R - 1.0


def dir_from_texel(face: int, i: int, j: int, R: int) -> np.ndarray:
    """Direction through the center of texel ``(i, j)`` on ``face``; max-norm 1."""
    if not 0 <= int(face) < 6:
        raise ValueError(f"face ordinal {face} out of range")
    if not (0 <= i < R and 0 <= j < R):
        raise ValueError(f"texel ({i}, {j}) out of range for R={R}")
    s = 2.0 * (i + 0.5) / R - 1.0
    t = 2.0 * (j + 0.5) / R - 1.0
    return face_direction(int(face), s, t)


@functools.lru_cache(maxsize=8)
def face_directions(R: int) -> np.ndarray:
    """Texel-center directions for every texel, shape ``(6, R, R, 3)``."""
    _check_resolution(R)
    c = texel_centers(R)
    s = np.broadcast_to(c[None, None, :], (6, R, R))
    t = np.broadcast_to(c[None, :, None], (6, R, R))
    f = np.broadcast_to(np.arange(6)[:, None, None], (6, R, R))
    out = face_direction(f, s, t)
    out.setflags(write=False)
    return out


def texel_from_dirs(dirs, R: int):
    """Vectorized :func:`texel_from_dir`; returns arrays ``face, i, j, u_frac, v_frac``."""
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    x, y, z = d[:, 0], d[:, 1], d[:, 2]
    ax, ay, az = np.abs(x), np.abs(y), np.abs(z)
    if np.any((ax == 0) & (ay == 0) & (az == 0)):
        raise ValueError("zero direction has no cubemap texel")
    use_x = (ax >= ay) & (ax >= az)
    use_y = ~use_x & (ay >= az)
    face = np.where(
        use_x, np.where(x > 0, 0, 1), np.where(use_y, np.where(y > 0, 2, 3), np.where(z > 0, 4, 5))
    )
    major = np.where(use_x, ax, np.where(use_y, ay, az))
    xs, ys, zs = x / major, y / major, z / major
    s = np.select(
        [face == 0, face == 1, face == 2, face == 3, face == 4],
        [-zs, zs, xs, xs, xs],
        -xs,
    )
    t = np.select(
        [face == 0, face == 1, face == 2, face == 3, face == 4],
        [-ys, -ys, zs, -zs, -ys],
        -ys,
    )
    u = (s + 1.0) * 0.5 * R
    v = (t + 1.0) * 0.5 * R
    i = np.clip(np.floor(u), 0, R - 1).astype(np.int64)
    j = np.clip(np.floor(v), 0, R - 1).astype(np.int64)
    below_one = np.nextafter(1.0, 0.0)
    u_frac = np.clip(u - i, 0.0, below_one)
    v_frac = np.clip(v - j, 0.0, below_one)
    return face.astype(np.int64), i, j, u_frac, v_frac


def texel_from_dir(direction, R: int) -> tuple[FaceId, int, int, float, float]:
    """Face, texel indices and sub-texel position of a nonzero direction.

    The face is the axis of largest magnitude; ties prefer X over Y over Z.
    """
    f, i, j, uf, vf = texel_from_dirs(np.asarray(direction, dtype=np.float64)[None], R)
    return FaceId(int(f[0])), int(i[0]), int(j[0]), float(uf[0]), float(vf[0])


@functools.lru_cache(maxsize=8)
def neighbor_table(R: int) -> np.ndarray:
    """Flat indices of the 4 direction-space neighbors of every texel.

    Shape ``(4, 6, R, R)`` in the order ``-s, +s, -t, +t``.  Neighbors past
    a face edge are found by mapping the stepped direction back through
    :func:`texel_from_dirs`, so they land on the adjacent face.
    """
    _check_resolution(R)
    c = texel_centers(R)
    step = 2.0 / R
    s = np.broadcast_to(c[None, None, :], (6, R, R))
    t = np.broadcast_to(c[None, :, None], (6, R, R))
    f = np.broadcast_to(np.arange(6)[:, None, None], (6, R, R))
    out = np.empty((4, 6, R, R), dtype=np.int64)
    for k, (ds, dt) in enumerate(((-step, 0.0), (step, 0.0), (0.0, -step), (0.0, step))):
        dirs = face_direction(f, s + ds, t + dt)
        nf, ni, nj, _, _ = texel_from_dirs(dirs, R)
        out[k] = ((nf * R + nj) * R + ni).reshape(6, R, R)
    out.setflags(write=False)
    return out


def chebyshev_depth(p, o) -> np.ndarray | float:
    """Max-norm distance between points (broadcasts over leading axes)."""
    diff = np.abs(np.asarray(p, dtype=np.float64) - np.asarray(o, dtype=np.float64))
    out = np.maximum(np.maximum(diff[..., 0], diff[..., 1]), diff[..., 2])
    return float(out) if out.ndim == 0 else out


class GBufferTexel(NamedTuple):
    depth: float
    normal: np.ndarray
    albedo: np.ndarray
    object_id: int
    material: int


@dataclass(eq=False)
class CubemapGBuffer:
    resolution: int
    origin: np.ndarray
    depth: np.ndarray  # (6, R, R), +inf on miss
    normal: np.ndarray  # (6, R, R, 3)
    albedo: np.ndarray  # (6, R, R, 3)
    object_id: np.ndarray  # (6, R, R), 0 on miss
    material: np.ndarray  # (6, R, R), -1 on miss

    @property
    def hit_mask(self) -> np.ndarray:
        return self.object_id != 0

    def texel(self, face: int, i: int, j: int) -> GBufferTexel:
        return GBufferTexel(
            float(self.depth[face, j, i]),
            self.normal[face, j, i],
            self.albedo[face, j, i],
            int(self.object_id[face, j, i]),
            int(self.material[face, j, i]),
        )

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.resolution).tobytes())
        for arr in (self.origin, self.depth, self.normal, self.albedo, self.object_id, self.material):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def identical(self, other: "CubemapGBuffer") -> bool:
        return self.digest() == other.digest()


def _capture_rays(scene: Scene, origin: np.ndarray, dirs: np.ndarray):
    unit = dirs / np.sqrt(dirs[:, 0] ** 2 + dirs[:, 1] ** 2 + dirs[:, 2] ** 2)[:, None]
    hb = intersect_batch(scene, np.broadcast_to(origin, unit.shape), unit)
    hit = hb.hit
    depth = np.where(hit, chebyshev_depth(hb.position, origin), np.inf)
    normal = np.where(hit[:, None], hb.normal, 0.0)
    if len(scene.materials):
        albedo = np.where(hit[:, None], scene.albedo_table[np.where(hit, hb.material, 0)], 0.0)
    else:
        albedo = np.zeros_like(normal)
    return depth, normal, albedo, hb.object_id, hb.material


def capture(scene: Scene, origin, R: int, workers: int = 1) -> CubemapGBuffer:
    """Ray-cast one sample through every texel center from ``origin``.

    With ``workers > 1`` the six faces are traced on a thread pool; the
    result is identical to the single-threaded pass.
    """
    _check_resolution(R)
    origin = np.array(origin, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(origin)):
        raise ValueError("probe origin must be finite")
    dirs = face_directions(R).reshape(6, R * R, 3)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda f: _capture_rays(scene, origin, dirs[f]), range(6)))
        cols = [np.concatenate([p[k] for p in parts]) for k in range(5)]
    else:
        cols = list(_capture_rays(scene, origin, dirs.reshape(-1, 3)))
    depth, normal, albedo, obj, mat = cols
    return CubemapGBuffer(
        resolution=R,
        origin=origin,
        depth=depth.reshape(6, R, R),
        normal=normal.reshape(6, R, R, 3),
        albedo=albedo.reshape(6, R, R, 3),
        object_id=obj.reshape(6, R, R),
        material=mat.reshape(6, R, R),
    )
