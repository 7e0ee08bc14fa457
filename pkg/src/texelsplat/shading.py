"""Per-texel shading: diffuse + shadows, OKLab posterization and outlines.

Nothing here knows about a camera.  A shaded cubemap is a pure function of
the G-buffer, the scene and :class:`ShadingParams`.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cubemap import CubemapGBuffer, face_direction, face_directions, neighbor_table, texel_from_dir
from .scene import Light, Scene, _dot, occluded_batch


@dataclass(frozen=True)
class ShadingParams:
    bands: int = 6
    crease_threshold_deg: float = 45.0
    delta_L_silhouette: float = -0.25
    delta_L_crease: float = -0.12

    def __post_init__(self) -> None:
        if not 2 <= self.bands <= 64:
            raise ValueError("bands must be in [2, 64]")
        if not 0.0 < self.crease_threshold_deg < 180.0:
            raise ValueError("crease threshold must be in (0, 180) degrees")
        if abs(self.delta_L_silhouette) > 1.0 or abs(self.delta_L_crease) > 1.0:
            raise ValueError("lightness shifts must lie in [-1, 1]")

    @property
    def crease_cos(self) -> float:
        return math.cos(math.radians(self.crease_threshold_deg))


# ---------------------------------------------------------------------------
# OKLab (Ottosson 2020), linear sRGB primaries


def linear_to_oklab(rgb) -> np.ndarray:
    """Linear sRGB to OKLab; the last axis holds the three channels."""
    c = np.asarray(rgb, dtype=np.float64)
    r, g, b = c[..., 0], c[..., 1], c[..., 2]
    l = 0.4122214708 * r + 0.5363325363 * g + 0.0514459929 * b
    m = 0.2119034982 * r + 0.6806995451 * g + 0.1073969566 * b
    s = 0.0883024619 * r + 0.2817188376 * g + 0.6299787005 * b
    l_, m_, s_ = np.cbrt(l), np.cbrt(m), np.cbrt(s)
    return np.stack(
        [
            0.2104542553 * l_ + 0.7936177850 * m_ - 0.0040720468 * s_,
            1.9779984951 * l_ - 2.4285922050 * m_ + 0.4505937099 * s_,
            0.0259040371 * l_ + 0.7827717662 * m_ - 0.8086757660 * s_,
        ],
        axis=-1,
    )


def oklab_to_linear(lab) -> np.ndarray:
    """OKLab to linear sRGB, clamped to [0, 1]."""
    c = np.asarray(lab, dtype=np.float64)
    L, a, b = c[..., 0], c[..., 1], c[..., 2]
    l_ = L + 0.3963377774 * a + 0.2158037573 * b
    m_ = L - 0.1055613458 * a - 0.0638541728 * b
    s_ = L - 0.0894841775 * a - 1.2914855480 * b
    l, m, s = l_ * l_ * l_, m_ * m_ * m_, s_ * s_ * s_
    out = np.stack(
        [
            4.0767416621 * l - 3.3077115913 * m + 0.2309699292 * s,
            -1.2684380046 * l + 2.6097574011 * m - 0.3413193965 * s,
            -0.0041960863 * l - 0.7034186147 * m + 1.7076147010 * s,
        ],
        axis=-1,
    )
    return np.clip(out, 0.0, 1.0)


def posterize_lightness(L, bands: int):
    """Snap lightness to the center of one of ``bands`` equal bands."""
    if bands < 2:
        raise ValueError("bands must be >= 2")
    x = np.clip(np.asarray(L, dtype=np.float64), 0.0, 1.0)
    idx = np.minimum(np.floor(x * bands), bands - 1)
    out = (idx + 0.5) / bands
    return float(out) if out.ndim == 0 else out


def posterize_oklab(lab, bands: int) -> np.ndarray:
    """Posterize OKLab lightness; a and b follow L so each band is one flat color.

    Scaling a, b by ``L'/L`` keeps hue and saturation.  Without it a lit
    surface of one albedo would still vary in chroma inside a band.
    """
    c = np.asarray(lab, dtype=np.float64)
    L = c[..., 0]
    Lq = posterize_lightness(L, bands)
    ratio = np.where(L > 0.0, Lq / np.where(L > 0.0, L, 1.0), 0.0)
    return np.stack([Lq, c[..., 1] * ratio, c[..., 2] * ratio], axis=-1)


# ---------------------------------------------------------------------------
# lighting


def _light_term(light: Light, p: np.ndarray, n: np.ndarray) -> np.ndarray:
    if light.kind == "directional":
        to_light = -np.asarray(light.direction, dtype=np.float64)
        ndl = np.maximum(0.0, _dot(n, np.broadcast_to(to_light, n.shape)))
        return ndl[:, None] * np.asarray(light.color)
    delta = np.asarray(light.position, dtype=np.float64) - p
    dist = np.sqrt(_dot(delta, delta))
    safe = np.where(dist > 0.0, dist, 1.0)
    ndl = np.maximum(0.0, _dot(n, delta) / safe)
    c0, c1, c2 = light.attenuation
    att = 1.0 / (c0 + c1 * dist + c2 * dist * dist)
    return (ndl * att)[:, None] * np.asarray(light.color)


def direct_light_batch(scene: Scene, points, normals, albedo) -> np.ndarray:
    """Diffuse radiance for surface samples; rows are samples."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    acc = np.broadcast_to(np.asarray(scene.ambient, dtype=np.float64), p.shape).copy()
    for light in scene.lights:
        term = _light_term(light, p, n)
        lit = ~occluded_batch(scene, p, n, light)
        acc += np.where(lit[:, None], term, 0.0)
    return np.maximum(np.asarray(albedo, dtype=np.float64).reshape(-1, 3) * acc, 0.0)


def direct_light(scene: Scene, position, normal, albedo) -> np.ndarray:
    """albedo * (ambient + sum of unshadowed n.l * color * attenuation)."""
    return direct_light_batch(scene, np.asarray(position)[None], np.asarray(normal)[None], np.asarray(albedo)[None])[0]


def texel_position(gbuffer: CubemapGBuffer, face: int, i: int, j: int) -> np.ndarray:
    """Surface point of a hit texel, reconstructed at the texel center."""
    R = gbuffer.resolution
    r = face_direction(face, 2.0 * (i + 0.5) / R - 1.0, 2.0 * (j + 0.5) / R - 1.0)
    return gbuffer.origin + gbuffer.depth[face, j, i] * r


# ---------------------------------------------------------------------------
# outlines


class EdgeFlags(NamedTuple):
    silhouette: bool
    crease: bool


def texel_neighbors(face: int, i: int, j: int, R: int) -> list[tuple[int, int, int]]:
    """The 4 direction-space neighbors (``-s, +s, -t, +t``) of one texel."""
    s = 2.0 * (i + 0.5) / R - 1.0
    t = 2.0 * (j + 0.5) / R - 1.0
    step = 2.0 / R
    out = []
    for ds, dt in ((-step, 0.0), (step, 0.0), (0.0, -step), (0.0, step)):
        f, ni, nj, _, _ = texel_from_dir(face_direction(face, s + ds, t + dt), R)
        out.append((int(f), ni, nj))
    return out


def detect_edges(gbuffer: CubemapGBuffer, face: int, i: int, j: int, params: ShadingParams | None = None) -> EdgeFlags:
    """Silhouette/crease flags for one hit texel from its 4 neighbors.

    A silhouette is drawn on the nearer side of an object-ID change (the
    texel is no farther than the differing neighbor).  A crease needs a
    same-object neighbor whose normal turns by more than the threshold.
    """
    params = params or ShadingParams()
    me = gbuffer.texel(face, i, j)
    sil = crease = False
    for nf, ni, nj in texel_neighbors(face, i, j, gbuffer.resolution):
        nb = gbuffer.texel(nf, ni, nj)
        if nb.object_id != me.object_id:
            if me.depth <= nb.depth:
                sil = True
        elif float(_dot(me.normal, nb.normal)) < params.crease_cos:
            crease = True
    return EdgeFlags(sil, crease)


def edge_masks(gbuffer: CubemapGBuffer, params: ShadingParams) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`detect_edges` over the whole cubemap (hits only)."""
    nb = neighbor_table(gbuffer.resolution).reshape(4, -1)
    ids = gbuffer.object_id.reshape(-1)
    depth = gbuffer.depth.reshape(-1)
    normal = gbuffer.normal.reshape(-1, 3)
    hit = ids != 0
    sil = np.zeros_like(hit)
    crease = np.zeros_like(hit)
    for k in range(4):
        nid = ids[nb[k]]
        differ = nid != ids
        sil |= differ & (depth <= depth[nb[k]])
        crease |= ~differ & (_dot(normal, normal[nb[k]]) < params.crease_cos)
    shape = gbuffer.depth.shape
    return (sil & hit).reshape(shape), (crease & hit).reshape(shape)


# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ShadedCubemap:
    gbuffer: CubemapGBuffer
    color: np.ndarray  # (6, R, R, 3) linear RGB; zero on misses
    silhouette: np.ndarray
    crease: np.ndarray

    @property
    def resolution(self) -> int:
        return self.gbuffer.resolution

    @property
    def depth(self) -> np.ndarray:
        return self.gbuffer.depth

    @property
    def object_id(self) -> np.ndarray:
        return self.gbuffer.object_id

    def digest(self) -> str:
        h = hashlib.sha256(self.gbuffer.digest().encode())
        for arr in (self.color, self.silhouette, self.crease):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def shade_texels(lit_rgb: np.ndarray, sil: np.ndarray, crease: np.ndarray, params: ShadingParams) -> np.ndarray:
    """Posterize lightness, then apply the outline lightness shift."""
    lab = posterize_oklab(linear_to_oklab(lit_rgb), params.bands)
    shift = np.where(sil, params.delta_L_silhouette, np.where(crease, params.delta_L_crease, 0.0))
    lab[..., 0] = np.clip(lab[..., 0] + shift, 0.0, 1.0)
    return oklab_to_linear(lab)


def _shade_chunk(gbuffer, scene, params, sil, crease, idx):
    R = gbuffer.resolution
    dirs = face_directions(R).reshape(-1, 3)[idx]
    depth = gbuffer.depth.reshape(-1)[idx]
    points = gbuffer.origin + depth[:, None] * dirs
    lit = direct_light_batch(
        scene, points, gbuffer.normal.reshape(-1, 3)[idx], gbuffer.albedo.reshape(-1, 3)[idx]
    )
    return shade_texels(lit, sil.reshape(-1)[idx], crease.reshape(-1)[idx], params)


def shade_cubemap(gbuffer: CubemapGBuffer, scene: Scene, params: ShadingParams | None = None, workers: int = 1) -> ShadedCubemap:
    """Shade every hit texel; misses stay black and are never splatted."""
    params = params or ShadingParams()
    sil, crease = edge_masks(gbuffer, params)
    flat_hits = np.flatnonzero(gbuffer.hit_mask.reshape(-1))
    color = np.zeros((gbuffer.depth.size, 3))
    if workers > 1:
        n = gbuffer.resolution * gbuffer.resolution
        chunks = [flat_hits[(flat_hits >= f * n) & (flat_hits < (f + 1) * n)] for f in range(6)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda idx: _shade_chunk(gbuffer, scene, params, sil, crease, idx), chunks))
        for idx, part in zip(chunks, parts):
            color[idx] = part
    else:
        color[flat_hits] = _shade_chunk(gbuffer, scene, params, sil, crease, flat_hits)
    return ShadedCubemap(gbuffer, color.reshape(gbuffer.normal.shape), sil, crease)
