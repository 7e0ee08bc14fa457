"""Texel quads and their z-buffered rasterization.

Every hit texel of a shaded cubemap becomes a world-space quad whose four
corners share the texel's Chebyshev depth.  Quads are rasterized as two
triangles with perspective-correct depth.  Depth ties are broken by a
packed ``(layer, face, j, i)`` key, which makes the framebuffer independent
of submission order.
"""

from __future__ import annotations

import enum
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .camera import CameraPose
from .cubemap import FACE_AXES, face_direction, face_directions, neighbor_table
from .probes import ProbeSet, select_grid_layer
from .scene import _dot
from .shading import ShadedCubemap


class Layer(enum.IntEnum):
    NONE = 0
    GRID = 1
    PREVIOUS = 2
    EYE = 3
    DIRECT = 4  # naive per-pixel render, not a probe layer


_KEY_RADIX = 1 << 20
NO_KEY = np.iinfo(np.int64).max
# upper bound on fragments materialized at once
_FRAGMENT_CHUNK = 1 << 21


def pack_key(layer, face, j, i):
    return ((np.asarray(layer, dtype=np.int64) * 8 + face) * _KEY_RADIX + j) * _KEY_RADIX + i


@dataclass(frozen=True)
class SplatParams:
    free_expansion: float = 0.5  # s: fraction of h at depth discontinuities
    depth_similarity: float = 0.02  # eps_d, relative
    grazing_gain: float = 0.5  # kappa
    max_expansion: float = 1.0  # e_max, fraction of h
    eye_depth_bias: float = 0.05  # eps_z, relative
    cull: bool = True

    def __post_init__(self) -> None:
        vals = (self.free_expansion, self.depth_similarity, self.grazing_gain, self.max_expansion, self.eye_depth_bias)
        if min(vals) < 0.0:
            raise ValueError("splat parameters must be non-negative")
        if not self.depth_similarity < 1.0:
            raise ValueError("depth_similarity must be < 1")


@dataclass
class Framebuffer:
    width: int
    height: int
    color: np.ndarray  # (H, W, 3) linear RGB
    depth: np.ndarray  # (H, W) view-space depth, +inf where empty
    layer_mask: np.ndarray  # (H, W) Layer values
    key: np.ndarray  # (H, W) packed key of the winning quad

    @classmethod
    def cleared(cls, width: int, height: int, background=(0.0, 0.0, 0.0)) -> "Framebuffer":
        if width < 1 or height < 1:
            raise ValueError("framebuffer dimensions must be positive")
        color = np.empty((height, width, 3))
        color[:] = np.asarray(background, dtype=np.float64)
        return cls(
            width,
            height,
            color,
            np.full((height, width), np.inf),
            np.zeros((height, width), dtype=np.int8),
            np.full((height, width), NO_KEY, dtype=np.int64),
        )

    def to_rgb8(self) -> np.ndarray:
        from .imageio import linear_to_srgb8

        return linear_to_srgb8(self.color)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.color, self.depth, self.layer_mask, self.key):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


@dataclass
class Quad:
    corners: np.ndarray  # (4, 3) world space, loop order
    color: np.ndarray
    layer: Layer
    key: tuple[int, int, int]  # (face, j, i)
    depth: float


@dataclass
class QuadSet:
    """Structure-of-arrays batch of quads in canonical order."""

    layer: np.ndarray
    face: np.ndarray
    j: np.ndarray
    i: np.ndarray
    corners: np.ndarray  # (N, 4, 3)
    color: np.ndarray  # (N, 3)
    depth: np.ndarray  # (N,)

    def __len__(self) -> int:
        return len(self.face)

    @property
    def keys(self) -> np.ndarray:
        return pack_key(self.layer, self.face, self.j, self.i)

    @classmethod
    def empty(cls) -> "QuadSet":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z, np.zeros((0, 4, 3)), np.zeros((0, 3)), np.zeros(0))

    @classmethod
    def from_quads(cls, quads: list[Quad]) -> "QuadSet":
        if not quads:
            return cls.empty()
        return cls(
            np.array([int(q.layer) for q in quads], dtype=np.int64),
            np.array([q.key[0] for q in quads], dtype=np.int64),
            np.array([q.key[1] for q in quads], dtype=np.int64),
            np.array([q.key[2] for q in quads], dtype=np.int64),
            np.stack([q.corners for q in quads]),
            np.stack([q.color for q in quads]),
            np.array([q.depth for q in quads]),
        )

    def take(self, idx) -> "QuadSet":
        return QuadSet(
            self.layer[idx], self.face[idx], self.j[idx], self.i[idx], self.corners[idx], self.color[idx], self.depth[idx]
        )

    def sorted(self) -> "QuadSet":
        return self.take(np.argsort(self.keys, kind="stable"))

    def quad(self, k: int) -> Quad:
        return Quad(
            self.corners[k],
            self.color[k],
            Layer(int(self.layer[k])),
            (int(self.face[k]), int(self.j[k]), int(self.i[k])),
            float(self.depth[k]),
        )


def concat_quads(sets: list[QuadSet]) -> QuadSet:
    sets = [s for s in sets if len(s)]
    if not sets:
        return QuadSet.empty()
    return QuadSet(*(np.concatenate([getattr(s, f) for s in sets]) for f in ("layer", "face", "j", "i", "corners", "color", "depth")))


def quad_set_hash(quads: QuadSet) -> str:
    """Order-independent digest of (key, corners, color, depth) records."""
    q = quads.sorted()
    h = hashlib.sha256()
    for arr in (q.keys, q.corners, q.color, q.depth):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# quad construction


def reconstruct(origin, face, u, v, d):
    """World position for continuous face coordinates ``u, v`` in [0, 1].

    ``p = o + d / ||r||_inf * r``; the face convention already gives
    ``||r||_inf = 1``.
    """
    r = face_direction(face, 2.0 * np.asarray(u, dtype=np.float64) - 1.0, 2.0 * np.asarray(v, dtype=np.float64) - 1.0)
    inf_norm = np.max(np.abs(r), axis=-1)
    scale = np.asarray(d, dtype=np.float64) / inf_norm
    return np.asarray(origin, dtype=np.float64) + scale[..., None] * r


def edge_expansion(d, d_n, cos_theta, params: SplatParams):
    """Extra half-width (fraction of h) for the quad edge facing a neighbor.

    Depths that differ by ``depth_similarity`` or more (or a miss neighbor)
    expand freely and let the depth buffer sort out overlap.  Similar depths
    expand only as the view grazes the cubemap face: zero head-on, growing
    with ``1/|cos theta|``, capped at ``max_expansion``.
    """
    d = np.asarray(d, dtype=np.float64)
    d_n = np.asarray(d_n, dtype=np.float64)
    finite = np.isfinite(d_n)
    hi = np.maximum(d, np.where(finite, d_n, d))
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(hi > 0.0, np.abs(d - np.where(finite, d_n, d)) / np.where(hi > 0.0, hi, 1.0), 0.0)
    similar = finite & (rel < params.depth_similarity)
    c = np.maximum(np.abs(np.asarray(cos_theta, dtype=np.float64)), 0.05)
    graze = np.minimum(params.max_expansion, params.grazing_gain * (1.0 / c - 1.0))
    out = np.where(similar, graze, params.free_expansion)
    return float(out) if out.ndim == 0 else out


def view_cosines(shaded: ShadedCubemap, camera_pos, idx: np.ndarray) -> np.ndarray:
    """cos of the angle between the camera-to-texel ray and the face axis."""
    R = shaded.resolution
    gb = shaded.gbuffer
    dirs = face_directions(R).reshape(-1, 3)[idx]
    centers = gb.origin + gb.depth.reshape(-1)[idx][:, None] * dirs
    v = centers - np.asarray(camera_pos, dtype=np.float64)
    norm = np.sqrt(_dot(v, v))
    faces = idx // (R * R)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = _dot(v, FACE_AXES[faces]) / norm
    return np.where(norm > 0.0, cos, 1.0)


def texel_expansions(shaded: ShadedCubemap, idx: np.ndarray, camera_pos, params: SplatParams) -> np.ndarray:
    """Per-edge expansions ``(N, 4)`` in ``-s, +s, -t, +t`` order.

    Without a camera position the grazing term is dropped (head-on).
    """
    depth = shaded.depth.reshape(-1)
    nb = neighbor_table(shaded.resolution).reshape(4, -1)[:, idx]
    cos = np.ones(len(idx)) if camera_pos is None else view_cosines(shaded, camera_pos, idx)
    d = depth[idx]
    return np.stack([edge_expansion(d, depth[nb[k]], cos, params) for k in range(4)], axis=1)


def _corners(origin, face, i, j, d, exp, R):
    s_lo = (2.0 * i + 1.0 - (1.0 + exp[:, 0])) / R - 1.0
    s_hi = (2.0 * i + 1.0 + (1.0 + exp[:, 1])) / R - 1.0
    t_lo = (2.0 * j + 1.0 - (1.0 + exp[:, 2])) / R - 1.0
    t_hi = (2.0 * j + 1.0 + (1.0 + exp[:, 3])) / R - 1.0
    s = np.stack([s_lo, s_hi, s_hi, s_lo], axis=1)
    t = np.stack([t_lo, t_lo, t_hi, t_hi], axis=1)
    r = face_direction(face[:, None], s, t)
    return origin + d[:, None, None] * r


def probe_quads(
    shaded: ShadedCubemap,
    layer: Layer,
    camera_pos=None,
    params: SplatParams | None = None,
    mask: np.ndarray | None = None,
) -> QuadSet:
    """Quads for all hit texels of ``shaded`` (restricted by ``mask``)."""
    params = params or SplatParams()
    R = shaded.resolution
    sel = shaded.gbuffer.hit_mask.reshape(-1)
    if mask is not None:
        sel = sel & np.asarray(mask).reshape(-1)
    idx = np.flatnonzero(sel)
    face, rem = np.divmod(idx, R * R)
    j, i = np.divmod(rem, R)
    d = shaded.depth.reshape(-1)[idx]
    exp = texel_expansions(shaded, idx, camera_pos, params)
    corners = _corners(shaded.gbuffer.origin, face, i, j, d, exp, R)
    return QuadSet(
        np.full(len(idx), int(layer), dtype=np.int64),
        face,
        j,
        i,
        corners,
        shaded.color.reshape(-1, 3)[idx],
        d,
    )


def make_quad(shaded: ShadedCubemap, layer: Layer, face: int, i: int, j: int, expansions=(0.0, 0.0, 0.0, 0.0)) -> Quad:
    """One texel's quad with explicit per-edge expansions (``-s, +s, -t, +t``)."""
    R = shaded.resolution
    d = float(shaded.depth[face, j, i])
    if not math.isfinite(d):
        raise ValueError("texel is a miss and has no quad")
    exp = np.asarray(expansions, dtype=np.float64).reshape(1, 4)
    corners = _corners(shaded.gbuffer.origin, np.array([face]), np.array([i]), np.array([j]), np.array([d]), exp, R)[0]
    return Quad(corners, shaded.color[face, j, i].copy(), Layer(layer), (face, j, i), d)


def visible_mask(shaded: ShadedCubemap, camera: CameraPose, params: SplatParams | None = None) -> np.ndarray:
    """Hit texels whose center lies in the frustum grown by one texel footprint."""
    params = params or SplatParams()
    R = shaded.resolution
    gb = shaded.gbuffer
    hit = gb.hit_mask.reshape(-1)
    idx = np.flatnonzero(hit)
    d = gb.depth.reshape(-1)[idx]
    centers = gb.origin + d[:, None] * face_directions(R).reshape(-1, 3)[idx]
    h = 1.0 / R
    grow = max(2.0, 1.0 + max(params.free_expansion, params.max_expansion))
    radius = d * h * math.sqrt(2.0) * grow
    v = camera.to_view(centers)
    ty = camera.tan_half_fov
    tx = ty * camera.aspect
    ok = (v[:, 2] >= camera.near - radius) & (v[:, 2] <= camera.far + radius)
    for tan_a, comp in ((tx, 0), (ty, 1)):
        norm = math.sqrt(1.0 + tan_a * tan_a)
        ok &= (v[:, 2] * tan_a - v[:, comp]) / norm >= -radius
        ok &= (v[:, 2] * tan_a + v[:, comp]) / norm >= -radius
    out = np.zeros(hit.shape, dtype=bool)
    out[idx[ok]] = True
    return out.reshape(gb.depth.shape)


def visible(shaded: ShadedCubemap, face: int, i: int, j: int, camera: CameraPose, params: SplatParams | None = None) -> bool:
    return bool(visible_mask(shaded, camera, params)[face, j, i])


# ---------------------------------------------------------------------------
# rasterization

PixelPredicate = Callable[[np.ndarray, np.ndarray, int], np.ndarray]


def _clip_near(tri_view: np.ndarray, near: float) -> list[np.ndarray]:
    """Clip one view-space triangle against z = near; returns 0-2 triangles."""
    poly = []
    for k in range(3):
        a, b = tri_view[k], tri_view[(k + 1) % 3]
        a_in, b_in = a[2] >= near, b[2] >= near
        if a_in:
            poly.append(a)
        if a_in != b_in:
            f = (near - a[2]) / (b[2] - a[2])
            p = a + f * (b - a)
            p[2] = near
            poly.append(p)
    if len(poly) < 3:
        return []
    return [np.stack([poly[0], poly[k], poly[k + 1]]) for k in range(1, len(poly) - 1)]


def _triangles(quads: QuadSet, camera: CameraPose):
    """View-space triangles (T, 3, 3) with source quad index, near-clipped."""
    view = camera.to_view(quads.corners)  # (N, 4, 3)
    tris = np.concatenate([view[:, [0, 1, 2]], view[:, [0, 2, 3]]])
    src = np.concatenate([np.arange(len(quads)), np.arange(len(quads))])
    z = tris[:, :, 2]
    front = np.all(z >= camera.near, axis=1)
    straddle = ~front & np.any(z >= camera.near, axis=1)
    out_tris = [tris[front]]
    out_src = [src[front]]
    for k in np.flatnonzero(straddle):
        for piece in _clip_near(tris[k], camera.near):
            out_tris.append(piece[None])
            out_src.append(src[k : k + 1])
    return np.concatenate(out_tris), np.concatenate(out_src)


def _fragments(sx, sy, z, width, y0, y1):
    """Yield (triangle index, px, py, depth) for pixel centers inside triangles.

    Pixel centers sit at ``(x + 0.5, y + 0.5)``; edges are inclusive.  Depth
    is view-space z interpolated perspective-correctly (1/z is affine in
    screen space).
    """
    x0v, x1v, x2v = sx[:, 0], sx[:, 1], sx[:, 2]
    y0v, y1v, y2v = sy[:, 0], sy[:, 1], sy[:, 2]
    area = (x1v - x0v) * (y2v - y0v) - (y1v - y0v) * (x2v - x0v)
    with np.errstate(invalid="ignore"):
        xmin = np.maximum(np.ceil(np.min(sx, axis=1) - 0.5), 0)
        xmax = np.minimum(np.floor(np.max(sx, axis=1) - 0.5), width - 1)
        ymin = np.maximum(np.ceil(np.min(sy, axis=1) - 0.5), y0)
        ymax = np.minimum(np.floor(np.max(sy, axis=1) - 0.5), y1 - 1)
    nx = np.where(xmax >= xmin, xmax - xmin + 1, 0)
    ny = np.where(ymax >= ymin, ymax - ymin + 1, 0)
    ok = (area != 0.0) & np.isfinite(area)
    counts = np.where(ok, nx * ny, 0).astype(np.int64)
    xmin = np.where(ok, xmin, 0).astype(np.int64)
    ymin = np.where(ok, ymin, 0).astype(np.int64)
    nx = nx.astype(np.int64)
    live = np.flatnonzero(counts)
    if not len(live):
        return
    cum = np.cumsum(counts[live])
    start = 0
    while start < len(live):
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + _FRAGMENT_CHUNK, side="right"))
        stop = max(stop, start + 1)
        tri = live[start:stop]
        cnt = counts[tri]
        total = int(cnt.sum())
        owner = np.repeat(tri, cnt)
        offs = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        px = xmin[owner] + offs % nx[owner]
        py = ymin[owner] + offs // nx[owner]
        cx = px + 0.5
        cy = py + 0.5
        ax, ay = x0v[owner], y0v[owner]
        bx, by = x1v[owner], y1v[owner]
        qx, qy = x2v[owner], y2v[owner]
        w0 = (qx - bx) * (cy - by) - (qy - by) * (cx - bx)
        w1 = (ax - qx) * (cy - qy) - (ay - qy) * (cx - qx)
        w2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        a = area[owner]
        sgn = np.sign(a)
        inside = (w0 * sgn >= 0.0) & (w1 * sgn >= 0.0) & (w2 * sgn >= 0.0)
        owner, px, py = owner[inside], px[inside], py[inside]
        a = a[inside]
        zz = z[owner]
        inv_z = (w0[inside] / a) / zz[:, 0] + (w1[inside] / a) / zz[:, 1] + (w2[inside] / a) / zz[:, 2]
        yield owner, px, py, 1.0 / inv_z
        start = stop


def _resolve(fb: Framebuffer, pix, depth, key, color, layer, y0, y1) -> None:
    """Write the (depth, key)-minimal fragment per pixel if it beats the buffer."""
    if not len(pix):
        return
    order = np.lexsort((key, depth, pix))
    pix, depth, key = pix[order], depth[order], key[order]
    first = np.ones(len(pix), dtype=bool)
    first[1:] = pix[1:] != pix[:-1]
    pix, depth, key = pix[first], depth[first], key[first]
    src = order[first]
    flat_depth = fb.depth.reshape(-1)
    flat_key = fb.key.reshape(-1)
    cur_d = flat_depth[pix]
    win = (depth < cur_d) | ((depth == cur_d) & (key < flat_key[pix]))
    pix, src = pix[win], src[win]
    flat_depth[pix] = depth[win]
    flat_key[pix] = key[win]
    fb.color.reshape(-1, 3)[pix] = color[src]
    fb.layer_mask.reshape(-1)[pix] = layer[src]


def _raster_band(fb, sx, sy, z, tri_key, tri_color, tri_layer, depth_scale, predicate, camera, y0, y1):
    pix_l, dep_l, key_l, col_l, lay_l = [], [], [], [], []
    for owner, px, py, depth in _fragments(sx, sy, z, fb.width, y0, y1):
        depth = depth * depth_scale[owner]
        keep = (depth >= camera.near) & (depth <= camera.far)
        if predicate is not None:
            keep &= predicate(px, py, tri_layer[owner])
        owner = owner[keep]
        pix_l.append(py[keep] * fb.width + px[keep])
        dep_l.append(depth[keep])
        key_l.append(tri_key[owner])
        col_l.append(tri_color[owner])
        lay_l.append(tri_layer[owner])
    if pix_l:
        _resolve(
            fb,
            np.concatenate(pix_l),
            np.concatenate(dep_l),
            np.concatenate(key_l),
            np.concatenate(col_l),
            np.concatenate(lay_l),
            y0,
            y1,
        )


def rasterize_quads(
    quads: QuadSet,
    camera: CameraPose,
    fb: Framebuffer,
    pixel_predicate: PixelPredicate | None = None,
    depth_scale: float | np.ndarray = 1.0,
    workers: int = 1,
) -> None:
    """Z-buffer ``quads`` into ``fb`` in place.

    A fragment lands iff ``pixel_predicate(x, y, layer)`` holds and its
    ``(depth * depth_scale, key)`` is lexicographically below the stored
    pair.  With ``workers > 1`` the screen is split into row bands rendered
    concurrently; each band owns its pixels so the result is identical.
    """
    if not len(quads):
        return
    tris, src = _triangles(quads, camera)
    if not len(tris):
        return
    sx, sy = camera.view_to_screen(tris, fb.width, fb.height)
    z = tris[:, :, 2]
    scale = np.broadcast_to(np.asarray(depth_scale, dtype=np.float64), (len(quads),))[src]
    keys = quads.keys[src]
    colors = quads.color[src]
    layers = quads.layer[src]
    args = (sx, sy, z, keys, colors, layers, scale, pixel_predicate, camera)
    if workers > 1:
        step = -(-fb.height // workers)
        bands = [(y, min(y + step, fb.height)) for y in range(0, fb.height, step)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: _raster_band(fb, *args, *b), bands))
    else:
        _raster_band(fb, *args, 0, fb.height)


def rasterize_quad(quad: Quad, camera: CameraPose, fb: Framebuffer, pixel_predicate: PixelPredicate | None = None, depth_scale: float = 1.0) -> None:
    rasterize_quads(QuadSet.from_quads([quad]), camera, fb, pixel_predicate, depth_scale)


# ---------------------------------------------------------------------------


def grid_predicate(t: float, want_new: bool) -> PixelPredicate:
    def pred(x, y, layer):
        sel = select_grid_layer(x, y, t)
        return sel if want_new else ~sel

    return pred


def frame_layers(probe_set: ProbeSet):
    """(layer, shaded cubemap, predicate, depth scale factor) in splat order."""
    t = probe_set.transition_progress
    grid_ok = probe_set.grid.valid
    prev_ok = probe_set.previous.valid
    out = []
    if grid_ok:
        out.append((Layer.GRID, probe_set.grid.shaded, grid_predicate(t, True) if prev_ok else None, False))
    if prev_ok:
        # until the new grid probe is captured the previous one covers everything
        out.append((Layer.PREVIOUS, probe_set.previous.shaded, grid_predicate(t, False) if grid_ok else None, False))
    if probe_set.eye.valid:
        out.append((Layer.EYE, probe_set.eye.shaded, None, True))
    return out


def frame_quads(probe_set: ProbeSet, camera: CameraPose, params: SplatParams | None = None, cull: bool | None = None) -> QuadSet:
    """All quads a frame would splat, in canonical order."""
    params = params or SplatParams()
    cull = params.cull if cull is None else cull
    sets = []
    for layer, shaded, _, _ in frame_layers(probe_set):
        mask = visible_mask(shaded, camera, params) if cull else None
        sets.append(probe_quads(shaded, layer, camera.position, params, mask))
    return concat_quads(sets)


def render_frame(
    probe_set: ProbeSet,
    camera: CameraPose,
    params: SplatParams | None = None,
    dims: tuple[int, int] = (320, 240),
    background=(0.0, 0.0, 0.0),
    workers: int = 1,
) -> Framebuffer:
    """Splat grid, previous (Bayer-crossfaded) and eye layers into a new frame."""
    params = params or SplatParams()
    width, height = dims
    fb = Framebuffer.cleared(width, height, background)
    for layer, shaded, pred, biased in frame_layers(probe_set):
        mask = visible_mask(shaded, camera, params) if params.cull else None
        quads = probe_quads(shaded, layer, camera.position, params, mask)
        scale = 1.0 + params.eye_depth_bias if biased else 1.0
        rasterize_quads(quads, camera, fb, pred, scale, workers=workers)
    return fb
