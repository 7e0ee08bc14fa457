"""Scene description, ray queries and the JSON scene format.

Geometry is kept deliberately small: spheres, axis-aligned boxes and
triangles.  All queries are vectorized over batches of rays with numpy;
the scalar helpers (:func:`intersect`, :func:`occluded`) are thin wrappers
around the batched versions so both paths agree bit-for-bit.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence, Union

import numpy as np

# Offset along the surface normal applied before tracing shadow rays.
EPS_SHADOW = 1e-4
# Hits closer than this in t count as ties; the lower primitive index wins.
TIE_EPS = 1e-12

Vec3 = tuple[float, float, float]


class SceneError(ValueError):
    """Raised for malformed or invalid scene documents.

    ``field`` names the offending entry (``primitives[2].radius``) and
    ``line`` the source line for JSON syntax errors, when known.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if field is not None:
            prefix.append(field)
        super().__init__(f"{': '.join(prefix)}: {message}" if prefix else message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class Material:
    albedo: Vec3


@dataclass(frozen=True)
class Light:
    kind: str  # "directional" | "point"
    color: Vec3
    direction: Vec3 | None = None  # direction light travels (directional)
    position: Vec3 | None = None
    attenuation: Vec3 = (1.0, 0.0, 0.0)  # constant, linear, quadratic


@dataclass(frozen=True)
class Sphere:
    center: Vec3
    radius: float


@dataclass(frozen=True)
class Box:
    min: Vec3
    max: Vec3


@dataclass(frozen=True)
class Triangle:
    v0: Vec3
    v1: Vec3
    v2: Vec3


Shape = Union[Sphere, Box, Triangle]


@dataclass(frozen=True)
class Primitive:
    shape: Shape
    object_id: int
    material: int


@dataclass(frozen=True)
class Scene:
    primitives: tuple[Primitive, ...] = ()
    materials: tuple[Material, ...] = ()
    lights: tuple[Light, ...] = ()
    ambient: Vec3 = (0.0, 0.0, 0.0)
    background: Vec3 = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        validate_scene(self)

    @functools.cached_property
    def key(self) -> str:
        """Content hash; two scenes with equal keys shade identically."""
        return hashlib.sha256(scene_to_json(self).encode()).hexdigest()

    @functools.cached_property
    def bounds(self) -> np.ndarray:
        """Bounding sphere ``(cx, cy, cz, r)`` of each primitive."""
        return np.array([_bounding_sphere(p.shape) for p in self.primitives], dtype=np.float64).reshape(-1, 4)

    @functools.cached_property
    def albedo_table(self) -> np.ndarray:
        if not self.materials:
            return np.zeros((0, 3))
        return np.array([m.albedo for m in self.materials], dtype=np.float64)


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = math.inf

    def __post_init__(self) -> None:
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        if not 0.0 <= self.t_min < self.t_max:
            raise ValueError(f"invalid ray interval [{self.t_min}, {self.t_max}]")
        if abs(float(np.sqrt(_dot(self.direction, self.direction))) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")


@dataclass
class Hit:
    t: float
    position: np.ndarray
    normal: np.ndarray
    object_id: int
    material: int
    primitive: int = field(default=-1)


@dataclass
class HitBatch:
    """Nearest hits for a batch of rays; ``primitive == -1`` marks a miss."""

    t: np.ndarray
    position: np.ndarray
    normal: np.ndarray
    primitive: np.ndarray
    object_id: np.ndarray
    material: np.ndarray

    @property
    def hit(self) -> np.ndarray:
        return self.primitive >= 0


# --------------------------------------------------------------------------
# vector helpers (explicit component sums keep results independent of batch
# size; BLAS-backed products are not guaranteed to be)


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        axis=-1,
    )


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.sqrt(_dot(v, v))[..., None]


def _face_ray(normal: np.ndarray, direction: np.ndarray) -> np.ndarray:
    flip = _dot(normal, direction) > 0.0
    return np.where(flip[..., None], -normal, normal)


def _bounding_sphere(shape) -> tuple[float, float, float, float]:
    if isinstance(shape, Sphere):
        return (*shape.center, shape.radius)
    if isinstance(shape, Box):
        lo, hi = np.asarray(shape.min), np.asarray(shape.max)
    else:
        pts = np.array([shape.v0, shape.v1, shape.v2])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
    c = (lo + hi) * 0.5
    return (*c, float(np.linalg.norm(hi - c)))


def _candidates(bound: np.ndarray, o, d, t_min, t_max) -> np.ndarray:
    """Indices of rays that may touch the bounding sphere (conservative)."""
    oc = bound[:3] - o
    b = _dot(oc, d)
    oc2 = _dot(oc, oc)
    r = bound[3] * (1.0 + 1e-7) + 1e-9
    near_line = oc2 - b * b <= r * r + 1e-12 * oc2
    return np.flatnonzero(near_line & (b + r >= t_min) & (b - r <= t_max))


# --------------------------------------------------------------------------
# per-shape intersection; each returns (t, normal, position) with t=inf on miss


def _hit_sphere(s: Sphere, o, d, t_min, t_max):
    c = np.asarray(s.center)
    oc = o - c
    b = _dot(oc, d)
    cc = _dot(oc, oc) - s.radius * s.radius
    disc = b * b - cc
    sq = np.sqrt(np.maximum(disc, 0.0))
    t0 = -b - sq
    t1 = -b + sq
    ok0 = (disc >= 0.0) & (t0 >= t_min) & (t0 <= t_max)
    ok1 = (disc >= 0.0) & (t1 >= t_min) & (t1 <= t_max)
    t = np.where(ok0, t0, np.where(ok1, t1, np.inf))
    tt = np.where(np.isfinite(t), t, 0.0)
    p = o + tt[:, None] * d
    n = _face_ray(_normalize(p - c), d)
    return t, n, p


def _hit_box(bx: Box, o, d, t_min, t_max):
    bmin = np.asarray(bx.min)
    bmax = np.asarray(bx.max)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (bmin - o) / d
        t2 = (bmax - o) / d
    parallel = d == 0.0
    inside = (o >= bmin) & (o <= bmax)
    lo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    hi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    k_near = np.argmax(lo, axis=1)
    k_far = np.argmin(hi, axis=1)
    rows = np.arange(len(o))
    t_near = lo[rows, k_near]
    t_far = hi[rows, k_far]
    overlap = t_near <= t_far
    use_near = overlap & (t_near >= t_min) & (t_near <= t_max)
    use_far = overlap & ~use_near & (t_far >= t_min) & (t_far <= t_max)
    t = np.where(use_near, t_near, np.where(use_far, t_far, np.inf))
    axis = np.where(use_near, k_near, k_far)
    d_axis = d[rows, axis]
    # entering through the near slab plane, or leaving through the far one
    toward_pos = (d_axis > 0.0) == use_near
    plane = np.where(toward_pos, bmin[axis], bmax[axis])
    tt = np.where(np.isfinite(t), t, 0.0)
    p = o + tt[:, None] * d
    p[rows, axis] = np.where(np.isfinite(t), plane, p[rows, axis])
    n = np.zeros_like(o)
    n[rows, axis] = np.where(d_axis > 0.0, -1.0, 1.0)
    return t, n, p


def _hit_triangle(tri: Triangle, o, d, t_min, t_max):
    v0 = np.asarray(tri.v0)
    e1 = np.asarray(tri.v1) - v0
    e2 = np.asarray(tri.v2) - v0
    pvec = _cross(d, np.broadcast_to(e2, d.shape))
    det = _dot(pvec, e1)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = o - v0
    u = _dot(tvec, pvec) * inv
    qvec = _cross(tvec, np.broadcast_to(e1, d.shape))
    v = _dot(d, qvec) * inv
    t = _dot(qvec, np.broadcast_to(e2, d.shape)) * inv
    ok &= (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t >= t_min) & (t <= t_max)
    t = np.where(ok, t, np.inf)
    tt = np.where(ok, t, 0.0)
    p = o + tt[:, None] * d
    n_geo = _normalize(_cross(e1, e2))
    n = _face_ray(np.broadcast_to(n_geo, d.shape), d)
    return t, n, p


_SHAPE_FN = {Sphere: _hit_sphere, Box: _hit_box, Triangle: _hit_triangle}


def hit_primitive(prim: Primitive, origins, directions, t_min=0.0, t_max=math.inf):
    """Intersect a batch of rays with one primitive; t is +inf on miss."""
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    return _SHAPE_FN[type(prim.shape)](prim.shape, o, d, t_min, t_max)


def intersect_batch(scene: Scene, origins, directions, t_min=0.0, t_max=math.inf) -> HitBatch:
    """Nearest hit for each ray (rows of ``origins``/``directions``).

    ``t_min``/``t_max`` may be scalars or per-ray arrays.  Primitives are
    scanned in list order; a later primitive replaces the current best only
    when it is nearer by more than ``TIE_EPS``.
    """
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    n_rays = len(o)
    t_min = np.broadcast_to(np.asarray(t_min, dtype=np.float64), (n_rays,))
    t_max = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n_rays,))
    best_t = np.full(n_rays, np.inf)
    best_n = np.zeros((n_rays, 3))
    best_p = np.zeros((n_rays, 3))
    best_i = np.full(n_rays, -1, dtype=np.int64)
    bounds = scene.bounds
    for idx, prim in enumerate(scene.primitives):
        cand = _candidates(bounds[idx], o, d, t_min, t_max)
        if not len(cand):
            continue
        t, n, p = _SHAPE_FN[type(prim.shape)](prim.shape, o[cand], d[cand], t_min[cand], t_max[cand])
        better = t < best_t[cand] - TIE_EPS
        sel = cand[better]
        best_t[sel] = t[better]
        best_n[sel] = n[better]
        best_p[sel] = p[better]
        best_i[sel] = idx
    obj = np.array([p.object_id for p in scene.primitives] + [0], dtype=np.int64)
    mat = np.array([p.material for p in scene.primitives] + [-1], dtype=np.int64)
    return HitBatch(best_t, best_p, best_n, best_i, obj[best_i], mat[best_i])


def intersect(scene: Scene, ray: Ray) -> Hit | None:
    """Nearest hit along ``ray`` within ``[t_min, t_max]``, or None."""
    hb = intersect_batch(scene, ray.origin[None], ray.direction[None], ray.t_min, ray.t_max)
    if hb.primitive[0] < 0:
        return None
    return Hit(
        t=float(hb.t[0]),
        position=hb.position[0],
        normal=hb.normal[0],
        object_id=int(hb.object_id[0]),
        material=int(hb.material[0]),
        primitive=int(hb.primitive[0]),
    )


def shadow_rays(points, normals, light: Light):
    """Origins, unit directions and t_max of shadow rays toward ``light``."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    origins = p + EPS_SHADOW * n
    if light.kind == "directional":
        to_light = -np.broadcast_to(np.asarray(light.direction, dtype=np.float64), p.shape)
        return origins, np.array(to_light), np.full(len(p), np.inf)
    delta = np.asarray(light.position, dtype=np.float64) - origins
    dist = np.sqrt(_dot(delta, delta))
    safe = np.where(dist > 0.0, dist, 1.0)
    return origins, delta / safe[:, None], dist


def occluded_batch(scene: Scene, points, normals, light: Light) -> np.ndarray:
    origins, dirs, t_max = shadow_rays(points, normals, light)
    blocked = intersect_batch(scene, origins, dirs, 0.0, t_max).hit
    # a light sitting exactly on the biased point has no segment to block
    return blocked & (t_max > 0.0)


def occluded(scene: Scene, point, light: Light, normal=None) -> bool:
    """True if geometry blocks the shadow ray from ``point`` to ``light``.

    ``normal`` is the surface normal at ``point``; the ray starts at
    ``point + EPS_SHADOW * normal``.  Without a normal no bias is applied.
    """
    n = np.zeros(3) if normal is None else np.asarray(normal, dtype=np.float64)
    return bool(occluded_batch(scene, np.asarray(point, dtype=np.float64)[None], n[None], light)[0])


# --------------------------------------------------------------------------
# validation and the JSON format


def _finite(v: Sequence[float]) -> bool:
    return all(math.isfinite(x) for x in v)


def validate_scene(scene: Scene) -> None:
    for k, m in enumerate(scene.materials):
        if len(m.albedo) != 3 or not all(0.0 <= c <= 1.0 for c in m.albedo):
            raise SceneError("albedo channels must lie in [0, 1]", f"materials[{k}].albedo")
    for k, prim in enumerate(scene.primitives):
        where = f"primitives[{k}]"
        if not 0 <= prim.material < len(scene.materials):
            raise SceneError(f"material index {prim.material} out of range", f"{where}.material")
        if prim.object_id < 1:
            raise SceneError("object_id must be >= 1", f"{where}.object_id")
        s = prim.shape
        if isinstance(s, Sphere):
            if not s.radius > 0.0 or not math.isfinite(s.radius):
                raise SceneError("radius must be positive", f"{where}.radius")
            if not _finite(s.center):
                raise SceneError("non-finite center", f"{where}.center")
        elif isinstance(s, Box):
            if not (_finite(s.min) and _finite(s.max)):
                raise SceneError("non-finite bounds", f"{where}.min")
            if not all(a < b for a, b in zip(s.min, s.max)):
                raise SceneError("box min must be < max componentwise", f"{where}.min")
        else:
            verts = np.array([s.v0, s.v1, s.v2], dtype=np.float64)
            if not np.all(np.isfinite(verts)):
                raise SceneError("non-finite vertex", f"{where}.v0")
            area2 = np.linalg.norm(np.cross(verts[1] - verts[0], verts[2] - verts[0]))
            if not area2 > 0.0:
                raise SceneError("degenerate triangle", f"{where}.v0")
    for k, light in enumerate(scene.lights):
        where = f"lights[{k}]"
        if not _finite(light.color) or min(light.color) < 0.0:
            raise SceneError("color must be finite and >= 0", f"{where}.color")
        if light.kind == "directional":
            if light.direction is None or not _finite(light.direction):
                raise SceneError("missing direction", f"{where}.direction")
            if abs(math.sqrt(sum(c * c for c in light.direction)) - 1.0) > 1e-9:
                raise SceneError("direction must be unit length", f"{where}.direction")
        elif light.kind == "point":
            if light.position is None or not _finite(light.position):
                raise SceneError("missing position", f"{where}.position")
            att = light.attenuation
            if min(att) < 0.0 or max(att) == 0.0:
                raise SceneError("attenuation must be >= 0 and not all zero", f"{where}.attenuation")
        else:
            raise SceneError(f"unknown light kind {light.kind!r}", f"{where}.kind")
    for name in ("ambient", "background"):
        v = getattr(scene, name)
        if len(v) != 3 or not _finite(v):
            raise SceneError("expected 3 finite numbers", name)


def _vec(obj: dict, key: str, where: str, default=None) -> Vec3:
    if key not in obj:
        if default is not None:
            return default
        raise SceneError("missing field", f"{where}.{key}" if where else key)
    v = obj[key]
    if (
        not isinstance(v, list)
        or len(v) != 3
        or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)
    ):
        raise SceneError("expected a list of 3 numbers", f"{where}.{key}" if where else key)
    return (float(v[0]), float(v[1]), float(v[2]))


def _num(obj: dict, key: str, where: str) -> float:
    if key not in obj:
        raise SceneError("missing field", f"{where}.{key}")
    v = obj[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise SceneError("expected a number", f"{where}.{key}")
    return float(v)


def _int(obj: dict, key: str, where: str) -> int:
    v = obj.get(key)
    if not isinstance(v, int) or isinstance(v, bool):
        raise SceneError("expected an integer", f"{where}.{key}")
    return v


def _unit(v: Vec3) -> Vec3:
    norm = math.sqrt(sum(c * c for c in v))
    if norm == 0.0:
        return v
    if abs(norm - 1.0) <= 1e-12:
        return v
    return (v[0] / norm, v[1] / norm, v[2] / norm)


def scene_from_dict(doc: dict[str, Any]) -> Scene:
    if not isinstance(doc, dict):
        raise SceneError("scene document must be a JSON object")
    materials = []
    for k, m in enumerate(doc.get("materials", [])):
        materials.append(Material(_vec(m, "albedo", f"materials[{k}]")))
    prims = []
    for k, p in enumerate(doc.get("primitives", [])):
        where = f"primitives[{k}]"
        kind = p.get("shape")
        if kind == "sphere":
            shape: Shape = Sphere(_vec(p, "center", where), _num(p, "radius", where))
        elif kind == "box":
            shape = Box(_vec(p, "min", where), _vec(p, "max", where))
        elif kind == "triangle":
            shape = Triangle(_vec(p, "v0", where), _vec(p, "v1", where), _vec(p, "v2", where))
        else:
            raise SceneError(f"unknown shape {kind!r}", f"{where}.shape")
        prims.append(Primitive(shape, _int(p, "object_id", where), _int(p, "material", where)))
    lights = []
    for k, lt in enumerate(doc.get("lights", [])):
        where = f"lights[{k}]"
        kind = lt.get("kind")
        color = _vec(lt, "color", where)
        if kind == "directional":
            lights.append(Light("directional", color, direction=_unit(_vec(lt, "direction", where))))
        elif kind == "point":
            att = _vec(lt, "attenuation", where, default=(1.0, 0.0, 0.0))
            lights.append(Light("point", color, position=_vec(lt, "position", where), attenuation=att))
        else:
            raise SceneError(f"unknown light kind {kind!r}", f"{where}.kind")
    return Scene(
        primitives=tuple(prims),
        materials=tuple(materials),
        lights=tuple(lights),
        ambient=_vec(doc, "ambient", "", default=(0.0, 0.0, 0.0)),
        background=_vec(doc, "background", "", default=(0.0, 0.0, 0.0)),
    )


def parse_scene(text: str) -> Scene:
    """Parse a JSON scene document; raises :class:`SceneError`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(exc.msg, line=exc.lineno) from exc
    return scene_from_dict(doc)


def load_scene(path) -> Scene:
    with open(path, encoding="utf-8") as fh:
        return parse_scene(fh.read())


def scene_to_dict(scene: Scene) -> dict[str, Any]:
    prims = []
    for p in scene.primitives:
        s = p.shape
        if isinstance(s, Sphere):
            d: dict[str, Any] = {"shape": "sphere", "center": list(s.center), "radius": s.radius}
        elif isinstance(s, Box):
            d = {"shape": "box", "min": list(s.min), "max": list(s.max)}
        else:
            d = {"shape": "triangle", "v0": list(s.v0), "v1": list(s.v1), "v2": list(s.v2)}
        d["object_id"] = p.object_id
        d["material"] = p.material
        prims.append(d)
    lights = []
    for lt in scene.lights:
        if lt.kind == "directional":
            lights.append({"kind": "directional", "direction": list(lt.direction), "color": list(lt.color)})
        else:
            lights.append(
                {
                    "kind": "point",
                    "position": list(lt.position),
                    "color": list(lt.color),
                    "attenuation": list(lt.attenuation),
                }
            )
    return {
        "materials": [{"albedo": list(m.albedo)} for m in scene.materials],
        "primitives": prims,
        "lights": lights,
        "ambient": list(scene.ambient),
        "background": list(scene.background),
    }


def scene_to_json(scene: Scene) -> str:
    # repr-exact floats: json emits the shortest round-tripping form
    return json.dumps(scene_to_dict(scene), indent=2)
