import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import single_sphere, unit
from texelsplat.scene import (
    Box,
    Light,
    Material,
    Primitive,
    Ray,
    Scene,
    SceneError,
    Sphere,
    Triangle,
    intersect,
    intersect_batch,
    occluded,
    parse_scene,
    scene_from_dict,
    scene_to_dict,
    scene_to_json,
)


def test_sphere_head_on():
    h = intersect(single_sphere(), Ray([0, 0, 0], [0, 0, -1]))
    assert h.t == pytest.approx(4.0, abs=1e-12)
    np.testing.assert_allclose(h.position, [0, 0, -4], atol=1e-12)
    np.testing.assert_allclose(h.normal, [0, 0, 1], atol=1e-12)
    assert h.object_id == 1


def test_sphere_miss_and_empty_scene():
    assert intersect(single_sphere(), Ray([0, 0, 0], [0, 0, 1])) is None
    assert intersect(Scene(), Ray([0, 0, 0], [1, 0, 0])) is None


def test_ray_inside_sphere_hits_far_side():
    h = intersect(single_sphere(center=(0, 0, 0), radius=2.0), Ray([0, 0, 0], [1, 0, 0]))
    assert h.t == pytest.approx(2.0)


def test_box_face_hit_is_on_plane():
    scene = Scene(primitives=(Primitive(Box((-1, -1, -6), (1, 1, -4)), 5, 0),), materials=(Material((1, 1, 1)),))
    h = intersect(scene, Ray([0.3, 0.2, 0], unit([0.01, 0.02, -1])))
    assert h.position[2] == -4.0
    np.testing.assert_array_equal(h.normal, [0, 0, 1])


def test_triangle_hit_and_edge_miss():
    tri = Triangle((-1, -1, -3), (1, -1, -3), (0, 1, -3))
    scene = Scene(primitives=(Primitive(tri, 2, 0),), materials=(Material((1, 1, 1)),))
    h = intersect(scene, Ray([0, 0, 0], [0, 0, -1]))
    assert h.t == pytest.approx(3.0)
    assert intersect(scene, Ray([5, 0, 0], [0, 0, -1])) is None


def test_ray_validation():
    with pytest.raises(ValueError):
        Ray([0, 0, 0], [0, 0, 2])
    with pytest.raises(ValueError):
        Ray([0, 0, 0], [0, 0, 1], t_min=1.0, t_max=0.5)


def _random_scene(rng, n=12):
    prims = []
    for k in range(n):
        kind = k % 3
        c = rng.uniform(-4, 4, 3)
        if kind == 0:
            shape = Sphere(tuple(c), float(rng.uniform(0.2, 1.0)))
        elif kind == 1:
            e = rng.uniform(0.1, 0.8, 3)
            shape = Box(tuple(c - e), tuple(c + e))
        else:
            shape = Triangle(*(tuple(c + rng.uniform(-1, 1, 3)) for _ in range(3)))
        prims.append(Primitive(shape, k + 1, 0))
    return Scene(primitives=tuple(prims), materials=(Material((0.5, 0.5, 0.5)),))


def _oracle_t(shape, o, d):
    """Scalar reference intersection, written independently of the library."""
    if isinstance(shape, Sphere):
        oc = o - np.asarray(shape.center)
        b = oc @ d
        c = oc @ oc - shape.radius**2
        disc = b * b - c
        if disc < 0:
            return math.inf
        for t in (-b - math.sqrt(disc), -b + math.sqrt(disc)):
            if t > 0:
                return t
        return math.inf
    if isinstance(shape, Box):
        lo, hi = -math.inf, math.inf
        for k in range(3):
            if d[k] == 0:
                if not shape.min[k] <= o[k] <= shape.max[k]:
                    return math.inf
                continue
            a, b = (shape.min[k] - o[k]) / d[k], (shape.max[k] - o[k]) / d[k]
            lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
        if lo > hi or hi <= 0:
            return math.inf
        return lo if lo > 0 else hi
    v0, v1, v2 = (np.asarray(v) for v in (shape.v0, shape.v1, shape.v2))
    n = np.cross(v1 - v0, v2 - v0)
    denom = n @ d
    if abs(denom) < 1e-15:
        return math.inf
    t = (n @ (v0 - o)) / denom
    if t <= 0:
        return math.inf
    p = o + t * d
    for a, b in ((v0, v1), (v1, v2), (v2, v0)):
        if np.cross(b - a, p - a) @ n < -1e-12:
            return math.inf
    return t


def test_batch_matches_scalar_oracle():
    rng = np.random.default_rng(3)
    scene = _random_scene(rng)
    origins = rng.uniform(-6, 6, (1000, 3))
    dirs = rng.normal(size=(1000, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    hb = intersect_batch(scene, origins, dirs)
    best = np.array([min(_oracle_t(p.shape, o, d) for p in scene.primitives) for o, d in zip(origins, dirs)])
    np.testing.assert_array_equal(np.isfinite(best), hb.hit)
    np.testing.assert_allclose(hb.t[hb.hit], best[hb.hit], rtol=0, atol=1e-9)
    np.testing.assert_allclose(hb.position[hb.hit], origins[hb.hit] + best[hb.hit, None] * dirs[hb.hit], atol=1e-8)
    for k in np.flatnonzero(hb.hit)[:50]:
        h = intersect(scene, Ray(origins[k], dirs[k]))
        assert h.primitive == hb.primitive[k]
        assert h.t == hb.t[k]


def test_occluded_examples():
    scene = single_sphere()
    down = Light("directional", (1, 1, 1), direction=(0, -1, 0))
    assert occluded(scene, [0, -3, -5], down)
    assert not occluded(scene, [3, -3, -5], down)
    point = Light("point", (1, 1, 1), position=(0, 0, -8))
    assert occluded(scene, [0, 0, 0], point)
    # a point beyond the light is not shadowed by geometry behind it
    assert not occluded(scene, [0, 0, -9], point)


def test_occluded_agrees_with_intersect():
    rng = np.random.default_rng(9)
    scene = _random_scene(rng)
    light = Light("point", (1, 1, 1), position=(0.0, 7.0, 0.0))
    for p in rng.uniform(-5, 5, (200, 3)):
        to_l = np.asarray(light.position) - p
        dist = float(np.linalg.norm(to_l))
        h = intersect(scene, Ray(p, to_l / dist, 1e-4, dist))
        assert occluded(scene, p, light) == (h is not None)


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.99, 0.99), st.floats(-0.99, 0.99))
def test_no_self_intersection_off_surface(a, b):
    scene = single_sphere()
    d = unit([a, b, -1.0])
    h = intersect(scene, Ray([0, 0, 0], d))
    if h is None:
        return
    out = unit(h.normal + 0.3 * np.array([0.0, 1.0, 0.0]))
    if out @ h.normal <= 0:
        return
    again = intersect(scene, Ray(h.position + 1e-4 * h.normal, out))
    assert again is None or again.t > 1e-3


def test_parse_round_trip(village):
    text = scene_to_json(village)
    again = parse_scene(text)
    assert again == village
    assert again.key == village.key


def test_parse_reports_line_of_bad_json():
    with pytest.raises(SceneError) as err:
        parse_scene('{\n "primitives": [\n  {"shape": \n}')
    assert err.value.line is not None


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d["primitives"][0].update(radius=-1.0), "radius"),
        (lambda d: d["primitives"][0].update(material=7), "material"),
        (lambda d: d["primitives"][0].update(object_id=0), "object_id"),
        (lambda d: d["primitives"][0].update(shape="torus"), "shape"),
    ],
)
def test_validation_errors_name_the_field(mutate, field):
    doc = scene_to_dict(single_sphere())
    mutate(doc)
    with pytest.raises(SceneError) as err:
        scene_from_dict(doc)
    assert field in str(err.value)


def test_degenerate_triangle_rejected():
    doc = {
        "materials": [{"albedo": [1, 1, 1]}],
        "primitives": [{"shape": "triangle", "v0": [0, 0, 0], "v1": [1, 1, 1], "v2": [2, 2, 2], "object_id": 1, "material": 0}],
    }
    with pytest.raises(SceneError):
        scene_from_dict(doc)


def test_scene_key_changes_with_content():
    a = single_sphere()
    b = single_sphere(radius=1.5)
    assert a.key != b.key
    assert a.key == single_sphere().key
    json.loads(scene_to_json(a))
