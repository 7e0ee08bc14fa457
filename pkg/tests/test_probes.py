from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import single_sphere
from texelsplat.probes import (
    BAYER4,
    ProbeParams,
    ProbeSet,
    bayer4,
    bayer_matrix,
    select_grid_layer,
    snap_origin,
    step,
)
from texelsplat.scene import Light


def test_snap_examples():
    np.testing.assert_array_equal(snap_origin([1.2, 3.7, -0.4], 1.0), [1, 4, 0])
    np.testing.assert_array_equal(snap_origin([0.5, 0, 0], 1.0), [1, 0, 0])
    np.testing.assert_array_equal(snap_origin([-0.5, -1.5, 2.0], 1.0), [0, -1, 2])
    assert not np.signbit(snap_origin([-0.1, 0, 0], 1.0)).any()
    with pytest.raises(ValueError):
        snap_origin([0, 0, 0], 0.0)


@given(st.tuples(*[st.floats(-1e4, 1e4)] * 3), st.sampled_from([0.25, 1.0, 4.0, 3.3]))
def test_snap_idempotent(p, cell):
    s = snap_origin(p, cell)
    np.testing.assert_array_equal(snap_origin(s, cell), s)
    assert np.all(np.abs(s - np.asarray(p)) <= cell / 2 + 1e-9 * max(1.0, np.abs(p).max()))


def test_bayer_recursive_construction():
    def recursive(n):
        if n == 1:
            return np.zeros((1, 1), dtype=int)
        b = recursive(n // 2)
        return np.block([[4 * b, 4 * b + 2], [4 * b + 3, 4 * b + 1]])

    np.testing.assert_array_equal(BAYER4, recursive(4))
    np.testing.assert_array_equal(bayer_matrix(8), recursive(8))
    assert sorted(BAYER4.ravel()) == list(range(16))
    assert bayer4(0, 0) == 0 and bayer4(1, 1) == 4
    assert bayer4(-3, 5) == bayer4(1, 1)


def test_select_grid_layer_counts():
    x, y = np.meshgrid(np.arange(4), np.arange(4))
    assert not select_grid_layer(x, y, 0.0).any()
    assert select_grid_layer(x, y, 1.0).all()
    assert select_grid_layer(x, y, 0.5).sum() == 8
    prev = select_grid_layer(x, y, 0.0)
    for t in np.linspace(0, 1, 101):
        cur = select_grid_layer(x, y, t)
        assert np.all(cur | ~prev)  # supersets
        prev = cur


PARAMS = ProbeParams(face_res=8, cell_size=1.0, transition_frames=16)


def test_step_stays_in_cell():
    scene = single_sphere()
    ps = ProbeSet.empty(PARAMS)
    origins = []
    for k, x in enumerate(np.linspace(-0.4, 0.4, 6)):
        ps = step(ps, scene, [x, 0.1, 0.2], PARAMS)
        origins.append(ps.grid.origin.copy())
    assert all(np.array_equal(o, [0, 0, 0]) for o in origins)
    assert ps.transition_frames_left == 0 and not ps.previous.valid


def test_step_crossing_starts_transition():
    scene = single_sphere()
    ps = step(ProbeSet.empty(PARAMS), scene, [0.1, 0, 0], PARAMS)
    old = ps.grid
    ps = step(ps, scene, [0.9, 0, 0], PARAMS)
    assert "transition_start" in ps.events
    np.testing.assert_array_equal(ps.previous.origin, [0, 0, 0])
    np.testing.assert_array_equal(ps.grid.origin, [1, 0, 0])
    assert ps.previous.shaded is old.shaded  # moved, not recaptured
    # the crossing frame has already counted down once
    assert ps.transition_frames_left == PARAMS.transition_frames - 1


def test_step_does_not_mutate_input():
    scene = single_sphere()
    ps = step(ProbeSet.empty(PARAMS), scene, [0.1, 0, 0], PARAMS)
    before = (ps.frame, ps.grid.origin.copy(), list(ps.events))
    step(ps, scene, [3.0, 0, 0], PARAMS)
    assert (ps.frame, list(ps.events)) == (before[0], before[2])
    np.testing.assert_array_equal(ps.grid.origin, before[1])


def test_transition_ends_and_drops_previous():
    scene = single_sphere()
    p = replace(PARAMS, transition_frames=3)
    ps = step(ProbeSet.empty(p), scene, [0, 0, 0], p)
    ps = step(ps, scene, [1, 0, 0], p)
    for _ in range(2):
        assert ps.previous.valid
        ps = step(ps, scene, [1, 0, 0], p)
    assert "transition_end" in ps.events
    assert not ps.previous.valid and ps.transition_progress == 1.0


def test_recrossing_replaces_previous():
    scene = single_sphere()
    ps = step(ProbeSet.empty(PARAMS), scene, [0, 0, 0], PARAMS)
    ps = step(ps, scene, [1, 0, 0], PARAMS)
    ps = step(ps, scene, [1, 0, 0], PARAMS)  # even frame: new grid captured
    ps = step(ps, scene, [2, 0, 0], PARAMS)
    np.testing.assert_array_equal(ps.previous.origin, [1, 0, 0])
    assert ps.transition_frames_left == PARAMS.transition_frames - 1


def _dirty(k):
    base = single_sphere()
    return replace(base, lights=(Light("directional", (1.0, 1.0, 1.0 - 0.01 * k), direction=(0.0, -1.0, 0.0)),))


def schedule_trace():
    """Warm up, cross a cell, then 8 frames with a scene that changes every frame."""
    ps = step(ProbeSet.empty(PARAMS), _dirty(0), [0, 0, 0], PARAMS)
    ps = step(ps, _dirty(1), [1, 0, 0], PARAMS)
    trace = []
    for k in range(2, 10):
        ps = step(ps, _dirty(k), [1, 0, 0], PARAMS)
        trace.append((k, list(ps.events), ps.transition_frames_left))
    return trace


def test_schedule_eight_frames():
    trace = schedule_trace()
    counts = {e: sum(e in ev for _, ev, _ in trace) for e in ("eye_update", "grid_update", "previous_update")}
    assert counts == {"eye_update": 8, "grid_update": 4, "previous_update": 4}
    for k, ev, left in trace:
        assert left > 0
        assert ("grid_update" in ev) == (k % 2 == 0)
        assert ("previous_update" in ev) == (k % 2 == 1)


def test_static_scene_never_refreshes_previous():
    scene = single_sphere()
    ps = step(ProbeSet.empty(PARAMS), scene, [0, 0, 0], PARAMS)
    ps = step(ps, scene, [1, 0, 0], PARAMS)
    events = []
    for _ in range(6):
        ps = step(ps, scene, [1, 0, 0], PARAMS)
        events += ps.events
    assert "previous_update" not in events
    assert events.count("grid_update") == 1


def test_step_deterministic():
    scene = single_sphere()
    a = step(ProbeSet.empty(PARAMS), scene, [0.3, 0.2, 0.1], PARAMS)
    b = step(ProbeSet.empty(PARAMS), scene, [0.3, 0.2, 0.1], PARAMS)
    assert a.eye.shaded.digest() == b.eye.shaded.digest()
    assert a.grid.shaded.digest() == b.grid.shaded.digest()
    assert a.events == b.events
