import math

import numpy as np
import pytest

from texelsplat.harness import resolve_asset
from texelsplat.scene import Box, Light, Material, Primitive, Scene, Sphere, load_scene


@pytest.fixture(scope="session")
def village():
    return load_scene(resolve_asset("village", "scenes"))


@pytest.fixture(scope="session")
def sphere_plane():
    return load_scene(resolve_asset("sphere_on_plane", "scenes"))


@pytest.fixture(scope="session")
def wall_pillar():
    return load_scene(resolve_asset("wall_pillar", "scenes"))


def single_sphere(center=(0.0, 0.0, -5.0), radius=1.0, lights=True) -> Scene:
    lit = (Light("directional", (1.0, 1.0, 1.0), direction=(0.0, -1.0, 0.0)),) if lights else ()
    return Scene(
        primitives=(Primitive(Sphere(center, radius), 1, 0),),
        materials=(Material((0.8, 0.3, 0.2)),),
        lights=lit,
        ambient=(0.1, 0.1, 0.1),
    )


def enclosing_room(half=10.0) -> Scene:
    """A probe at the origin sees a wall in every direction."""
    walls = []
    for axis in range(3):
        for sign in (-1, 1):
            lo = [-half - 1.0] * 3
            hi = [half + 1.0] * 3
            if sign < 0:
                hi[axis] = -half
            else:
                lo[axis] = half
            walls.append(Primitive(Box(tuple(lo), tuple(hi)), len(walls) + 1, 0))
    return Scene(primitives=tuple(walls), materials=(Material((0.5, 0.5, 0.5)),), ambient=(0.3, 0.3, 0.3))


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / math.sqrt(float(v @ v))


# (criterion number, title, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {title}: {detail}")
