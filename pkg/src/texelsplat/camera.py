"""Pinhole camera used by both the splatter and the naive baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class CameraPose:
    """Perspective camera.

    ``rotation`` is world-to-view: its rows are the right, up and forward
    axes in world space.  View space looks down +forward; screen y grows
    downward.
    """

    position: np.ndarray
    rotation: np.ndarray
    fov_y: float = math.radians(60.0)
    aspect: float = 4.0 / 3.0
    near: float = 0.05
    far: float = 1000.0

    def __post_init__(self) -> None:
        self.position = np.array(self.position, dtype=np.float64).reshape(3)
        self.rotation = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        if not 0.0 < self.near < self.far:
            raise ValueError("camera requires 0 < near < far")
        if not 0.0 < self.fov_y < math.pi:
            raise ValueError("fov_y must lie in (0, pi)")
        if not self.aspect > 0.0:
            raise ValueError("aspect must be positive")

    @classmethod
    def from_yaw_pitch(cls, position, yaw: float, pitch: float, **kw) -> "CameraPose":
        """Yaw turns about +Y (0 looks down -Z, positive turns toward +X); pitch tilts up."""
        cp, sp = math.cos(pitch), math.sin(pitch)
        cy, sy = math.cos(yaw), math.sin(yaw)
        forward = np.array([sy * cp, sp, -cy * cp])
        right = np.array([cy, 0.0, sy])
        up = np.cross(right, forward)
        return cls(position, np.stack([right, up, forward]), **kw)

    @classmethod
    def look_at(cls, position, target, up=(0.0, 1.0, 0.0), **kw) -> "CameraPose":
        position = np.asarray(position, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - position
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        norm = np.linalg.norm(right)
        if norm < 1e-12:
            raise ValueError("look_at: up is parallel to the view direction")
        right /= norm
        return cls(position, np.stack([right, np.cross(right, forward), forward]), **kw)

    @property
    def right(self) -> np.ndarray:
        return self.rotation[0]

    @property
    def up(self) -> np.ndarray:
        return self.rotation[1]

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[2]

    @property
    def tan_half_fov(self) -> float:
        return math.tan(self.fov_y * 0.5)

    def to_view(self, points) -> np.ndarray:
        """World points to view space ``(x right, y up, z forward)``."""
        d = np.asarray(points, dtype=np.float64) - self.position
        rows = self.rotation
        return np.stack(
            [d[..., 0] * rows[k, 0] + d[..., 1] * rows[k, 1] + d[..., 2] * rows[k, 2] for k in range(3)],
            axis=-1,
        )

    def view_to_screen(self, view, width: int, height: int):
        """Continuous pixel coordinates for view-space points with z > 0."""
        ty = self.tan_half_fov
        tx = ty * self.aspect
        x_ndc = view[..., 0] / (view[..., 2] * tx)
        y_ndc = view[..., 1] / (view[..., 2] * ty)
        return (x_ndc + 1.0) * 0.5 * width, (1.0 - y_ndc) * 0.5 * height

    def pixel_rays(self, width: int, height: int) -> np.ndarray:
        """Unit world directions through pixel centers, shape ``(H, W, 3)``."""
        ty = self.tan_half_fov
        tx = ty * self.aspect
        xs = ((np.arange(width) + 0.5) / width * 2.0 - 1.0) * tx
        ys = (1.0 - (np.arange(height) + 0.5) / height * 2.0) * ty
        x = np.broadcast_to(xs[None, :, None], (height, width, 1))
        y = np.broadcast_to(ys[:, None, None], (height, width, 1))
        d = self.forward + x * self.right + y * self.up
        return d / np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2 + d[..., 2] ** 2)[..., None]
