"""Keyframed camera paths (JSON) with lerp/slerp interpolation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .camera import CameraPose

# CameraPose rows are (right, up, forward); negating forward gives a proper rotation
_FLIP = np.array([1.0, 1.0, -1.0])[:, None]


class PathError(ValueError):
    pass


@dataclass
class CameraPath:
    keyframes: list[tuple[int, CameraPose]]

    def __post_init__(self) -> None:
        if not self.keyframes:
            raise PathError("camera path needs at least one keyframe")
        frames = [k for k, _ in self.keyframes]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise PathError("keyframe indices must be strictly increasing")
        if frames[0] < 0:
            raise PathError("keyframe indices must be >= 0")

    @property
    def n_frames(self) -> int:
        return self.keyframes[-1][0] + 1

    def pose(self, frame: int, aspect: float | None = None) -> CameraPose:
        keys = self.keyframes
        if frame <= keys[0][0] or len(keys) == 1:
            base = keys[0][1]
            pos, rot = base.position, base.rotation
        elif frame >= keys[-1][0]:
            base = keys[-1][1]
            pos, rot = base.position, base.rotation
        else:
            k = next(n for n in range(len(keys) - 1) if keys[n][0] <= frame < keys[n + 1][0])
            (f0, a), (f1, b) = keys[k], keys[k + 1]
            w = (frame - f0) / (f1 - f0)
            base = a
            pos = a.position + w * (b.position - a.position)
            if np.array_equal(a.rotation, b.rotation):
                rot = a.rotation  # slerp would round a fixed orientation
            else:
                rots = Rotation.from_matrix(np.stack([a.rotation * _FLIP, b.rotation * _FLIP]))
                rot = Slerp([0.0, 1.0], rots)([w]).as_matrix()[0] * _FLIP
        return CameraPose(
            pos.copy(),
            rot.copy(),
            fov_y=base.fov_y,
            aspect=base.aspect if aspect is None else aspect,
            near=base.near,
            far=base.far,
        )


def path_from_dict(doc: dict) -> CameraPath:
    try:
        fov = math.radians(float(doc.get("fov_y_deg", 60.0)))
        near = float(doc.get("near", 0.05))
        far = float(doc.get("far", 1000.0))
        aspect = float(doc.get("aspect", 4.0 / 3.0))
        keys = []
        for n, kf in enumerate(doc["keyframes"]):
            common = dict(fov_y=fov, aspect=aspect, near=near, far=far)
            pos = [float(x) for x in kf["position"]]
            if "look_at" in kf:
                cam = CameraPose.look_at(pos, kf["look_at"], **common)
            else:
                yaw = math.radians(float(kf.get("yaw_deg", 0.0)))
                pitch = math.radians(float(kf.get("pitch_deg", 0.0)))
                cam = CameraPose.from_yaw_pitch(pos, yaw, pitch, **common)
            keys.append((int(kf["frame"]), cam))
    except (KeyError, TypeError, ValueError) as exc:
        raise PathError(f"invalid camera path: {exc}") from exc
    return CameraPath(keys)


def load_path(path) -> CameraPath:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PathError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return path_from_dict(doc)
