"""psh.camera

Rotation vectors and the weak-perspective camera.

Image convention (shared by render, objectives and the dataset writer, see psh.coords):
origin at the top-left pixel centre, x to the right, y down, units are pixels.
After rotation the camera looks down +z, so a smaller rotated z is nearer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.transform import Rotation

from .errors import DimensionError, InvariantError

# rotation angles within this of pi still count as canonical
ANGLE_TOLERANCE = 1e-9


def cross_op(r: NDArray[np.float64]) -> NDArray[np.float64]:
    """Skew-symmetric matrix [r]x such that [r]x @ v == cross(r, v)"""
    return np.array([
        [0.0, -r[2], r[1]],
        [r[2], 0.0, -r[0]],
        [-r[1], r[0], 0.0],
    ])


def rodrigues(r: ArrayLike) -> NDArray[np.float64]:
    """Rotation matrix of the axis-angle vector r (axis = r/|r|, angle = |r|)"""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3,):
        raise DimensionError("rotation vector", (3,), r.shape)
    if not np.all(np.isfinite(r)):
        raise InvariantError(f"rotation vector is not finite: {r}")
    theta = float(np.linalg.norm(r))
    if theta < 1e-12:
        return np.eye(3)
    k = r / theta
    return np.cos(theta) * np.eye(3) + np.sin(theta) * cross_op(k) + (1 - np.cos(theta)) * np.outer(k, k)


def rodrigues_batch(rs: ArrayLike) -> NDArray[np.float64]:
    """Vectorised rodrigues(): (N, 3) rotation vectors -> (N, 3, 3) matrices"""
    rs = np.asarray(rs, dtype=np.float64)
    if rs.ndim != 2 or rs.shape[1] != 3:
        raise DimensionError("rotation vectors", ("N", 3), rs.shape)
    theta = np.linalg.norm(rs, axis=1)
    small = theta < 1e-12
    safe = np.where(small, 1.0, theta)
    k = rs / safe[:, None]
    kx = np.zeros((len(rs), 3, 3))
    kx[:, 0, 1] = -k[:, 2]
    kx[:, 0, 2] = k[:, 1]
    kx[:, 1, 0] = k[:, 2]
    kx[:, 1, 2] = -k[:, 0]
    kx[:, 2, 0] = -k[:, 1]
    kx[:, 2, 1] = k[:, 0]
    c = np.cos(theta)[:, None, None]
    s = np.sin(theta)[:, None, None]
    mats = c * np.eye(3) + s * kx + (1 - c) * (k[:, :, None] * k[:, None, :])
    mats[small] = np.eye(3)
    return mats


def canonical_rotvec(r: ArrayLike) -> NDArray[np.float64]:
    """Same rotation, wrapped so that |r| <= pi"""
    r = np.asarray(r, dtype=np.float64)
    if np.linalg.norm(r) <= pi:
        return r.copy()
    return Rotation.from_rotvec(r).as_rotvec()


def rotate_points(points: ArrayLike, r: ArrayLike) -> NDArray[np.float64]:
    """Applies R(r) to (N, 3) points: the "R J(theta, beta)" of the 3D losses"""
    points = _as_points(points)
    return points @ rodrigues(r).T


@dataclass(frozen=True, eq=False)
class CameraParams:
    """Weak-perspective camera: x2d = s * Pi(R(r) x3d) + t

    * s - positive scale, pixels per millimetre
    * t - (2,) translation in pixels (image position of the hand root)
    * r - (3,) axis-angle rotation, canonical (|r| <= pi)
    """

    s: float
    t: NDArray[np.float64] = field(default_factory=lambda: np.zeros(2))
    r: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        r = np.asarray(self.r, dtype=np.float64)
        if t.shape != (2,):
            raise DimensionError("camera translation", (2,), t.shape)
        if r.shape != (3,):
            raise DimensionError("camera rotation", (3,), r.shape)
        if not (np.isfinite(self.s) and self.s > 0):
            raise InvariantError(f"camera scale must be positive and finite, got {self.s}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(r))):
            raise InvariantError("camera translation/rotation must be finite")
        if np.linalg.norm(r) > pi + ANGLE_TOLERANCE:
            raise InvariantError(f"camera rotation is not canonical (|r| = {np.linalg.norm(r)} > pi)")
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "r", r)

    @classmethod
    def create(cls, s: float, t: ArrayLike = (0.0, 0.0), r: ArrayLike = (0.0, 0.0, 0.0)) -> CameraParams:
        """Like the constructor, but wraps r to its canonical representative first"""
        return cls(float(s), np.asarray(t, dtype=np.float64), canonical_rotvec(r))

    @property
    def rotation(self) -> NDArray[np.float64]:
        return rodrigues(self.r)

    def as_dict(self) -> dict[str, Any]:
        return {"s": self.s, "t": self.t.tolist(), "r": self.r.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CameraParams:
        return cls(float(data["s"]), np.asarray(data["t"], dtype=np.float64), np.asarray(data["r"], dtype=np.float64))


def _as_points(points: ArrayLike) -> NDArray[np.float64]:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DimensionError("points", ("N", 3), points.shape)
    return points


def camera_coords(points: ArrayLike, cam: CameraParams) -> NDArray[np.float64]:
    """Points rotated into the camera frame (before the orthographic drop)"""
    return _as_points(points) @ cam.rotation.T


def project_weak(points: ArrayLike, cam: CameraParams) -> NDArray[np.float64]:
    """(N, 3) millimetre points -> (N, 2) pixel coordinates"""
    rotated = camera_coords(points, cam)
    return cam.s * rotated[:, :2] + cam.t


def fit_to_frame_scale(extent_mm: float, width: int, height: int, fill: float = 0.5) -> float:
    """Scale mapping a hand reaching extent_mm from its root to `fill` of the shorter frame side"""
    if extent_mm <= 0:
        raise InvariantError(f"hand extent must be positive, got {extent_mm}")
    return fill * min(width, height) / extent_mm
