"""psh.objectives

Training losses as standalone numerical kernels.

Reduction convention: every norm is replaced by its MEAN over joints / vertices / coordinates,
so values do not depend on how many points are compared:

* 2D joints - mean absolute difference (L1)
* 3D joints, mesh vertices - mean squared difference
* mask - fraction of projected vertices outside the hand mask
* temporal - mean squared change of beta plus lambda * mean squared change of theta
* camera - sum over {theta, beta, r, t, s} of the mean squared difference

3D predictions are compared after the predicted rotation only; truths must already be expressed
in that frame (no scale or translation is applied). The mask loss has no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any, Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .camera import CameraParams, project_weak, rotate_points
from .coords import in_frame, to_pixel
from .errors import ConfigError, DimensionError
from .render import Raster


@dataclass(frozen=True)
class LossWeights:
    """Initialization options:
    * lambda_2d - 2D joint term
    * lambda_3d - 3D joint term (and mesh term when vertices are annotated)
    * lambda_temp - temporal term
    * lambda_temp_theta - weight of the pose part inside the temporal term
    * lambda_cam - camera/parameter term (synthetic data only)
    * lambda_mask - mask fitting term
    """

    lambda_2d: float = 5.0
    lambda_3d: float = 100.0
    lambda_temp: float = 100.0
    lambda_temp_theta: float = 2e-4
    lambda_cam: float = 1.0
    lambda_mask: float = 10.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (np.isfinite(value) and value >= 0):
                raise ConfigError(f"{f.name} must be a non-negative number, got {value}")

    @classmethod
    def prose(cls) -> LossWeights:
        """Same weights with the larger pose-smoothness factor (0.01)"""
        return cls(lambda_temp_theta=0.01)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> LossWeights:
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown loss weight(s): {', '.join(sorted(unknown))}")
        return cls(**{k: float(v) for k, v in data.items()})


def _pair(pred: ArrayLike, truth: ArrayLike, what: str) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(what, truth.shape, pred.shape)
    if pred.size == 0:
        raise DimensionError(what, "non-empty", pred.shape)
    return pred, truth


# Per-term kernels

def loss_joint_2d(pred2d: ArrayLike, truth2d: ArrayLike) -> float:
    pred, truth = _pair(pred2d, truth2d, "2D joints")
    return float(np.mean(np.abs(pred - truth)))


def loss_joint_3d(pred3d_rotated: ArrayLike, truth3d: ArrayLike) -> float:
    pred, truth = _pair(pred3d_rotated, truth3d, "3D joints")
    return float(np.mean((pred - truth) ** 2))


def grad_joint_3d(pred3d_rotated: ArrayLike, truth3d: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """(d/d pred, d/d truth) of loss_joint_3d"""
    pred, truth = _pair(pred3d_rotated, truth3d, "3D joints")
    g = 2.0 * (pred - truth) / pred.size
    return g, -g


def loss_mesh_3d(pred_vertices: ArrayLike, truth_vertices: ArrayLike) -> float:
    pred, truth = _pair(pred_vertices, truth_vertices, "mesh vertices")
    return float(np.mean((pred - truth) ** 2))


def grad_mesh_3d(pred_vertices: ArrayLike, truth_vertices: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    pred, truth = _pair(pred_vertices, truth_vertices, "mesh vertices")
    g = 2.0 * (pred - truth) / pred.size
    return g, -g


def mask_lookup(vertices2d: ArrayLike, mask: Raster | NDArray[np.bool_]) -> NDArray[np.bool_]:
    """H(v) per vertex: the mask value at the pixel containing v, False outside the frame"""
    mask = mask.mask if isinstance(mask, Raster) else np.asarray(mask, dtype=bool)
    points = np.asarray(vertices2d, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise DimensionError("projected vertices", ("N", 2), points.shape)
    height, width = mask.shape
    pixels = to_pixel(points)
    inside = in_frame(pixels, width, height) & np.all(np.isfinite(points), axis=1)
    hits = np.zeros(len(points), dtype=bool)
    hits[inside] = mask[pixels[inside, 1], pixels[inside, 0]]
    return hits


def loss_mask(vertices2d: ArrayLike, mask: Raster | NDArray[np.bool_]) -> float:
    hits = mask_lookup(vertices2d, mask)
    if len(hits) == 0:
        raise DimensionError("projected vertices", "non-empty", (0, 2))
    return float(1.0 - hits.mean())


def loss_temporal(
        beta_prev: ArrayLike,
        beta_cur: ArrayLike,
        theta_prev: ArrayLike,
        theta_cur: ArrayLike,
        lambda_temp_theta: float = LossWeights.lambda_temp_theta,
        ) -> float:
    b0, b1 = _pair(beta_prev, beta_cur, "beta")
    t0, t1 = _pair(theta_prev, theta_cur, "theta")
    value = np.mean((b0 - b1) ** 2)
    if lambda_temp_theta != 0:
        value += lambda_temp_theta * np.mean((t0 - t1) ** 2)
    return float(value)


def grad_temporal(
        beta_prev: ArrayLike,
        beta_cur: ArrayLike,
        theta_prev: ArrayLike,
        theta_cur: ArrayLike,
        lambda_temp_theta: float = LossWeights.lambda_temp_theta,
        ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Gradients w.r.t. (beta_prev, beta_cur, theta_prev, theta_cur)"""
    b0, b1 = _pair(beta_prev, beta_cur, "beta")
    t0, t1 = _pair(theta_prev, theta_cur, "theta")
    gb = 2.0 * (b0 - b1) / b0.size
    gt = lambda_temp_theta * 2.0 * (t0 - t1) / t0.size
    return gb, -gb, gt, -gt


@dataclass(frozen=True, eq=False)
class ParamSet:
    """Regressed parameters {theta, beta, r, t, s} of one frame"""

    theta: NDArray[np.float64]
    beta: NDArray[np.float64]
    r: NDArray[np.float64]
    t: NDArray[np.float64]
    s: float

    GROUPS = ("theta", "beta", "r", "t", "s")

    @classmethod
    def create(cls, theta: ArrayLike, beta: ArrayLike, cam: CameraParams) -> ParamSet:
        return cls(
            np.asarray(theta, dtype=np.float64),
            np.asarray(beta, dtype=np.float64),
            cam.r.copy(),
            cam.t.copy(),
            cam.s,
        )

    def group(self, name: str) -> NDArray[np.float64]:
        return np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))


def loss_camera(pred: ParamSet, truth: ParamSet) -> float:
    total = 0.0
    for name in ParamSet.GROUPS:
        p, t = _pair(pred.group(name), truth.group(name), name)
        total += float(np.mean((p - t) ** 2))
    return total


def grad_camera(pred: ParamSet, truth: ParamSet) -> tuple[ParamSet, ParamSet]:
    """Gradients of loss_camera w.r.t. every group of pred and of truth"""
    gp: dict[str, Any] = {}
    gt: dict[str, Any] = {}
    for name in ParamSet.GROUPS:
        p, t = _pair(pred.group(name), truth.group(name), name)
        g = 2.0 * (p - t) / p.size
        gp[name], gt[name] = g, -g
    gp["s"], gt["s"] = float(gp["s"][0]), float(gt["s"][0])
    return ParamSet(**gp), ParamSet(**gt)


# Weighted totals

@dataclass(frozen=True, eq=False)
class FramePrediction:
    """joints3d / vertices3d in the model frame, before the predicted rotation cam.r"""

    theta: NDArray[np.float64]
    beta: NDArray[np.float64]
    cam: CameraParams
    joints3d: NDArray[np.float64]
    joints2d: NDArray[np.float64]
    vertices3d: NDArray[np.float64] | None = None

    @property
    def params(self) -> ParamSet:
        return ParamSet.create(self.theta, self.beta, self.cam)


@dataclass(frozen=True, eq=False)
class FrameTruth:
    """joints3d / vertices3d already aligned with the predicted rotation frame"""

    theta: NDArray[np.float64]
    beta: NDArray[np.float64]
    cam: CameraParams
    joints3d: NDArray[np.float64]
    joints2d: NDArray[np.float64]
    vertices3d: NDArray[np.float64] | None = None
    mask: Raster | NDArray[np.bool_] | None = None

    @property
    def params(self) -> ParamSet:
        return ParamSet.create(self.theta, self.beta, self.cam)


@dataclass(frozen=True)
class LossBreakdown:
    """terms: unweighted sequence means; weighted: after lambdas; total: their sum"""

    terms: dict[str, float] = field(default_factory=dict)
    weighted: dict[str, float] = field(default_factory=dict)
    total: float = 0.0


def _mean(values: Iterable[float]) -> float | None:
    values = list(values)
    return float(np.mean(values)) if values else None


def _frame_terms(pred: FramePrediction, truth: FrameTruth) -> dict[str, float]:
    rotated = rotate_points(pred.joints3d, pred.cam.r)
    terms = {
        "2d": loss_joint_2d(pred.joints2d, truth.joints2d),
        "3d": loss_joint_3d(rotated, truth.joints3d),
    }
    if pred.vertices3d is not None and truth.vertices3d is not None:
        terms["mesh"] = loss_mesh_3d(rotate_points(pred.vertices3d, pred.cam.r), truth.vertices3d)
    if pred.vertices3d is not None and truth.mask is not None:
        terms["mask"] = loss_mask(project_weak(pred.vertices3d, pred.cam), truth.mask)
    return terms


def _loss_terms(frames: Sequence[tuple[FramePrediction, FrameTruth]], weights: LossWeights, with_camera: bool) -> LossBreakdown:
    if not frames:
        raise DimensionError("frames", "at least 1", 0)
    per_frame = [_frame_terms(p, t) for p, t in frames]

    terms: dict[str, float] = {}
    for name in ("2d", "3d", "mesh", "mask"):
        value = _mean(ft[name] for ft in per_frame if name in ft)
        if value is not None:
            terms[name] = value
    temporal = _mean(
        loss_temporal(prev.beta, cur.beta, prev.theta, cur.theta, weights.lambda_temp_theta)
        for (prev, _), (cur, _) in zip(frames, frames[1:])
    )
    if temporal is not None:
        terms["temp"] = temporal
    if with_camera:
        terms["cam"] = float(np.mean([loss_camera(p.params, t.params) for p, t in frames]))

    lambdas = {
        "2d": weights.lambda_2d,
        "3d": weights.lambda_3d,
        "mesh": weights.lambda_3d,
        "mask": weights.lambda_mask,
        "temp": weights.lambda_temp,
        "cam": weights.lambda_cam,
    }
    weighted = {name: lambdas[name] * value for name, value in terms.items()}
    return LossBreakdown(terms, weighted, float(sum(weighted.values())))


def loss_terms_seqhand(frames: Sequence[tuple[FramePrediction, FrameTruth]], weights: LossWeights | None = None) -> LossBreakdown:
    return _loss_terms(frames, LossWeights() if weights is None else weights, with_camera=True)


def loss_terms_real(frames: Sequence[tuple[FramePrediction, FrameTruth]], weights: LossWeights | None = None) -> LossBreakdown:
    return _loss_terms(frames, LossWeights() if weights is None else weights, with_camera=False)


def loss_total_seqhand(frames: Sequence[tuple[FramePrediction, FrameTruth]], weights: LossWeights | None = None) -> float:
    """Synthetic pre-training criterion: 2D + 3D (+ mesh) + temporal + camera (+ mask)"""
    return loss_terms_seqhand(frames, weights).total


def loss_total_real(frames: Sequence[tuple[FramePrediction, FrameTruth]], weights: LossWeights | None = None) -> float:
    """Real-image adaptation criterion: the synthetic one without the camera term"""
    return loss_terms_real(frames, weights).total
