"""psh.poseflow

Pose-flow generation.

A flow starts at a random database pose and approaches a second random pose. Every step moves
the previous pose a fraction alpha/n of the way towards the final pose and snaps the result to
its nearest database neighbour, so every frame is a real annotated pose. Camera parameters and
the background crop are sampled at both ends and updated with the same rule.

Random draws per sequence, in order: initial record, final record, beta, colour template,
endpoint cameras, endpoint background offsets, then per-frame jitter (only if noise_sigma > 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from math import pi
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .camera import ANGLE_TOLERANCE, CameraParams, fit_to_frame_scale, project_weak, rodrigues, rotate_points
from .colors import TEMPLATES
from .coords import Box, crop_square
from .errors import ConfigError, EmptyIndexError, InvariantError
from .handmodel import BETA_DIM, BETA_LIMIT, HandModel, HandPose, HandShape, JointSet, default_model
from .posedb import PoseDB, PoseIndex


@dataclass(frozen=True)
class CameraBounds:
    """Sampling bounds of the endpoint cameras.

    * scale_range - (low, high) multiples of the scale that fits the hand into the frame
    * translation_region - side of the centred region t is sampled in, as a fraction of the frame
    * max_angle - largest camera rotation angle (radians)
    """

    scale_range: tuple[float, float] = (0.5, 1.5)
    translation_region: float = 1 / 3
    max_angle: float = pi

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ConfigError(f"scale_range must satisfy 0 < low <= high, got {self.scale_range}")
        if not 0 <= self.translation_region <= 1:
            raise ConfigError(f"translation_region must lie in [0, 1], got {self.translation_region}")
        if not 0 <= self.max_angle <= pi:
            raise ConfigError(f"max_angle must lie in [0, pi], got {self.max_angle}")
        object.__setattr__(self, "scale_range", (float(lo), float(hi)))

    def as_dict(self) -> dict[str, Any]:
        return {"scale_range": list(self.scale_range), "translation_region": self.translation_region, "max_angle": self.max_angle}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CameraBounds:
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown camera bound(s): {', '.join(sorted(unknown))}")
        data = dict(data)
        if "scale_range" in data:
            data["scale_range"] = tuple(data["scale_range"])
        return cls(**data)


@dataclass(frozen=True)
class FlowConfig:
    """Initialization options:
    * n_frames - frames per sequence
    * alpha - update gain; each step covers alpha / n_frames of the remaining distance
    * noise_sigma - std-dev (mm) of optional Gaussian jitter added to every updated pose
    * width, height - frame size in pixels
    * seed - master seed (unsigned 64-bit)
    * camera - endpoint camera sampling bounds
    """

    n_frames: int = 10
    alpha: float = 3.0
    noise_sigma: float = 0.0
    width: int = 224
    height: int = 224
    seed: int = 0
    camera: CameraBounds = field(default_factory=CameraBounds)

    def __post_init__(self):
        if self.n_frames < 1:
            raise ConfigError(f"n_frames must be at least 1, got {self.n_frames}")
        if not 0 < self.alpha <= self.n_frames:
            raise ConfigError(f"alpha must lie in (0, n_frames={self.n_frames}], got {self.alpha}")
        if not self.noise_sigma >= 0:
            raise ConfigError(f"noise_sigma must be non-negative, got {self.noise_sigma}")
        if self.width <= 0 or self.height <= 0:
            raise ConfigError(f"frame size must be positive, got {self.width}x{self.height}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def step(self) -> float:
        return self.alpha / self.n_frames

    def as_dict(self) -> dict[str, Any]:
        return {
            "n_frames": self.n_frames,
            "alpha": self.alpha,
            "noise_sigma": self.noise_sigma,
            "width": self.width,
            "height": self.height,
            "seed": self.seed,
            "camera": self.camera.as_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> FlowConfig:
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown flow option(s): {', '.join(sorted(unknown))}")
        data = dict(data)
        if isinstance(data.get("camera"), dict):
            data["camera"] = CameraBounds.from_dict(data["camera"])
        return cls(**data)


@dataclass(frozen=True, eq=False)
class FlowFrame:
    """One frame of a flow.

    joints3d is the snapped database pose (root-relative, in the database's orientation).
    theta is fit to the pose after undoing root_orient, so the mesh posed by theta and then
    rotated by root_orient follows joints3d. joints2d = project_weak(joints3d, cam).
    model_joints3d are the joints of that mesh (joints_fk(theta, beta) rotated by root_orient) and
    model_joints2d their projection; they differ from joints3d by the bone-length mismatch between
    the database pose and the sampled shape. crop is the square hand crop around joints2d.
    joints_updated is the pre-snap pose (None for the first frame) and is not serialised.
    """

    index: int
    pose_record_id: int
    joints3d: JointSet
    theta: HandPose
    beta: HandShape
    root_orient: NDArray[np.float64]
    ik_residual: float
    cam: CameraParams
    bg_offset: tuple[int, int]
    joints2d: NDArray[np.float64]
    model_joints3d: JointSet
    model_joints2d: NDArray[np.float64]
    crop: Box
    joints_updated: JointSet | None = None

    def as_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "pose_record_id": self.pose_record_id,
            "theta": self.theta.theta_full.tolist(),
            "beta": self.beta.beta.tolist(),
            "root_orient": self.root_orient.tolist(),
            "ik_residual": self.ik_residual,
            "cam": self.cam.as_dict(),
            "bg_offset": list(self.bg_offset),
            "joints3d": self.joints3d.tolist(),
            "joints2d": self.joints2d.tolist(),
            "model_joints3d": self.model_joints3d.tolist(),
            "model_joints2d": self.model_joints2d.tolist(),
            "crop": [self.crop.x0, self.crop.y0, self.crop.x1, self.crop.y1],
        }


@dataclass(frozen=True, eq=False)
class PoseFlowSeq:
    frames: tuple[FlowFrame, ...]
    beta: HandShape
    color_template_id: int
    config: FlowConfig
    db_fingerprint: str
    background_size: tuple[int, int]

    def __post_init__(self):
        if len(self.frames) != self.config.n_frames:
            raise InvariantError(f"flow has {len(self.frames)} frames, expected {self.config.n_frames}")
        if any(f.beta is not self.beta for f in self.frames):
            raise InvariantError("all frames of a flow must share beta")

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)


def sequence_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for sequence `index`; parallel workers get identical streams"""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def _step(alpha: float, n: int) -> float:
    step = alpha / n
    if not 0 < step <= 1:
        raise InvariantError(f"alpha/n must lie in (0, 1], got {alpha}/{n}")
    return step


def update_pose(
        prev: JointSet,
        final: JointSet,
        alpha: float,
        n: int,
        noise_sigma: float = 0.0,
        rng: np.random.Generator | None = None,
        ) -> JointSet:
    """P_updated = P_prev - (alpha/n)(P_prev - P_final), plus N(0, noise_sigma^2) jitter if requested"""
    step = _step(alpha, n)
    prev = np.asarray(prev, dtype=np.float64)
    final = np.asarray(final, dtype=np.float64)
    if step == 1.0:
        updated = final.copy()
    else:
        updated = prev - step * (prev - final)
    if noise_sigma > 0:
        if rng is None:
            raise InvariantError("jitter requested without a random generator")
        updated = updated + rng.normal(0.0, noise_sigma, size=updated.shape)
    return updated


def sample_camera(rng: np.random.Generator, bounds: CameraBounds, width: int, height: int, extent: float) -> CameraParams:
    lo, hi = bounds.scale_range
    s = fit_to_frame_scale(extent, width, height) * rng.uniform(lo, hi)
    region = bounds.translation_region
    t = np.array([width, height]) * (0.5 + region * (rng.uniform(size=2) - 0.5))
    direction = rng.normal(size=3)
    norm = np.linalg.norm(direction)
    direction = direction / norm if norm > 0 else np.array([0.0, 0.0, 1.0])
    # cube root makes r uniform over the ball, not just over angles
    angle = bounds.max_angle * rng.uniform() ** (1 / 3)
    return CameraParams(s, t, direction * angle)


def sample_endpoint_cams(
        rng: np.random.Generator,
        bounds: CameraBounds | None = None,
        width: int = 224,
        height: int = 224,
        extent: float | None = None,
        ) -> tuple[CameraParams, CameraParams]:
    """Independent initial and final cameras"""
    bounds = CameraBounds() if bounds is None else bounds
    extent = default_model().extent if extent is None else extent
    return (
        sample_camera(rng, bounds, width, height, extent),
        sample_camera(rng, bounds, width, height, extent),
    )


def interp_camera(prev: CameraParams, final: CameraParams, alpha: float, n: int) -> CameraParams:
    """Componentwise pose-style update of (s, t, r)"""
    step = _step(alpha, n)
    if step == 1.0:
        return CameraParams(final.s, final.t.copy(), final.r.copy())
    s = max(prev.s - step * (prev.s - final.s), np.finfo(np.float64).tiny)
    t = prev.t - step * (prev.t - final.t)
    r = prev.r - step * (prev.r - final.r)
    # a convex combination of canonical vectors stays inside the pi ball up to rounding
    norm = np.linalg.norm(r)
    if norm > pi + ANGLE_TOLERANCE:
        r = r * (pi / norm)
    return CameraParams(s, t, r)


def background_traj(
        bg_source: tuple[int, int] | NDArray[np.uint8],
        cfg: FlowConfig,
        rng: np.random.Generator,
        ) -> list[tuple[int, int]]:
    """Per-frame (x, y) crop offsets into a background of size bg_source = (width, height)
    or an (H, W, 3) image. The trajectory is updated in floating point and rounded per frame.
    """
    if isinstance(bg_source, np.ndarray):
        src_w, src_h = bg_source.shape[1], bg_source.shape[0]
    else:
        src_w, src_h = bg_source
    max_x, max_y = src_w - cfg.width, src_h - cfg.height
    if max_x < 0 or max_y < 0:
        raise InvariantError(f"background {src_w}x{src_h} is smaller than the {cfg.width}x{cfg.height} frame")

    initial = np.array([rng.integers(0, max_x + 1), rng.integers(0, max_y + 1)], dtype=np.float64)
    final = np.array([rng.integers(0, max_x + 1), rng.integers(0, max_y + 1)], dtype=np.float64)

    offsets = []
    pos = initial
    for k in range(cfg.n_frames):
        if k > 0:
            pos = update_pose(pos, final, cfg.alpha, cfg.n_frames)
        x, y = np.clip(np.rint(pos), 0, (max_x, max_y)).astype(int)
        offsets.append((int(x), int(y)))
    return offsets


def make_frame(
        model: HandModel,
        index: int,
        record_id: int,
        joints: JointSet,
        beta: HandShape,
        cam: CameraParams,
        bg_offset: tuple[int, int],
        joints_updated: JointSet | None = None,
        ) -> FlowFrame:
    root_orient = model.fit_root_orientation(joints, beta)
    # row-vector form of R^T x
    derotated = joints @ rodrigues(root_orient)
    theta, residual = model.fit_pose_params(derotated, beta)
    joints2d = project_weak(joints, cam)
    model_joints3d = rotate_points(model.joints_fk(theta, beta), root_orient)
    return FlowFrame(
        index=index,
        pose_record_id=record_id,
        joints3d=joints,
        theta=theta,
        beta=beta,
        root_orient=root_orient,
        ik_residual=residual,
        cam=cam,
        bg_offset=bg_offset,
        joints2d=joints2d,
        model_joints3d=model_joints3d,
        model_joints2d=project_weak(model_joints3d, cam),
        crop=crop_square(Box.around(joints2d)),
        joints_updated=joints_updated,
    )


def generate_flow(
        db: PoseDB,
        index: PoseIndex,
        cfg: FlowConfig,
        rng: np.random.Generator | None = None,
        *,
        model: HandModel | None = None,
        bg_size: tuple[int, int] | None = None,
        initial_id: int | None = None,
        final_id: int | None = None,
        ) -> PoseFlowSeq:
    """Generates one pose-flow of cfg.n_frames frames.

    initial_id / final_id override the sampled endpoints (the draws still happen, so the
    remaining random stream is unchanged). bg_size defaults to the frame size.
    """
    if len(db) == 0 or index.count == 0:
        raise EmptyIndexError("cannot generate a flow from an empty pose database")
    model = default_model() if model is None else model
    rng = sequence_rng(cfg.seed, 0) if rng is None else rng
    bg_size = (cfg.width, cfg.height) if bg_size is None else bg_size

    initial = db.records[rng.integers(len(db))]
    final = db.records[rng.integers(len(db))]
    if initial_id is not None:
        initial = db.get(initial_id)
    if final_id is not None:
        final = db.get(final_id)
    beta = HandShape(rng.uniform(-BETA_LIMIT, BETA_LIMIT, size=BETA_DIM))
    template_id = int(rng.integers(len(TEMPLATES)))
    cam_initial, cam_final = sample_endpoint_cams(rng, cfg.camera, cfg.width, cfg.height, model.extent)
    offsets = background_traj(bg_size, cfg, rng)

    frames = [make_frame(model, 0, initial.id, initial.joints, beta, cam_initial, offsets[0])]
    current, cam = initial.joints, cam_initial
    for k in range(1, cfg.n_frames):
        updated = update_pose(current, final.joints, cfg.alpha, cfg.n_frames, cfg.noise_sigma, rng)
        record, _ = index.query(updated)
        cam = interp_camera(cam, cam_final, cfg.alpha, cfg.n_frames)
        frames.append(make_frame(model, k, record.id, record.joints, beta, cam, offsets[k], updated))
        current = record.joints

    return PoseFlowSeq(
        frames=tuple(frames),
        beta=beta,
        color_template_id=template_id,
        config=cfg,
        db_fingerprint=db.fingerprint,
        background_size=(int(bg_size[0]), int(bg_size[1])),
    )


def pre_snap_ratios(flow: PoseFlowSeq, final: JointSet) -> list[float]:
    """||P_updated - P_final|| / ||P_prev - P_final|| per step (nan where the previous pose is final)"""
    ratios = []
    for prev, frame in zip(flow.frames, flow.frames[1:]):
        before = np.linalg.norm(prev.joints3d - final)
        after = np.linalg.norm(frame.joints_updated - final)
        ratios.append(float(after / before) if before > 0 else float("nan"))
    return ratios
