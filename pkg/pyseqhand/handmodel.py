"""psh.handmodel

A procedural parametric hand.

What the model provides:
* a 21-joint kinematic tree rooted at the wrist (wrist, then thumb -> pinky, each MCP, PIP, DIP, TIP)
* J(beta): the rest skeleton, bone offsets scaled linearly in the 10 shape coefficients
* joints_fk(theta, beta): posed root-relative joints, 15 articulated joints x 3 axis-angle values
* mesh_lbs(theta, beta): a tube mesh around every bone, deformed by linear blend skinning
* fit_pose_params(joints, beta): analytic inverse kinematics (twist about bone axes is set to 0)
* a PCA subspace of theta

Global rotation, translation and scale are not part of the hand model; they live in CameraParams.
All constants come from the versioned asset file `assets/handmodel_v1.txt` (format in MANUAL.md).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from math import pi
from os import PathLike
from typing import Iterable, Literal, Sequence, TypeAlias

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.transform import Rotation

from .camera import ANGLE_TOLERANCE, canonical_rotvec, rodrigues, rodrigues_batch
from .colors import TEMPLATES, ColorTemplate
from .errors import AssetFormatError, DegenerateInputError, DimensionError, InvariantError

N_JOINTS = 21
N_ARTICULATED = 15
THETA_DIM = 3 * N_ARTICULATED
BETA_DIM = 10
BETA_LIMIT = 2.0

JOINT_NAMES = (
    "wrist",
    "thumb_mcp", "thumb_pip", "thumb_dip", "thumb_tip",
    "index_mcp", "index_pip", "index_dip", "index_tip",
    "middle_mcp", "middle_pip", "middle_dip", "middle_tip",
    "ring_mcp", "ring_pip", "ring_dip", "ring_tip",
    "pinky_mcp", "pinky_pip", "pinky_dip", "pinky_tip",
)

# parent of each joint in the standard joint order
JOINT_PARENTS = (-1, 0, 1, 2, 3, 0, 5, 6, 7, 0, 9, 10, 11, 0, 13, 14, 15, 0, 17, 18, 19)

# wrist + the five finger bases; rigid in the rest pose
PALM_JOINTS = (0, 1, 5, 9, 13, 17)

DEFAULT_ASSET = "assets/handmodel_v1.txt"
ASSET_VERSION = 1

# (21, 3) root-relative joint positions in millimetres
JointSet: TypeAlias = NDArray[np.float64]


def as_joints(joints: ArrayLike, what: str = "joints") -> JointSet:
    """Validates a (21, 3) finite joint array and returns it as float64"""
    arr = np.asarray(joints, dtype=np.float64)
    if arr.shape == (N_JOINTS * 3,):
        arr = arr.reshape(N_JOINTS, 3)
    if arr.shape != (N_JOINTS, 3):
        raise DimensionError(what, (N_JOINTS, 3), arr.shape)
    if not np.all(np.isfinite(arr)):
        raise InvariantError(f"{what} contain non-finite coordinates")
    return arr


def root_center(joints: ArrayLike) -> JointSet:
    joints = as_joints(joints)
    return joints - joints[0]


def bone_lengths(joints: ArrayLike, parent: Sequence[int]) -> NDArray[np.float64]:
    """Length of the segment from each non-root joint to its parent, in joint order"""
    joints = np.asarray(joints, dtype=np.float64)
    return np.array([np.linalg.norm(joints[j] - joints[p]) for j, p in enumerate(parent) if p >= 0])


def short_bones(joints: ArrayLike, parent: Sequence[int] = JOINT_PARENTS, eps: float = 1e-9) -> list[tuple[int, int]]:
    """(parent, child) pairs whose segment is shorter than eps mm"""
    joints = np.asarray(joints, dtype=np.float64)
    return [(p, j) for j, p in enumerate(parent) if p >= 0 and np.linalg.norm(joints[j] - joints[p]) < eps]


# Domain types

@dataclass(frozen=True, eq=False)
class HandShape:
    """beta: 10 dimensionless shape coefficients, each in [-2, 2]"""

    beta: NDArray[np.float64] = field(default_factory=lambda: np.zeros(BETA_DIM))

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.shape != (BETA_DIM,):
            raise DimensionError("beta", (BETA_DIM,), beta.shape)
        if not np.all(np.isfinite(beta)):
            raise InvariantError("beta contains non-finite values")
        if np.any(np.abs(beta) > BETA_LIMIT):
            raise InvariantError(f"beta components must lie in [-{BETA_LIMIT}, {BETA_LIMIT}], got {beta}")
        object.__setattr__(self, "beta", beta)

    @classmethod
    def coerce(cls, obj: HandShape | ArrayLike | None) -> HandShape:
        if obj is None:
            return cls()
        if isinstance(obj, cls):
            return obj
        return cls(np.asarray(obj, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class HandPose:
    """theta_full: 45 axis-angle values (radians), 3 per articulated joint in joint order.
    Every per-joint rotation angle is at most pi.
    """

    theta_full: NDArray[np.float64] = field(default_factory=lambda: np.zeros(THETA_DIM))

    def __post_init__(self):
        theta = np.asarray(self.theta_full, dtype=np.float64)
        if theta.shape == (N_ARTICULATED, 3):
            theta = theta.reshape(THETA_DIM)
        if theta.shape != (THETA_DIM,):
            raise DimensionError("theta", (THETA_DIM,), theta.shape)
        if not np.all(np.isfinite(theta)):
            raise InvariantError("theta contains non-finite values")
        angles = np.linalg.norm(theta.reshape(N_ARTICULATED, 3), axis=1)
        if np.any(angles > pi + ANGLE_TOLERANCE):
            raise InvariantError(f"theta is not canonical: max joint angle {angles.max()} > pi")
        object.__setattr__(self, "theta_full", theta)

    @classmethod
    def create(cls, theta_full: ArrayLike) -> HandPose:
        """Wraps every per-joint rotation to its canonical representative"""
        theta = np.asarray(theta_full, dtype=np.float64).reshape(N_ARTICULATED, 3)
        return cls(np.stack([canonical_rotvec(r) for r in theta]).reshape(THETA_DIM))

    @classmethod
    def coerce(cls, obj: HandPose | ArrayLike | None) -> HandPose:
        if obj is None:
            return cls()
        if isinstance(obj, cls):
            return obj
        return cls(np.asarray(obj, dtype=np.float64))

    @property
    def rotvecs(self) -> NDArray[np.float64]:
        return self.theta_full.reshape(N_ARTICULATED, 3)


@dataclass(frozen=True, eq=False)
class KinematicTree:
    """Joint hierarchy and rest-pose template.

    * names - joint names in joint order
    * parent - parent index per joint, -1 for the wrist
    * template_offsets - (21, 3) offset of each joint from its parent in the rest pose (mm)
    * radii - (21,) tube radius of the mesh at each joint (mm)
    """

    names: tuple[str, ...]
    parent: tuple[int, ...]
    template_offsets: NDArray[np.float64]
    radii: NDArray[np.float64]

    def __post_init__(self):
        if len(self.parent) != N_JOINTS or len(self.names) != N_JOINTS:
            raise InvariantError(f"kinematic tree must have exactly {N_JOINTS} joints")
        if self.parent[0] != -1:
            raise InvariantError("joint 0 (wrist) must be the root")
        for j in range(1, N_JOINTS):
            # parents come before their children
            if not 0 <= self.parent[j] < j:
                raise InvariantError(f"joint {j} has invalid parent {self.parent[j]}")
        if len(self.articulated) != N_ARTICULATED:
            raise InvariantError(f"expected {N_ARTICULATED} articulated joints, got {len(self.articulated)}")
        for j in self.articulated:
            if len(self.children(j)) != 1:
                raise InvariantError(f"articulated joint {j} must have exactly one child")
        offsets = np.asarray(self.template_offsets, dtype=np.float64)
        if offsets.shape != (N_JOINTS, 3):
            raise DimensionError("template offsets", (N_JOINTS, 3), offsets.shape)
        if np.any(np.linalg.norm(offsets[1:], axis=1) <= 0):
            raise InvariantError("template bones must have positive length")
        object.__setattr__(self, "template_offsets", offsets)
        object.__setattr__(self, "radii", np.asarray(self.radii, dtype=np.float64))

    @property
    def joint_count(self) -> int:
        return len(self.parent)

    def children(self, j: int) -> tuple[int, ...]:
        return tuple(c for c, p in enumerate(self.parent) if p == j)

    @property
    def tips(self) -> tuple[int, ...]:
        return tuple(j for j in range(N_JOINTS) if j != 0 and not self.children(j))

    @property
    def articulated(self) -> tuple[int, ...]:
        """Non-root, non-tip joints; each carries 3 rotation parameters"""
        return tuple(j for j in range(1, N_JOINTS) if self.children(j))

    def child(self, j: int) -> int:
        return self.children(j)[0]


@dataclass(frozen=True)
class ShapeBlend:
    mode: int
    name: str
    kind: Literal["length", "width"]
    coefficient: float
    joints: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class MeshTopology:
    """Shape-independent description of the tube mesh.

    Per vertex: the bone it belongs to (child joint `vertex_bone`, parent `vertex_parent`),
    the position along the bone `vertex_t` in [0, 1], the angle around it, and whether it is
    a cap vertex (-1 start cap, +1 end cap, 0 ring).
    """

    faces: NDArray[np.int64]
    vertex_bone: NDArray[np.int64]
    vertex_parent: NDArray[np.int64]
    vertex_t: NDArray[np.float64]
    vertex_angle: NDArray[np.float64]
    vertex_cap: NDArray[np.int64]
    vertex_distal: NDArray[np.bool_]
    skin_weights: NDArray[np.float64]

    @property
    def vertex_count(self) -> int:
        return len(self.vertex_t)


@dataclass(frozen=True, eq=False)
class HandMesh:
    """Posed mesh: vertices (V, 3) mm, faces (F, 3), skin_weights (V, 21), vertex_colors (V, 3) uint8"""

    vertices: NDArray[np.float64]
    faces: NDArray[np.int64]
    skin_weights: NDArray[np.float64]
    vertex_colors: NDArray[np.uint8]

    def __post_init__(self):
        v = len(self.vertices)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise DimensionError("mesh vertices", ("V", 3), self.vertices.shape)
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise DimensionError("mesh faces", ("F", 3), self.faces.shape)
        if self.skin_weights.shape[0] != v or self.vertex_colors.shape != (v, 3):
            raise DimensionError("mesh per-vertex data", (v,), (self.skin_weights.shape, self.vertex_colors.shape))
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= v):
            raise InvariantError("mesh face index out of range")
        if np.any(self.skin_weights < 0) or not np.allclose(self.skin_weights.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise InvariantError("skin weights must be non-negative and sum to 1")
        if np.any(np.count_nonzero(self.skin_weights, axis=1) > 4):
            raise InvariantError("a vertex is influenced by more than 4 bones")

    def transformed(self, rotation: NDArray[np.float64]) -> HandMesh:
        """Same mesh with every vertex rotated about the root"""
        return HandMesh(self.vertices @ rotation.T, self.faces, self.skin_weights, self.vertex_colors)


@dataclass(frozen=True, eq=False)
class PoseBasis:
    """PCA subspace of theta: mean (45,), components (k, 45) orthonormal rows,
    eigenvalues (k,) non-increasing, total_variance = trace of the pose covariance.
    """

    mean: NDArray[np.float64]
    components: NDArray[np.float64]
    eigenvalues: NDArray[np.float64]
    total_variance: float

    def __post_init__(self):
        if self.mean.shape != (THETA_DIM,):
            raise DimensionError("basis mean", (THETA_DIM,), self.mean.shape)
        if self.components.ndim != 2 or self.components.shape[1] != THETA_DIM or self.k > THETA_DIM:
            raise DimensionError("basis components", ("k<=45", THETA_DIM), self.components.shape)
        gram = self.components @ self.components.T
        if not np.allclose(gram, np.eye(self.k), rtol=0, atol=1e-9):
            raise InvariantError("basis components are not orthonormal")
        if np.any(np.diff(self.eigenvalues) > 1e-12 * max(1.0, float(self.eigenvalues[0]) if self.k else 1.0)):
            raise InvariantError("basis eigenvalues must be non-increasing")

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def explained_variance(self) -> float:
        return float(self.eigenvalues.sum())

    def project(self, theta: HandPose | ArrayLike) -> NDArray[np.float64]:
        return pose_pca_project(self, theta)

    def reconstruct(self, coeffs: ArrayLike) -> HandPose:
        return pose_pca_reconstruct(self, coeffs)


# The model

def _minimal_rotvec(a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
    """Rotation vector of the smallest rotation taking unit a onto unit b (no twist about a)"""
    c = np.cross(a, b)
    s = np.linalg.norm(c)
    cos = float(np.dot(a, b))
    if s < 1e-15:
        if cos > 0:
            return np.zeros(3)
        # antiparallel: any axis perpendicular to a will do, pick the one least aligned with a
        e = np.zeros(3)
        e[int(np.argmin(np.abs(a)))] = 1.0
        axis = np.cross(a, e)
        return pi * axis / np.linalg.norm(axis)
    return (c / s) * np.arctan2(s, cos)


class HandModel:
    """A loaded hand model. Immutable after construction; safe to share between workers."""

    def __init__(self,
            tree: KinematicTree,
            blends: Sequence[ShapeBlend],
            params: dict[str, float] | None = None,
            ):
        """Initialization options:
        * tree - joint hierarchy, rest offsets and mesh radii
        * blends - exactly 10 shape modes, mode i driven by beta[i]
        * params - mesh generation: rings_per_bone, ring_segments, blend_span, cap_bulge, weight_floor
        """
        if sorted(b.mode for b in blends) != list(range(BETA_DIM)):
            raise InvariantError(f"shape blend table must define modes 0..{BETA_DIM - 1} exactly once")
        self.tree = tree
        self.blends = tuple(sorted(blends, key=lambda b: b.mode))
        self.params = {
            "rings_per_bone": 5,
            "ring_segments": 8,
            "blend_span": 0.35,
            "cap_bulge": 0.5,
            "weight_floor": 1e-3,
        }
        if params is not None:
            self.params.update(params)

        self._articulated = tree.articulated
        # slot of each joint in theta (-1 for wrist and tips)
        self._slot = np.full(N_JOINTS, -1)
        for slot, j in enumerate(self._articulated):
            self._slot[j] = slot

        self._blend_tensor = np.zeros((BETA_DIM, N_JOINTS, 3))
        for blend in self.blends:
            for j in blend.joints:
                if not 0 < j < N_JOINTS:
                    raise InvariantError(f"shape mode {blend.mode} references invalid joint {j}")
                if blend.kind == "length":
                    self._blend_tensor[blend.mode, j, :] += blend.coefficient
                else:
                    self._blend_tensor[blend.mode, j, 0] += blend.coefficient

        self.topology = self._build_topology()

    def __repr__(self):
        return f"HandModel({self.tree.joint_count} joints, {self.topology.vertex_count} vertices)"

    # Skeleton

    def shape_offsets(self, beta: HandShape | ArrayLike | None = None) -> NDArray[np.float64]:
        """Per-joint offsets from the parent under shape beta"""
        beta = HandShape.coerce(beta).beta
        scale = 1.0 + np.tensordot(beta, self._blend_tensor, axes=1)
        if np.any(scale <= 0):
            raise InvariantError("shape blend collapses a bone")
        return self.tree.template_offsets * scale

    def shape_skeleton(self, beta: HandShape | ArrayLike | None = None) -> JointSet:
        """J(beta): rest-pose joints, root-relative"""
        return self._forward(HandPose(), beta)[0]

    @property
    def extent(self) -> float:
        """Largest wrist-to-joint distance of the template skeleton (mm)"""
        return float(np.linalg.norm(self.shape_skeleton(), axis=1).max())

    def _forward(self, theta: HandPose | ArrayLike | None, beta: HandShape | ArrayLike | None):
        theta = HandPose.coerce(theta)
        offsets = self.shape_offsets(beta)
        local = rodrigues_batch(theta.rotvecs)
        parent = self.tree.parent

        positions = np.zeros((N_JOINTS, 3))
        rotations = np.empty((N_JOINTS, 3, 3))
        rotations[0] = np.eye(3)
        for j in range(1, N_JOINTS):
            p = parent[j]
            positions[j] = positions[p] + rotations[p] @ offsets[j]
            slot = self._slot[j]
            rotations[j] = rotations[p] @ local[slot] if slot >= 0 else rotations[p]
        return positions, rotations, offsets

    def joints_fk(self, theta: HandPose | ArrayLike | None, beta: HandShape | ArrayLike | None = None) -> JointSet:
        """P = R_theta(J(beta)): posed joints, root-relative"""
        return self._forward(theta, beta)[0]

    # Inverse kinematics

    def fit_pose_params(self, target: ArrayLike, beta: HandShape | ArrayLike | None = None) -> tuple[HandPose, float]:
        """Analytic per-bone IK. Each articulated joint gets the smallest rotation that points its
        child bone along the target bone direction; twist about the bone axis is 0.

        Returns (theta, residual) where residual is the RMS joint position error in mm
        between joints_fk(theta, beta) and the (root-centred) target.
        """
        target = root_center(as_joints(target, "target joints"))
        parent = self.tree.parent
        short = short_bones(target, parent)
        if short:
            p, j = short[0]
            raise DegenerateInputError(f"zero-length bone between joints {p} ({JOINT_NAMES[p]}) and {j} ({JOINT_NAMES[j]})")

        offsets = self.shape_offsets(beta)
        rotations = np.empty((N_JOINTS, 3, 3))
        rotations[0] = np.eye(3)
        rotvecs = np.zeros((N_ARTICULATED, 3))
        for j in self._articulated:
            c = self.tree.child(j)
            frame = rotations[parent[j]]
            direction = target[c] - target[j]
            local = frame.T @ (direction / np.linalg.norm(direction))
            rest = offsets[c] / np.linalg.norm(offsets[c])
            rv = _minimal_rotvec(rest, local)
            rotvecs[self._slot[j]] = rv
            rotations[j] = frame @ rodrigues(rv)

        theta = HandPose(rotvecs.reshape(THETA_DIM))
        fitted = self.joints_fk(theta, beta)
        residual = float(np.sqrt(np.mean(np.sum((fitted - target) ** 2, axis=1))))
        return theta, residual

    def fit_root_orientation(self, target: ArrayLike, beta: HandShape | ArrayLike | None = None) -> NDArray[np.float64]:
        """Rotation (axis-angle) about the wrist best aligning the model palm with the target palm"""
        target = root_center(as_joints(target, "target joints"))
        rest = self.shape_skeleton(beta)
        palm = list(PALM_JOINTS[1:])
        rotation, _ = Rotation.align_vectors(target[palm], rest[palm])
        return canonical_rotvec(rotation.as_rotvec())

    # Mesh

    def _build_topology(self) -> MeshTopology:
        rings = int(self.params["rings_per_bone"])
        segments = int(self.params["ring_segments"])
        span = float(self.params["blend_span"])
        floor = float(self.params["weight_floor"])
        if rings < 2 or segments < 3:
            raise InvariantError("mesh needs at least 2 rings of 3 segments per bone")
        parent = self.tree.parent
        tips = set(self.tree.tips)

        bone, par, ts, angles, caps, faces = [], [], [], [], [], []
        for c in range(1, N_JOINTS):
            p = parent[c]
            base = len(ts)
            for i in range(rings):
                for k in range(segments):
                    bone.append(c)
                    par.append(p)
                    ts.append(i / (rings - 1))
                    angles.append(2 * pi * k / segments)
                    caps.append(0)
            start_cap = len(ts)
            end_cap = start_cap + 1
            for t, cap in ((0.0, -1), (1.0, 1)):
                bone.append(c)
                par.append(p)
                ts.append(t)
                angles.append(0.0)
                caps.append(cap)

            def ring(i: int, k: int) -> int:
                return base + i * segments + (k % segments)

            for i in range(rings - 1):
                for k in range(segments):
                    faces.append((ring(i, k), ring(i + 1, k), ring(i + 1, k + 1)))
                    faces.append((ring(i, k), ring(i + 1, k + 1), ring(i, k + 1)))
            for k in range(segments):
                faces.append((start_cap, ring(0, k + 1), ring(0, k)))
                faces.append((end_cap, ring(rings - 1, k), ring(rings - 1, k + 1)))

        vertex_bone = np.array(bone)
        vertex_parent = np.array(par)
        vertex_t = np.array(ts)

        # linear falloff with distance to either end joint, measured along the bone
        weights = np.zeros((len(ts), N_JOINTS))
        for v, (c, p, t) in enumerate(zip(bone, par, ts)):
            weights[v, p] = 1.0
            if parent[p] >= 0 and t < span:
                weights[v, parent[p]] += 0.5 * (1 - t / span)
            if c not in tips and t > 1 - span:
                weights[v, c] += 0.5 * (1 - (1 - t) / span)
        weights /= weights.sum(axis=1, keepdims=True)
        weights[weights < floor] = 0.0
        weights /= weights.sum(axis=1, keepdims=True)

        return MeshTopology(
            faces=np.array(faces, dtype=np.int64),
            vertex_bone=vertex_bone,
            vertex_parent=vertex_parent,
            vertex_t=vertex_t,
            vertex_angle=np.array(angles),
            vertex_cap=np.array(caps),
            vertex_distal=np.isin(vertex_bone, sorted(tips)),
            skin_weights=weights,
        )

    def rest_vertices(self, beta: HandShape | ArrayLike | None = None) -> NDArray[np.float64]:
        """T(beta): tube vertices around the rest skeleton J(beta)"""
        topo = self.topology
        joints = self.shape_skeleton(beta)
        radii = self.tree.radii
        bulge = float(self.params["cap_bulge"])

        start = joints[topo.vertex_parent]
        end = joints[topo.vertex_bone]
        axis = end - start
        axis_unit = axis / np.linalg.norm(axis, axis=1, keepdims=True)
        ref = np.where(np.abs(axis_unit[:, 2:3]) > 0.9, np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]))
        u = np.cross(axis_unit, ref)
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        w = np.cross(axis_unit, u)

        t = topo.vertex_t[:, None]
        radius = (1 - t) * radii[topo.vertex_parent][:, None] + t * radii[topo.vertex_bone][:, None]
        ang = topo.vertex_angle[:, None]
        verts = start + t * axis + radius * (np.cos(ang) * u + np.sin(ang) * w)

        start_cap = topo.vertex_cap == -1
        end_cap = topo.vertex_cap == 1
        verts[start_cap] = start[start_cap] - axis_unit[start_cap] * bulge * radii[topo.vertex_parent[start_cap]][:, None]
        verts[end_cap] = end[end_cap] + axis_unit[end_cap] * bulge * radii[topo.vertex_bone[end_cap]][:, None]
        return verts

    def joint_transforms(self, theta: HandPose | ArrayLike | None, beta: HandShape | ArrayLike | None = None):
        """Per-joint rigid transforms x -> posed[j] + G[j] (x - rest[j]); returns (posed, G, rest)"""
        posed, rotations, _ = self._forward(theta, beta)
        rest = self.shape_skeleton(beta)
        return posed, rotations, rest

    def mesh_lbs(self,
            theta: HandPose | ArrayLike | None,
            beta: HandShape | ArrayLike | None = None,
            template: ColorTemplate | None = None,
            ) -> HandMesh:
        """W(T(theta, beta), J(beta), theta, omega): linear blend skinning of the tube mesh"""
        topo = self.topology
        rest_verts = self.rest_vertices(beta)
        posed, rotations, rest = self.joint_transforms(theta, beta)

        diff = rest_verts[:, None, :] - rest[None, :, :]
        images = np.einsum("jab,vjb->vja", rotations, diff) + posed[None, :, :]
        vertices = np.einsum("vj,vja->va", topo.skin_weights, images)

        template = TEMPLATES[0] if template is None else template
        return HandMesh(vertices, topo.faces, topo.skin_weights, template.vertex_colors(topo))


# Asset loading

def _parse_float(path, lineno: int, token: str, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise AssetFormatError(path, lineno, f"{what} is not a number: {token!r}") from None
    if not np.isfinite(value):
        raise AssetFormatError(path, lineno, f"{what} is not finite: {token!r}")
    return value


def _parse_int(path, lineno: int, token: str, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise AssetFormatError(path, lineno, f"{what} is not an integer: {token!r}") from None


def parse_hand_model(text: str, path: str | PathLike[str] = "<string>") -> HandModel:
    version = None
    joints: dict[int, tuple[str, int, tuple[float, float, float], float]] = {}
    blends: list[ShapeBlend] = []
    params: dict[str, float] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind = tokens[0]
        if kind == "version":
            if len(tokens) != 2:
                raise AssetFormatError(path, lineno, "expected `version <n>`")
            version = _parse_int(path, lineno, tokens[1], "version")
            if version != ASSET_VERSION:
                raise AssetFormatError(path, lineno, f"unsupported asset version {version}")
        elif kind == "joint":
            if len(tokens) != 8:
                raise AssetFormatError(path, lineno, "expected `joint <index> <name> <parent> <dx> <dy> <dz> <radius>`")
            index = _parse_int(path, lineno, tokens[1], "joint index")
            if index in joints:
                raise AssetFormatError(path, lineno, f"joint {index} defined twice")
            parent = _parse_int(path, lineno, tokens[3], "parent")
            offset = tuple(_parse_float(path, lineno, tok, "offset") for tok in tokens[4:7])
            radius = _parse_float(path, lineno, tokens[7], "radius")
            if radius <= 0:
                raise AssetFormatError(path, lineno, "radius must be positive")
            joints[index] = (tokens[2], parent, offset, radius)  # type: ignore[assignment]
        elif kind == "blend":
            if len(tokens) != 6:
                raise AssetFormatError(path, lineno, "expected `blend <mode> <name> <length|width> <coefficient> <joints>`")
            if tokens[3] not in ("length", "width"):
                raise AssetFormatError(path, lineno, f"unknown blend kind {tokens[3]!r}")
            blends.append(ShapeBlend(
                mode=_parse_int(path, lineno, tokens[1], "mode"),
                name=tokens[2],
                kind=tokens[3],  # type: ignore[arg-type]
                coefficient=_parse_float(path, lineno, tokens[4], "coefficient"),
                joints=tuple(_parse_int(path, lineno, tok, "joint") for tok in tokens[5].split(",")),
            ))
        elif kind == "param":
            if len(tokens) != 3:
                raise AssetFormatError(path, lineno, "expected `param <name> <value>`")
            params[tokens[1]] = _parse_float(path, lineno, tokens[2], tokens[1])
        else:
            raise AssetFormatError(path, lineno, f"unknown record type {kind!r}")

    if version is None:
        raise AssetFormatError(path, 0, "missing `version` line")
    if sorted(joints) != list(range(N_JOINTS)):
        raise AssetFormatError(path, 0, f"expected joints 0..{N_JOINTS - 1}, got {sorted(joints)}")

    ordered = [joints[i] for i in range(N_JOINTS)]
    tree = KinematicTree(
        names=tuple(j[0] for j in ordered),
        parent=tuple(j[1] for j in ordered),
        template_offsets=np.array([j[2] for j in ordered]),
        radii=np.array([j[3] for j in ordered]),
    )
    return HandModel(tree, blends, params)


def load_hand_model(path: str | PathLike[str] | None = None) -> HandModel:
    """Loads the hand model asset; the shipped default when path is None"""
    if path is None:
        text = resources.files("pyseqhand").joinpath(DEFAULT_ASSET).read_text(encoding="utf-8")
        return parse_hand_model(text, DEFAULT_ASSET)
    with open(path, encoding="utf-8") as f:
        return parse_hand_model(f.read(), path)


@lru_cache(maxsize=None)
def default_model() -> HandModel:
    return load_hand_model()


# Module-level operations on the default model

def _model(model: HandModel | None) -> HandModel:
    return default_model() if model is None else model


def shape_skeleton(beta: HandShape | ArrayLike | None = None, model: HandModel | None = None) -> JointSet:
    return _model(model).shape_skeleton(beta)


def joints_fk(theta: HandPose | ArrayLike | None, beta: HandShape | ArrayLike | None = None, model: HandModel | None = None) -> JointSet:
    return _model(model).joints_fk(theta, beta)


def mesh_lbs(theta: HandPose | ArrayLike | None, beta: HandShape | ArrayLike | None = None,
        template: ColorTemplate | None = None, model: HandModel | None = None) -> HandMesh:
    return _model(model).mesh_lbs(theta, beta, template)


def fit_pose_params(target: ArrayLike, beta: HandShape | ArrayLike | None = None, model: HandModel | None = None) -> tuple[HandPose, float]:
    return _model(model).fit_pose_params(target, beta)


def fit_root_orientation(target: ArrayLike, beta: HandShape | ArrayLike | None = None, model: HandModel | None = None) -> NDArray[np.float64]:
    return _model(model).fit_root_orientation(target, beta)


# PCA pose subspace

def _pose_matrix(poses: Iterable[HandPose | ArrayLike] | NDArray[np.float64]) -> NDArray[np.float64]:
    if isinstance(poses, np.ndarray) and poses.ndim == 2:
        matrix = np.asarray(poses, dtype=np.float64)
    else:
        matrix = np.stack([HandPose.coerce(p).theta_full for p in poses])
    if matrix.ndim != 2 or matrix.shape[1] != THETA_DIM:
        raise DimensionError("poses", ("N", THETA_DIM), matrix.shape)
    return matrix


def pose_pca_fit(poses: Iterable[HandPose | ArrayLike] | NDArray[np.float64], k: int = 10, allow_degenerate: bool = False) -> PoseBasis:
    """Principal subspace of theta. Components are the top-k right singular vectors of the
    centred pose matrix, signed so that each component's largest-magnitude entry is positive.
    """
    matrix = _pose_matrix(poses)
    n = len(matrix)
    if not 1 <= k <= THETA_DIM:
        raise InvariantError(f"k must lie in [1, {THETA_DIM}], got {k}")
    if n < k:
        raise DegenerateInputError(f"need at least k={k} poses, got {n}")

    mean = matrix.mean(axis=0)
    centred = matrix - mean
    ddof = n - 1 if n > 1 else 1
    total = float(np.sum(centred ** 2) / ddof)
    if total == 0.0:
        if not allow_degenerate:
            raise DegenerateInputError("pose covariance is zero (all poses identical)")
        return PoseBasis(mean, np.eye(THETA_DIM)[:k], np.zeros(k), 0.0)

    _, singular, vt = np.linalg.svd(centred, full_matrices=False)
    components = vt[:k].copy()
    signs = np.sign(components[np.arange(k), np.argmax(np.abs(components), axis=1)])
    components *= signs[:, None]
    eigenvalues = singular[:k] ** 2 / ddof
    return PoseBasis(mean, components, eigenvalues, total)


def pose_pca_project(basis: PoseBasis, theta_full: HandPose | ArrayLike) -> NDArray[np.float64]:
    theta = theta_full.theta_full if isinstance(theta_full, HandPose) else np.asarray(theta_full, dtype=np.float64)
    if theta.shape != (THETA_DIM,):
        raise DimensionError("theta", (THETA_DIM,), theta.shape)
    return basis.components @ (theta - basis.mean)


def pose_pca_reconstruct(basis: PoseBasis, coeffs: ArrayLike) -> HandPose:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (basis.k,):
        raise DimensionError("PCA coefficients", (basis.k,), coeffs.shape)
    return HandPose.create(basis.mean + coeffs @ basis.components)
