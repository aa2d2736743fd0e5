from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from pyseqhand.handmodel import N_ARTICULATED, THETA_DIM, HandModel, default_model
from pyseqhand.posedb import PoseDB, save_db


def random_zero_twist_theta(model: HandModel, rng: np.random.Generator, beta=None, max_angle: float = 0.9 * np.pi) -> np.ndarray:
    """Random pose whose every joint rotation axis is perpendicular to the joint's rest child bone"""
    offsets = model.shape_offsets(beta)
    theta = np.zeros((N_ARTICULATED, 3))
    for slot, j in enumerate(model.tree.articulated):
        bone = offsets[model.tree.child(j)]
        bone = bone / np.linalg.norm(bone)
        axis = np.cross(bone, rng.normal(size=3))
        axis /= np.linalg.norm(axis)
        theta[slot] = axis * rng.uniform(0, max_angle)
    return theta.reshape(THETA_DIM)


def random_poses(model: HandModel, rng: np.random.Generator, n: int, max_angle: float = 0.6) -> np.ndarray:
    return np.stack([model.joints_fk(random_zero_twist_theta(model, rng, max_angle=max_angle)) for _ in range(n)])


@pytest.fixture(scope="session")
def model() -> HandModel:
    return default_model()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def pose_db(model) -> PoseDB:
    rng = np.random.default_rng(7)
    return PoseDB.from_joints(random_poses(model, rng, 60))


@pytest.fixture
def db_file(tmp_path: Path, pose_db: PoseDB) -> Path:
    path = tmp_path / "poses.txt"
    save_db(pose_db, path)
    return path


@pytest.fixture
def background_dir(tmp_path: Path) -> Path:
    directory = tmp_path / "backgrounds"
    directory.mkdir()
    rng = np.random.default_rng(3)
    for name, (w, h) in (("a.png", (320, 256)), ("b.png", (224, 224))):
        pixels = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        Image.fromarray(pixels).save(directory / name)
    return directory
