"""psh.metrics

3D-PCK, AUC and mean Euclidean error.

A joint is correct at threshold tau when its error is <= tau.
Keypoint files hold one frame per line: `<frame_id>` then 63 (3D) or 42 (2D) coordinates,
`#` starts a comment.
"""

from __future__ import annotations

from dataclasses import dataclass
from os import PathLike
import csv

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DatasetError, DimensionError, InvariantError, PoseDBFormatError
from .handmodel import N_JOINTS


@dataclass(frozen=True, eq=False)
class PckCurve:
    thresholds: NDArray[np.float64]
    fractions: NDArray[np.float64]

    def __post_init__(self):
        if self.thresholds.shape != self.fractions.shape or self.thresholds.ndim != 1:
            raise DimensionError("PCK curve", self.thresholds.shape, self.fractions.shape)
        if np.any(np.diff(self.fractions) < 0):
            raise InvariantError("PCK fractions must be non-decreasing in the threshold")

    def __iter__(self):
        return zip(self.thresholds.tolist(), self.fractions.tolist())


def default_thresholds() -> NDArray[np.float64]:
    """20..50 mm in 1 mm steps"""
    return np.arange(20, 51, dtype=np.float64)


def _errors(preds: ArrayLike, truths: ArrayLike) -> NDArray[np.float64]:
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if preds.shape != truths.shape:
        raise DimensionError("predictions", truths.shape, preds.shape)
    if preds.ndim < 2 or preds.shape[-1] not in (2, 3) or preds.size == 0:
        raise DimensionError("keypoints", ("...", "2 or 3"), preds.shape)
    return np.linalg.norm(preds - truths, axis=-1).ravel()


def pck3d(preds: ArrayLike, truths: ArrayLike, thresholds: ArrayLike | None = None) -> PckCurve:
    thresholds = default_thresholds() if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    if thresholds.ndim != 1 or len(thresholds) == 0:
        raise DimensionError("thresholds", ("T",), thresholds.shape)
    if np.any(thresholds <= 0) or np.any(np.diff(thresholds) <= 0):
        raise InvariantError("thresholds must be positive and strictly ascending")
    errors = np.sort(_errors(preds, truths))
    counts = np.searchsorted(errors, thresholds, side="right")
    return PckCurve(thresholds, counts / len(errors))


def auc(curve: PckCurve) -> float:
    """Trapezoidal area under the curve divided by the threshold span; a single threshold gives its fraction"""
    if len(curve.thresholds) == 1:
        return float(curve.fractions[0])
    x, y = curve.thresholds, curve.fractions
    area = float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2))
    return area / float(x[-1] - x[0])


def mean_error(preds: ArrayLike, truths: ArrayLike) -> float:
    """Average per-keypoint Euclidean distance (mm for 3D, px for 2D)"""
    return float(_errors(preds, truths).mean())


@dataclass(frozen=True)
class EvalSummary:
    curve: PckCurve
    auc: float
    mean_error: float
    frames: int


def evaluate(preds: ArrayLike, truths: ArrayLike, thresholds: ArrayLike | None = None) -> EvalSummary:
    curve = pck3d(preds, truths, thresholds)
    return EvalSummary(curve, auc(curve), mean_error(preds, truths), len(np.asarray(preds)))


def load_keypoint_file(path: str | PathLike[str], dims: int = 3) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    """Returns (frame_ids (N,), keypoints (N, 21, dims))"""
    width = N_JOINTS * dims
    ids: list[int] = []
    rows: list[list[float]] = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            tokens = raw.split("#", 1)[0].split()
            if not tokens:
                continue
            if len(tokens) != 1 + width:
                raise PoseDBFormatError(path, lineno, f"expected frame id + {width} coordinates, got {len(tokens)} fields")
            try:
                ids.append(int(tokens[0]))
                rows.append([float(tok) for tok in tokens[1:]])
            except ValueError as e:
                raise PoseDBFormatError(path, lineno, str(e)) from None
            if not np.all(np.isfinite(rows[-1])):
                raise PoseDBFormatError(path, lineno, "non-finite coordinate", ids[-1])
    if not rows:
        raise PoseDBFormatError(path, None, "no keypoint rows")
    return np.array(ids, dtype=np.int64), np.array(rows).reshape(len(rows), N_JOINTS, dims)


def write_keypoint_file(path: str | PathLike[str], ids: ArrayLike, keypoints: ArrayLike):
    keypoints = np.asarray(keypoints, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as f:
        for id, kp in zip(np.asarray(ids).tolist(), keypoints):
            f.write(f"{id} " + " ".join(repr(float(v)) for v in kp.ravel()) + "\n")


def match_frames(pred_ids: NDArray[np.int64], truth_ids: NDArray[np.int64]) -> NDArray[np.int64]:
    """Index into the prediction rows for every truth row; both files must list the same frames"""
    if len(set(pred_ids.tolist())) != len(pred_ids):
        raise DatasetError("prediction file repeats a frame id")
    if set(pred_ids.tolist()) != set(truth_ids.tolist()):
        missing = sorted(set(truth_ids.tolist()) ^ set(pred_ids.tolist()))
        raise DatasetError(f"prediction and truth frame ids differ: {missing[:10]}")
    position = {id: i for i, id in enumerate(pred_ids.tolist())}
    return np.array([position[id] for id in truth_ids.tolist()], dtype=np.int64)


def write_pck_csv(curve: PckCurve, path: str | PathLike[str]):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold", "fraction"])
        for threshold, fraction in curve:
            writer.writerow([repr(threshold), repr(fraction)])
