from __future__ import annotations

import csv

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pyseqhand.errors import DatasetError, DimensionError, InvariantError, PoseDBFormatError
from pyseqhand.metrics import (
    PckCurve,
    auc,
    default_thresholds,
    evaluate,
    load_keypoint_file,
    match_frames,
    mean_error,
    pck3d,
    write_keypoint_file,
    write_pck_csv,
)


def test_perfect_predictions(rng):
    joints = rng.normal(0, 50, size=(8, 21, 3))
    curve = pck3d(joints, joints)
    assert np.all(curve.fractions == 1)
    assert auc(curve) == 1.0
    assert mean_error(joints, joints) == 0.0


def test_threshold_boundary_counts_as_correct():
    truth = np.zeros((1, 1, 3))
    pred = np.array([[[3.0, 4.0, 0.0]]])
    curve = pck3d(pred, truth, [4, 5, 6])
    assert curve.fractions.tolist() == [0.0, 1.0, 1.0]


def test_pck_matches_recount(rng):
    truths = rng.normal(0, 50, size=(30, 21, 3))
    preds = truths + rng.normal(0, 20, size=truths.shape)
    thresholds = default_thresholds()
    curve = pck3d(preds, truths, thresholds)
    errors = [np.linalg.norm(p - t) for frame_p, frame_t in zip(preds, truths) for p, t in zip(frame_p, frame_t)]
    for tau, fraction in curve:
        assert fraction == sum(e <= tau for e in errors) / len(errors)
    assert np.all(np.diff(curve.fractions) >= 0)

    order = rng.permutation(len(preds))
    shuffled = pck3d(preds[order], truths[order], thresholds)
    assert np.array_equal(shuffled.fractions, curve.fractions)


def test_auc_constant_curves():
    thresholds = default_thresholds()
    assert auc(PckCurve(thresholds, np.ones(len(thresholds)))) == pytest.approx(1.0)
    assert auc(PckCurve(thresholds, np.full(len(thresholds), 0.5))) == pytest.approx(0.5)


def test_auc_piecewise_linear():
    curve = PckCurve(np.array([20.0, 30.0, 50.0]), np.array([0.0, 0.5, 1.0]))
    # 10 * 0.25 + 20 * 0.75 over a 30 mm span
    assert auc(curve) == pytest.approx(17.5 / 30)


def test_auc_single_threshold():
    assert auc(PckCurve(np.array([20.0]), np.array([0.25]))) == 0.25


def test_mean_error_pythagorean():
    truth = np.zeros((1, 21, 3))
    pred = truth.copy()
    pred[0, 5] = [3, 4, 0]
    assert mean_error(pred[:, 5:6], truth[:, 5:6]) == 5.0
    assert mean_error(pred, truth) == pytest.approx(5 / 21)


def test_mean_error_matches_oracle(rng):
    truths = rng.normal(size=(10, 21, 2))
    preds = rng.normal(size=(10, 21, 2))
    oracle = np.mean([np.sqrt(np.sum((p - t) ** 2)) for p, t in zip(preds.reshape(-1, 2), truths.reshape(-1, 2))])
    assert mean_error(preds, truths) == pytest.approx(oracle)


def test_invalid_inputs():
    with pytest.raises(DimensionError):
        pck3d(np.zeros((2, 21, 3)), np.zeros((3, 21, 3)))
    with pytest.raises(InvariantError):
        pck3d(np.zeros((2, 21, 3)), np.zeros((2, 21, 3)), [30, 20])
    with pytest.raises(InvariantError):
        PckCurve(np.array([1.0, 2.0]), np.array([0.5, 0.2]))


def test_keypoint_files(tmp_path, rng):
    ids = np.array([4, 2, 9])
    joints = rng.normal(0, 50, size=(3, 21, 3))
    path = tmp_path / "pred.txt"
    write_keypoint_file(path, ids, joints)
    loaded_ids, loaded = load_keypoint_file(path)
    assert loaded_ids.tolist() == [4, 2, 9]
    assert np.array_equal(loaded, joints)

    bad = tmp_path / "bad.txt"
    bad.write_text("# predictions\n1" + " 0" * 42 + "\n")
    with pytest.raises(PoseDBFormatError) as exc:
        load_keypoint_file(bad)
    assert exc.value.line == 2
    _, flat = load_keypoint_file(bad, dims=2)
    assert flat.shape == (1, 21, 2)


def test_match_frames():
    order = match_frames(np.array([3, 1, 2]), np.array([1, 2, 3]))
    assert order.tolist() == [1, 2, 0]
    with pytest.raises(DatasetError):
        match_frames(np.array([1, 2]), np.array([1, 3]))
    with pytest.raises(DatasetError):
        match_frames(np.array([1, 1]), np.array([1]))


def test_evaluate_and_csv(tmp_path, rng):
    truths = rng.normal(0, 50, size=(5, 21, 3))
    preds = truths + rng.normal(0, 15, size=truths.shape)
    summary = evaluate(preds, truths)
    assert summary.frames == 5
    assert 0 <= summary.auc <= 1
    assert summary.mean_error > 0

    path = tmp_path / "pck.csv"
    write_pck_csv(summary.curve, path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["threshold", "fraction"]
    assert len(rows) == 1 + len(default_thresholds())
    assert_allclose([float(r[1]) for r in rows[1:]], summary.curve.fractions)
