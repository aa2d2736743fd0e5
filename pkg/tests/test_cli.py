from __future__ import annotations

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import random_zero_twist_theta
from pyseqhand.cli import build_parser, load_config_file, main, parse_thresholds, resolve_gen_options
from pyseqhand.errors import ConfigError
from pyseqhand.metrics import write_keypoint_file
from pyseqhand.posedb import load_db


def _error_line(capsys) -> str:
    err = capsys.readouterr().err.strip().splitlines()
    return err[-1]


def test_eval_identical_files(tmp_path, capsys, rng):
    path = tmp_path / "truth.txt"
    write_keypoint_file(path, [1, 2, 3], rng.normal(0, 40, size=(3, 21, 3)))
    csv_path = tmp_path / "pck.csv"
    assert main(["eval", str(path), str(path), "--csv", str(csv_path)]) == 0
    out = capsys.readouterr().out
    assert "frames=3 auc=1.000000 mean_error=0.000000mm" in out
    assert csv_path.read_text().startswith("threshold,fraction")


def test_eval_reorders_predictions(tmp_path, capsys, rng):
    joints = rng.normal(0, 40, size=(3, 21, 3))
    write_keypoint_file(tmp_path / "truth.txt", [1, 2, 3], joints)
    write_keypoint_file(tmp_path / "pred.txt", [3, 1, 2], joints[[2, 0, 1]])
    assert main(["eval", str(tmp_path / "pred.txt"), str(tmp_path / "truth.txt"), "--thresholds", "10:30:10"]) == 0
    assert "auc=1.000000" in capsys.readouterr().out


def test_eval_mismatched_frames(tmp_path, capsys, rng):
    joints = rng.normal(size=(2, 21, 3))
    write_keypoint_file(tmp_path / "truth.txt", [1, 2], joints)
    write_keypoint_file(tmp_path / "pred.txt", [1, 5], joints)
    assert main(["eval", str(tmp_path / "pred.txt"), str(tmp_path / "truth.txt")]) == 5
    assert _error_line(capsys).startswith("error[io]: prediction and truth frame ids differ")


def test_eval_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2 3\n")
    assert main(["eval", str(bad), str(bad)]) == 3
    assert _error_line(capsys).startswith(f"error[format]: {bad}:1:")


def test_missing_file_is_an_io_error(tmp_path, capsys):
    missing = tmp_path / "missing.txt"
    assert main(["eval", str(missing), str(missing)]) == 5
    assert _error_line(capsys).startswith("error[io]:")


def test_ik_round_trip(tmp_path, capsys, model, rng):
    thetas = [random_zero_twist_theta(model, rng) for _ in range(3)]
    path = tmp_path / "joints.txt"
    write_keypoint_file(path, [10, 11, 12], [model.joints_fk(t) for t in thetas])
    out_path = tmp_path / "theta.txt"
    assert main(["ik", str(path), "--out", str(out_path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in lines] == ["10", "11", "12"]
    rows = [list(map(float, line.split())) for line in out_path.read_text().splitlines()]
    for row, theta in zip(rows, thetas):
        assert row[1] < 1e-6
        assert_allclose(model.joints_fk(np.array(row[2:])), model.joints_fk(theta), atol=1e-6)


def test_ik_bad_beta(tmp_path, capsys, model):
    path = tmp_path / "joints.txt"
    write_keypoint_file(path, [0], [model.shape_skeleton()])
    assert main(["ik", str(path), "--beta", "1,2"]) == 2
    assert _error_line(capsys).startswith("error[config]:")


def test_convert_centres_records(tmp_path, capsys, pose_db):
    shifted = tmp_path / "shifted.txt"
    with open(shifted, "w") as f:
        for record in pose_db:
            f.write(f"{record.id} " + " ".join(repr(float(v)) for v in (record.joints + 5).ravel()) + "\n")
    out = tmp_path / "converted.txt"
    assert main(["convert", str(shifted), str(out)]) == 0
    converted = load_db(out)
    assert_allclose(converted.matrix, pose_db.matrix, atol=1e-9)
    assert "converted 60 records" in capsys.readouterr().out


def test_gen_and_inspect(tmp_path, capsys, db_file):
    out = tmp_path / "data"
    argv = ["--quiet", "gen", "--db", str(db_file), "--out", str(out), "--sequences", "1",
            "--n-frames", "3", "--width", "48", "--height", "48", "--no-progress"]
    assert main(argv) == 0
    assert main(["inspect", str(out), "--db", str(db_file)]) == 0
    assert "checks passed" in capsys.readouterr().out

    (out / "seq_000000" / "frame_001_mask.png").unlink()
    assert main(["inspect", str(out)]) == 1
    assert _error_line(capsys) == "error[inspect]: seq_000000: files: seq_000000/frame_001_mask.png missing"


def test_gen_rejects_bad_alpha(tmp_path, capsys, db_file):
    argv = ["gen", "--db", str(db_file), "--out", str(tmp_path / "x"), "--alpha", "0"]
    assert main(argv) == 2
    assert _error_line(capsys).startswith("error[config]: alpha")


def test_gen_needs_db(tmp_path, capsys):
    assert main(["gen", "--out", str(tmp_path)]) == 2
    assert _error_line(capsys) == "error[config]: --db is required (flag or config file)"


def test_option_precedence(tmp_path):
    config = tmp_path / "gen.json"
    config.write_text(json.dumps({"db": "a.txt", "out": "o", "sequences": 5, "n-frames": 6, "alpha": 2}))
    parser = build_parser()

    options = resolve_gen_options(parser.parse_args(["gen", "--config", str(config)]))
    assert (options["sequences"], options["n_frames"], options["alpha"], options["width"]) == (5, 6, 2.0, 224)

    options = resolve_gen_options(parser.parse_args(["gen", "--config", str(config), "--preset", "test"]))
    assert options["sequences"] == 1000

    args = parser.parse_args(["gen", "--config", str(config), "--preset", "train", "--sequences", "7", "--alpha", "1.5"])
    options = resolve_gen_options(args)
    assert (options["sequences"], options["alpha"], options["n_frames"]) == (7, 1.5, 6)


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"frames": 3}))
    with pytest.raises(ConfigError):
        load_config_file(str(bad))
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config_file(str(bad))
    with pytest.raises(ConfigError):
        load_config_file(str(tmp_path / "missing.json"))


def test_parse_thresholds():
    assert parse_thresholds("20:50:1").tolist() == list(range(20, 51))
    assert parse_thresholds("5,10,15").tolist() == [5, 10, 15]
    assert parse_thresholds(None) is None
    with pytest.raises(ConfigError):
        parse_thresholds("20:50:0")
    with pytest.raises(ConfigError):
        parse_thresholds("a,b")


def test_camera_bound_options(tmp_path):
    config = tmp_path / "gen.json"
    config.write_text(json.dumps({"db": "a.txt", "out": "o", "scale-range": [0.8, 1.2], "max_angle": 1.0}))
    parser = build_parser()

    options = resolve_gen_options(parser.parse_args(["gen", "--config", str(config), "--translation-region", "0.5"]))
    assert (options["scale_range"], options["translation_region"], options["max_angle"]) == ((0.8, 1.2), 0.5, 1.0)

    options = resolve_gen_options(parser.parse_args(["gen", "--config", str(config), "--scale-range", "0.6,0.9"]))
    assert options["scale_range"] == (0.6, 0.9)

    config.write_text(json.dumps({"scale_range": [1, 2, 3]}))
    with pytest.raises(ConfigError):
        load_config_file(str(config))


def test_gen_uses_camera_bounds(tmp_path, capsys, db_file):
    out = tmp_path / "data"
    argv = ["--quiet", "gen", "--db", str(db_file), "--out", str(out), "--sequences", "2", "--n-frames", "3",
            "--width", "48", "--height", "48", "--no-progress", "--scale-range", "0.7,0.8", "--max-angle", "0.5"]
    assert main(argv) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["flow"]["camera"]["scale_range"] == [0.7, 0.8]
    for seq in ("seq_000000", "seq_000001"):
        annot = json.loads((out / seq / "annot.json").read_text())
        for frame in annot["frames"]:
            assert np.linalg.norm(frame["cam"]["r"]) <= 0.5 + 1e-9


def test_gen_rejects_bad_camera_bounds(tmp_path, capsys, db_file):
    argv = ["gen", "--db", str(db_file), "--out", str(tmp_path / "x"), "--max-angle", "4"]
    assert main(argv) == 2
    assert _error_line(capsys).startswith("error[config]: max_angle")
