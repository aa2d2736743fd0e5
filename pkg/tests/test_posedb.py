from __future__ import annotations

import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import random_poses
from pyseqhand.errors import EmptyIndexError, PoseDBFormatError
from pyseqhand.posedb import (
    PoseDB,
    PoseRecord,
    brute_force_query,
    build_index,
    format_record,
    load_db,
    nn_query,
    save_db,
)


def _row(id: int, joints: np.ndarray, tags: str = "") -> str:
    line = f"{id} " + " ".join(repr(float(v)) for v in joints.ravel())
    return line + (f"  # {tags}" if tags else "")


VALID = " ".join(str(v) for v in range(63))


def test_load_three_records(tmp_path, rng):
    path = tmp_path / "db.txt"
    path.write_text("# header comment\n\n" + "\n".join(_row(i, rng.normal(size=(21, 3))) for i in range(3)) + "\n")
    db = load_db(path)
    assert len(db) == 3
    assert [r.id for r in db] == [0, 1, 2]


def test_records_are_root_centred(tmp_path, rng):
    path = tmp_path / "db.txt"
    joints = rng.normal(size=(2, 21, 3)) + [100, 50, -20]
    path.write_text("\n".join(_row(i, j) for i, j in enumerate(joints)))
    db = load_db(path)
    for record, raw in zip(db, joints):
        assert np.array_equal(record.joints[0], np.zeros(3))
        assert_allclose(record.joints, raw - raw[0])


def test_nan_names_the_record(tmp_path, rng):
    joints = rng.normal(size=(21, 3))
    bad = joints.copy()
    bad[4, 1] = np.nan
    path = tmp_path / "db.txt"
    path.write_text(_row(1, joints) + "\n" + _row(17, bad) + "\n")
    with pytest.raises(PoseDBFormatError) as exc:
        load_db(path)
    assert exc.value.record_id == 17
    assert exc.value.line == 2
    assert "record 17" in str(exc.value)


def test_zero_length_bone_is_rejected(tmp_path, model, rng):
    poses = random_poses(model, rng, 3)
    poses[2, 8] = poses[2, 7]
    path = tmp_path / "db.txt"
    path.write_text("\n".join(format_record(PoseRecord.centred(i, p)) for i, p in enumerate(poses)) + "\n")
    with pytest.raises(PoseDBFormatError) as exc:
        load_db(path)
    assert (exc.value.line, exc.value.record_id) == (3, 2)
    assert "zero-length bone between index_dip and index_tip" in str(exc.value)


def test_loaded_records_are_ik_fittable(db_file, model):
    for record in load_db(db_file):
        _, residual = model.fit_pose_params(record.joints)
        assert np.isfinite(residual)


@pytest.mark.parametrize("text, line", [
    ("1 2 3\n", 1),
    ("x" + " 0" * 63 + "\n", 1),
    (f"1 {VALID}\n1 {VALID}\n", 2),
    ("1" + " 0" * 62 + " abc\n", 1),
])
def test_malformed_rows(tmp_path, text, line):
    path = tmp_path / "db.txt"
    path.write_text(text)
    with pytest.raises(PoseDBFormatError) as exc:
        load_db(path)
    assert exc.value.line == line


def test_fewer_than_two_records(tmp_path):
    path = tmp_path / "db.txt"
    path.write_text(f"1 {VALID}\n")
    with pytest.raises(PoseDBFormatError):
        load_db(path)


def test_save_load_round_trip(tmp_path, pose_db):
    records = list(pose_db)
    records[3] = PoseRecord(records[3].id, records[3].joints, ("subject_2", "egocentric"))
    db = PoseDB(records)
    first = tmp_path / "a.txt"
    second = tmp_path / "b.txt"
    save_db(db, first)
    loaded = load_db(first)
    save_db(loaded, second)
    assert list(loaded) == list(db)
    assert list(load_db(second)) == list(db)
    assert first.read_bytes() == second.read_bytes()
    assert loaded.fingerprint == db.fingerprint
    assert format_record(loaded.records[3]).endswith("# subject_2 egocentric")


def test_exact_member_query(pose_db):
    index = build_index(pose_db)
    record = pose_db.records[11]
    found, distance = nn_query(index, record.joints)
    assert found.id == record.id
    assert distance == 0.0


def test_index_matches_brute_force():
    rng = np.random.default_rng(99)
    db = PoseDB.from_joints(rng.normal(0, 40, size=(10_000, 21, 3)))
    index = build_index(db)
    queries = rng.normal(0, 40, size=(1000, 21, 3))
    queries -= queries[:, :1]
    start = time.perf_counter()
    found = [index.query(q) for q in queries]
    elapsed = time.perf_counter() - start
    for q, (got, d_got) in zip(queries, found):
        want, d_want = brute_force_query(db, q)
        assert got.id == want.id
        assert d_got == d_want
    assert elapsed < 30


def test_ties_resolve_to_lowest_id():
    base = np.zeros((21, 3))
    up = base.copy()
    up[1:] += [0, 0, 1]
    down = base.copy()
    down[1:] -= [0, 0, 1]
    db = PoseDB([PoseRecord.centred(9, up), PoseRecord.centred(4, down), PoseRecord.centred(6, up * 3)])
    index = build_index(db)
    found, distance = index.query(base)
    assert found.id == 4
    assert distance == pytest.approx(np.sqrt(20))
    assert brute_force_query(db, base)[0].id == 4


def test_empty_index():
    db = PoseDB([])
    index = build_index(db)
    with pytest.raises(EmptyIndexError):
        index.query(np.zeros((21, 3)))
    with pytest.raises(EmptyIndexError):
        brute_force_query(db, np.zeros((21, 3)))
