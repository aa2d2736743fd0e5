"""psh.posedb

Static pose database and exact nearest-neighbour search.

File format: one record per line,

    <id> <x0> <y0> <z0> ... <x20> <y20> <z20>  [# tag tag ...]

63 decimal millimetre coordinates in joint order (wrist, then thumb -> pinky, each MCP, PIP, DIP, TIP).
Blank lines and lines starting with `#` are ignored. Records are root-centred on load.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from os import PathLike
from typing import Iterable, Iterator
import hashlib
import logging
import time

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from .errors import EmptyIndexError, InvariantError, PoseDBFormatError
from .handmodel import JOINT_NAMES, N_JOINTS, JointSet, as_joints, short_bones

logger = logging.getLogger(__name__)

POSE_DIM = N_JOINTS * 3


@dataclass(frozen=True, eq=False)
class PoseRecord:
    id: int
    joints: JointSet
    tags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        joints = as_joints(self.joints, f"record {self.id} joints")
        if np.any(joints[0] != 0):
            raise InvariantError(f"record {self.id} is not root-centred (wrist at {joints[0]})")
        object.__setattr__(self, "joints", joints)

    @classmethod
    def centred(cls, id: int, joints: ArrayLike, tags: Iterable[str] = ()) -> PoseRecord:
        joints = as_joints(joints, f"record {id} joints")
        return cls(int(id), joints - joints[0], tuple(tags))

    @property
    def flat(self) -> NDArray[np.float64]:
        return self.joints.reshape(POSE_DIM)

    def __eq__(self, other):
        if not isinstance(other, PoseRecord):
            return NotImplemented
        return self.id == other.id and self.tags == other.tags and np.array_equal(self.joints, other.joints)

    __hash__ = None  # type: ignore[assignment]


class PoseDB:
    """An in-memory pose database. Record ids are unique; order is file order."""

    def __init__(self, records: Iterable[PoseRecord]):
        self.records: tuple[PoseRecord, ...] = tuple(records)
        self._by_id: dict[int, int] = {}
        for pos, record in enumerate(self.records):
            if record.id in self._by_id:
                raise InvariantError(f"duplicate record id {record.id}")
            self._by_id[record.id] = pos
        if self.records:
            self.matrix = np.stack([r.flat for r in self.records])
        else:
            self.matrix = np.zeros((0, POSE_DIM))
        self.ids = np.array([r.id for r in self.records], dtype=np.int64)

    @classmethod
    def from_joints(cls, joints: ArrayLike, ids: Iterable[int] | None = None) -> PoseDB:
        """Builds a database from an (N, 21, 3) array, root-centring every pose"""
        joints = np.asarray(joints, dtype=np.float64)
        ids = range(len(joints)) if ids is None else ids
        return cls(PoseRecord.centred(i, j) for i, j in zip(ids, joints))

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[PoseRecord]:
        return iter(self.records)

    def __contains__(self, id: int):
        return id in self._by_id

    def __repr__(self):
        return f"PoseDB({len(self)} records)"

    def get(self, id: int) -> PoseRecord:
        try:
            return self.records[self._by_id[id]]
        except KeyError:
            raise KeyError(f"record id {id} not in database") from None

    @cached_property
    def fingerprint(self) -> str:
        """SHA-256 over record ids and joint coordinates (tags excluded)"""
        h = hashlib.sha256()
        h.update(self.ids.astype("<i8").tobytes())
        h.update(np.ascontiguousarray(self.matrix, dtype="<f8").tobytes())
        return h.hexdigest()


def parse_db(lines: Iterable[str], path: str | PathLike[str] = "<string>") -> PoseDB:
    records: list[PoseRecord] = []
    seen: dict[int, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        data, _, comment = raw.partition("#")
        tokens = data.split()
        if not tokens:
            continue
        if len(tokens) != 1 + POSE_DIM:
            raise PoseDBFormatError(path, lineno, f"expected id + {POSE_DIM} coordinates, got {len(tokens)} fields")
        try:
            id = int(tokens[0])
        except ValueError:
            raise PoseDBFormatError(path, lineno, f"record id is not an integer: {tokens[0]!r}") from None
        if id in seen:
            raise PoseDBFormatError(path, lineno, f"duplicate id (first defined on line {seen[id]})", id)
        try:
            values = np.array([float(tok) for tok in tokens[1:]])
        except ValueError as e:
            raise PoseDBFormatError(path, lineno, f"bad coordinate ({e})", id) from None
        if not np.all(np.isfinite(values)):
            raise PoseDBFormatError(path, lineno, "non-finite coordinate", id)
        joints = values.reshape(N_JOINTS, 3)
        short = short_bones(joints)
        if short:
            p, j = short[0]
            raise PoseDBFormatError(path, lineno, f"zero-length bone between {JOINT_NAMES[p]} and {JOINT_NAMES[j]}", id)
        seen[id] = lineno
        records.append(PoseRecord.centred(id, joints, comment.split()))

    if len(records) < 2:
        raise PoseDBFormatError(path, None, f"need at least 2 records, got {len(records)}")
    return PoseDB(records)


def load_db(path: str | PathLike[str]) -> PoseDB:
    with open(path, encoding="utf-8") as f:
        db = parse_db(f, path)
    logger.info("loaded %d poses from %s (fingerprint %s)", len(db), path, db.fingerprint[:12])
    return db


def format_record(record: PoseRecord) -> str:
    line = f"{record.id} " + " ".join(repr(float(v)) for v in record.flat)
    if record.tags:
        line += "  # " + " ".join(record.tags)
    return line


def save_db(db: PoseDB, path: str | PathLike[str]):
    with open(path, "w", encoding="utf-8") as f:
        for record in db:
            f.write(format_record(record) + "\n")


class PoseIndex:
    """Exact k-d tree index over flattened 63-vectors. Immutable once built."""

    def __init__(self, db: PoseDB):
        self.db = db
        start = time.perf_counter()
        self.tree = cKDTree(db.matrix) if len(db) else None
        logger.debug("built index over %d poses in %.3fs", len(db), time.perf_counter() - start)

    @property
    def count(self) -> int:
        return len(self.db)

    def query(self, p: ArrayLike) -> tuple[PoseRecord, float]:
        """Nearest record by Euclidean distance; equidistant records resolve to the lowest id"""
        if self.tree is None:
            raise EmptyIndexError()
        q = _query_vector(p)
        k = min(2, self.count)
        d, i = self.tree.query(q, k=k)
        d, i = np.atleast_1d(d), np.atleast_1d(i)
        radius = d[0] * (1 + 1e-9) + 1e-9
        if k == 1 or d[1] > radius:
            candidates = i[:1].astype(np.int64)
        else:
            # every record within rounding of the best distance is a tie candidate
            candidates = np.asarray(self.tree.query_ball_point(q, r=radius), dtype=np.int64)
        return _closest(self.db, candidates, q)


def _query_vector(p: ArrayLike) -> NDArray[np.float64]:
    return as_joints(p, "query pose").reshape(POSE_DIM)


def _closest(db: PoseDB, candidates: NDArray[np.int64], q: NDArray[np.float64]) -> tuple[PoseRecord, float]:
    dists = np.linalg.norm(db.matrix[candidates] - q, axis=1)
    best = dists.min()
    tied = candidates[dists == best]
    pos = tied[np.argmin(db.ids[tied])]
    return db.records[pos], float(best)


def build_index(db: PoseDB) -> PoseIndex:
    return PoseIndex(db)


def nn_query(index: PoseIndex, p: JointSet) -> tuple[PoseRecord, float]:
    return index.query(p)


def brute_force_query(db: PoseDB, p: JointSet) -> tuple[PoseRecord, float]:
    """Reference linear scan with the same tie-break as PoseIndex.query"""
    if len(db) == 0:
        raise EmptyIndexError()
    return _closest(db, np.arange(len(db)), _query_vector(p))
