"""psh.dataset

Dataset generation and auditing.

Layout of a generated dataset:

    <out>/manifest.json
    <out>/seq_000000/frame_000.png, frame_000_mask.png, ..., annot.json
    <out>/seq_000001/...

Sequence i draws from its own stream sequence_rng(seed, i): first the background image (when a
background directory is given), then everything psh.poseflow draws. Each sequence is written into
`seq_%06d.partial` and renamed once complete; the manifest is written last by the coordinator.
JSON is written with sorted keys so that identical inputs give identical bytes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Iterator
import json
import logging
import shutil
import time

import numpy as np
from tqdm import tqdm

from . import _worker
from ._worker import WorkerContext
from .camera import ANGLE_TOLERANCE, CameraParams, project_weak
from .colors import TEMPLATES
from .errors import ConfigError, DatasetError
from .handmodel import BETA_LIMIT, THETA_DIM, load_hand_model
from .posedb import PoseDB, build_index, load_db
from .poseflow import FlowConfig, generate_flow, sequence_rng
from .profiler import Profiler
from .render import load_image, render_frame, save_mask_png, save_rgb_png

logger = logging.getLogger(__name__)

ANNOTATION_VERSION = 1
MANIFEST_NAME = "manifest.json"
ANNOTATION_NAME = "annot.json"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
PRESETS = {"train": 40_000, "test": 1_000}

# used when no background directory is given
FLAT_BACKGROUND = (118, 118, 118)


def sequence_dir(index: int) -> str:
    return f"seq_{index:06d}"


def frame_name(k: int) -> str:
    return f"frame_{k:03d}.png"


def mask_name(k: int) -> str:
    return f"frame_{k:03d}_mask.png"


def dump_json(obj: Any, path: Path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")


def load_json(path: Path) -> Any:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


@dataclass(frozen=True)
class GenJob:
    """Initialization options:
    * db_path - pose database file
    * output_dir - dataset root, created if missing; must not hold a manifest already
    * background_dir - directory of background images (png/jpg); flat grey when None
    * sequences - number of sequences
    * flow - per-sequence settings; flow.seed is the master seed
    * workers - size of the process pool (1 runs inline)
    * model_path - hand model asset; the shipped one when None
    """

    db_path: Path
    output_dir: Path
    background_dir: Path | None = None
    sequences: int = PRESETS["test"]
    flow: FlowConfig = field(default_factory=FlowConfig)
    workers: int = 1
    model_path: Path | None = None

    def __post_init__(self):
        if self.sequences < 1:
            raise ConfigError(f"sequence count must be at least 1, got {self.sequences}")
        if self.workers < 1:
            raise ConfigError(f"worker count must be at least 1, got {self.workers}")
        object.__setattr__(self, "db_path", Path(self.db_path))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.background_dir is not None:
            object.__setattr__(self, "background_dir", Path(self.background_dir))
        if self.model_path is not None:
            object.__setattr__(self, "model_path", Path(self.model_path))

    @classmethod
    def preset(cls, name: str, **kwargs) -> GenJob:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r} (choose from {', '.join(PRESETS)})")
        return cls(sequences=PRESETS[name], **kwargs)

    @property
    def seed(self) -> int:
        return self.flow.seed

    def snapshot(self, backgrounds: Iterable[Path]) -> dict[str, Any]:
        """Everything that determines the output, minus machine-specific paths and the worker count"""
        return {
            "sequences": self.sequences,
            "flow": self.flow.as_dict(),
            "db": self.db_path.name,
            "model": None if self.model_path is None else self.model_path.name,
            "backgrounds": [p.name for p in backgrounds],
        }


@dataclass(frozen=True)
class SequenceEntry:
    directory: str
    index: int
    color_template_id: int
    beta: list[float]
    background: str | None

    def as_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class DatasetManifest:
    version: int
    seed: int
    config: dict[str, Any]
    db_fingerprint: str
    entries: tuple[SequenceEntry, ...]

    def as_dict(self) -> dict[str, Any]:
        entries = []
        for entry in self.entries:
            d = entry.as_dict()
            # reproduce a sequence with numpy.random.SeedSequence(entropy, spawn_key=spawn_key)
            d["seed"] = {"entropy": self.seed, "spawn_key": [entry.index]}
            entries.append(d)
        return {
            "version": self.version,
            "seed": self.seed,
            "config": self.config,
            "db_fingerprint": self.db_fingerprint,
            "sequences": entries,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DatasetManifest:
        try:
            entries = tuple(
                SequenceEntry(e["directory"], int(e["index"]), int(e["color_template_id"]), list(e["beta"]), e["background"])
                for e in data["sequences"]
            )
            return cls(int(data["version"]), int(data["seed"]), dict(data["config"]), str(data["db_fingerprint"]), entries)
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"malformed manifest: {e!r}") from None

    def save(self, root: Path):
        dump_json(self.as_dict(), root / MANIFEST_NAME)

    @classmethod
    def load(cls, root: Path) -> DatasetManifest:
        path = root / MANIFEST_NAME
        if not path.is_file():
            raise DatasetError(f"{path} not found")
        try:
            return cls.from_dict(load_json(path))
        except json.JSONDecodeError as e:
            raise DatasetError(f"{path}: {e}") from None


@dataclass(frozen=True)
class SequenceResult:
    entry: SequenceEntry
    duration: float
    frames: int


def list_backgrounds(directory: Path | None) -> tuple[Path, ...]:
    if directory is None:
        return ()
    if not directory.is_dir():
        raise DatasetError(f"background directory {directory} not found")
    images = tuple(sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES))
    if not images:
        raise DatasetError(f"no background images (png/jpg) in {directory}")
    return images


def write_sequence(ctx: WorkerContext, index: int) -> SequenceResult:
    """Generates, renders and writes sequence `index`. Runs inside a worker."""
    start = time.perf_counter()
    cfg = ctx.cfg
    rng = sequence_rng(cfg.seed, index)

    if ctx.backgrounds:
        bg_path = ctx.backgrounds[int(rng.integers(len(ctx.backgrounds)))]
        background = load_image(bg_path)
        bg_name = bg_path.name
    else:
        background = np.empty((cfg.height, cfg.width, 3), dtype=np.uint8)
        background[:] = FLAT_BACKGROUND
        bg_name = None
    bg_size = (background.shape[1], background.shape[0])
    if bg_size[0] < cfg.width or bg_size[1] < cfg.height:
        raise DatasetError(f"background {bg_name} ({bg_size[0]}x{bg_size[1]}) is smaller than the frame")

    flow = generate_flow(ctx.db, ctx.index, cfg, rng, model=ctx.model, bg_size=bg_size)
    template = TEMPLATES[flow.color_template_id]

    name = sequence_dir(index)
    partial = ctx.output_dir / f"{name}.partial"
    if partial.exists():
        shutil.rmtree(partial)
    partial.mkdir()
    for frame in flow:
        rgb, raster = render_frame(ctx.model, frame, flow.beta, template, background, cfg.width, cfg.height)
        save_rgb_png(partial / frame_name(frame.index), rgb)
        save_mask_png(partial / mask_name(frame.index), raster.mask)

    dump_json({
        "version": ANNOTATION_VERSION,
        "sequence": index,
        "color_template_id": flow.color_template_id,
        "beta": flow.beta.beta.tolist(),
        "background": bg_name,
        "background_size": list(flow.background_size),
        "config": cfg.as_dict(),
        "db_fingerprint": flow.db_fingerprint,
        "frames": [frame.as_dict() for frame in flow],
    }, partial / ANNOTATION_NAME)

    final = ctx.output_dir / name
    if final.exists():
        shutil.rmtree(final)
    partial.rename(final)

    entry = SequenceEntry(name, index, flow.color_template_id, flow.beta.beta.tolist(), bg_name)
    return SequenceResult(entry, time.perf_counter() - start, len(flow))


class DatasetGenerator:
    """Runs a GenJob: loads inputs once, fans sequences out to a process pool, writes the manifest"""

    def __init__(self, job: GenJob, progress: bool = True, profiler: Profiler | None = None):
        self.job = job
        self.progress = progress
        self.profiler = Profiler(sample_sequences=max(10, job.workers)) if profiler is None else profiler

        if not job.db_path.is_file():
            raise DatasetError(f"pose database {job.db_path} not found")
        self.db: PoseDB = load_db(job.db_path)
        self.model = load_hand_model(job.model_path)
        self.backgrounds = list_backgrounds(job.background_dir)
        start = time.perf_counter()
        self.index = build_index(self.db)
        logger.info("index over %d poses built in %.3fs", len(self.db), time.perf_counter() - start)

    def context(self) -> WorkerContext:
        return WorkerContext(self.db, self.index, self.model, self.job.flow, self.backgrounds, self.job.output_dir)

    def _results(self, ctx: WorkerContext) -> Iterator[SequenceResult]:
        indices = range(self.job.sequences)
        if self.job.workers == 1:
            _worker.init(ctx, write_sequence)
            try:
                for i in indices:
                    yield _worker.run(i)
            finally:
                _worker.reset()
            return
        chunksize = max(1, self.job.sequences // (self.job.workers * 8))
        with ProcessPoolExecutor(self.job.workers, initializer=_worker.init, initargs=(ctx, write_sequence)) as pool:
            yield from pool.map(_worker.run, indices, chunksize=chunksize)

    def _cleanup(self, existing: set[str]):
        root = self.job.output_dir
        for path in root.glob("seq_*"):
            if path.name not in existing and path.is_dir():
                shutil.rmtree(path, ignore_errors=True)
        logger.warning("generation failed; removed partial output under %s", root)

    def run(self) -> DatasetManifest:
        job = self.job
        root = job.output_dir
        try:
            root.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise DatasetError(f"cannot create output directory {root}: {e}") from None
        if (root / MANIFEST_NAME).exists():
            raise DatasetError(f"{root} already holds a dataset ({MANIFEST_NAME} exists)")
        existing = {p.name for p in root.glob("seq_*")}

        logger.info("generating %d sequences with %d worker(s) into %s", job.sequences, job.workers, root)
        entries: list[SequenceEntry] = []
        self.profiler.start()
        try:
            results = self._results(self.context())
            for result in tqdm(results, total=job.sequences, unit="seq", disable=not self.progress):
                entries.append(result.entry)
                self.profiler.tick(result.duration, result.frames)
        except BaseException:
            self._cleanup(existing)
            raise

        manifest = DatasetManifest(
            version=ANNOTATION_VERSION,
            seed=job.seed,
            config=job.snapshot(self.backgrounds),
            db_fingerprint=self.db.fingerprint,
            entries=tuple(entries),
        )
        manifest.save(root)
        self.profiler.report()
        return manifest


def generate_dataset(job: GenJob, progress: bool = True) -> DatasetManifest:
    return DatasetGenerator(job, progress).run()


# Auditing

@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str = ""

    def __str__(self):
        return f"[{'ok' if self.ok else 'FAIL'}] {self.name}" + (f": {self.detail}" if self.detail else "")


@dataclass
class InspectReport:
    root: Path
    checks: list[Check] = field(default_factory=list)

    def add(self, name: str, ok: bool, detail: str = "") -> bool:
        self.checks.append(Check(name, bool(ok), detail))
        return bool(ok)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]

    def summary(self) -> str:
        return f"{len(self.checks) - len(self.failures)}/{len(self.checks)} checks passed"


def _inspect_frames(report: InspectReport, seq_root: Path, name: str, annot: dict[str, Any], cfg: FlowConfig, db: PoseDB | None):
    frames = annot["frames"]
    report.add(f"{name}: frame count", len(frames) == cfg.n_frames, f"{len(frames)} frames, expected {cfg.n_frames}")

    beta = np.asarray(annot["beta"], dtype=np.float64)
    report.add(f"{name}: beta range", beta.shape == (10,) and np.all(np.abs(beta) <= BETA_LIMIT), str(beta.tolist()))

    bg_w, bg_h = annot["background_size"]
    missing, shared, projection, offsets, thetas, members = [], True, 0.0, True, True, []
    for k, frame in enumerate(frames):
        for file in (frame_name(k), mask_name(k)):
            if not (seq_root / file).is_file():
                missing.append(file)
        shared &= frame["beta"] == annot["beta"] and frame["index"] == k
        cam = CameraParams.from_dict(frame["cam"])
        joints3d = np.asarray(frame["joints3d"], dtype=np.float64)
        joints2d = np.asarray(frame["joints2d"], dtype=np.float64)
        for points3d, points2d in ((joints3d, joints2d), (np.asarray(frame["model_joints3d"]), np.asarray(frame["model_joints2d"]))):
            if points3d.shape != (21, 3) or points2d.shape != (21, 2):
                projection = np.inf
            else:
                projection = max(projection, float(np.abs(project_weak(points3d, cam) - points2d).max()))
        ox, oy = frame["bg_offset"]
        offsets &= 0 <= ox <= bg_w - cfg.width and 0 <= oy <= bg_h - cfg.height
        theta = np.asarray(frame["theta"], dtype=np.float64)
        thetas &= theta.shape == (THETA_DIM,) and bool(np.all(np.linalg.norm(theta.reshape(-1, 3), axis=1) <= np.pi + ANGLE_TOLERANCE))
        if db is not None:
            rid = frame["pose_record_id"]
            if rid not in db or not np.array_equal(db.get(rid).joints, joints3d):
                members.append(rid)

    report.add(f"{name}: files", not missing, ", ".join(f"{name}/{m} missing" for m in missing))
    report.add(f"{name}: constant beta", shared)
    report.add(f"{name}: joints2d", projection <= 1e-6, f"max reprojection error {projection:.3g}px")
    report.add(f"{name}: background offsets", offsets)
    report.add(f"{name}: theta", thetas)
    if db is not None:
        report.add(f"{name}: db membership", not members, f"records not in db: {members}")

    images = [seq_root / frame_name(k) for k in range(len(frames))]
    sizes_ok = True
    for image in images:
        if image.is_file():
            rgb = load_image(image)
            sizes_ok &= rgb.shape == (cfg.height, cfg.width, 3)
    report.add(f"{name}: image size", sizes_ok, f"expected {cfg.width}x{cfg.height}")


def inspect_dataset(root: Path | str, db: PoseDB | None = None) -> InspectReport:
    """Audits a generated dataset; failures are reported as named checks, not raised"""
    root = Path(root)
    report = InspectReport(root)
    try:
        manifest = DatasetManifest.load(root)
    except DatasetError as e:
        report.add("manifest", False, str(e))
        return report
    report.add("manifest", manifest.version == ANNOTATION_VERSION, f"version {manifest.version}")
    try:
        cfg = FlowConfig.from_dict(manifest.config["flow"])
    except (KeyError, TypeError, ConfigError) as e:
        report.add("config", False, str(e))
        return report
    report.add("sequence count", len(manifest.entries) == manifest.config.get("sequences"), f"{len(manifest.entries)} entries")
    report.add("partial directories", not any(root.glob("seq_*.partial")))
    if db is not None:
        report.add("db fingerprint", db.fingerprint == manifest.db_fingerprint, manifest.db_fingerprint[:12])

    for entry in manifest.entries:
        name = entry.directory
        seq_root = root / name
        try:
            annot = load_json(seq_root / ANNOTATION_NAME)
        except (OSError, json.JSONDecodeError) as e:
            report.add(f"{name}: annotation", False, str(e))
            continue
        try:
            consistent = (
                annot["version"] == ANNOTATION_VERSION
                and annot["sequence"] == entry.index
                and annot["color_template_id"] == entry.color_template_id
                and 0 <= entry.color_template_id < len(TEMPLATES)
                and annot["beta"] == entry.beta
                and annot["db_fingerprint"] == manifest.db_fingerprint
                and FlowConfig.from_dict(annot["config"]) == cfg
            )
            report.add(f"{name}: annotation", consistent, "" if consistent else "disagrees with the manifest")
            _inspect_frames(report, seq_root, name, annot, cfg, db)
        except (KeyError, TypeError, ValueError) as e:
            report.add(f"{name}: annotation", False, f"malformed: {e!r}")
    return report
