"""psh.cli

Command-line entry point: `pyseqhand <command> ...`

Commands:
* gen - generate a pose-flow dataset
* eval - 3D-PCK / AUC / mean error of a prediction file against a truth file
* ik - fit theta to every row of a joints file
* inspect - audit a generated dataset
* convert - validate a pose database file and rewrite it root-centred

On failure exactly one line `error[<category>]: <message>` is printed to stderr and the
exit code is looked up in psh.errors.EXIT_CODES.
"""

from __future__ import annotations

from argparse import ArgumentParser, Namespace
from math import pi
from pathlib import Path
from typing import Any, Callable, Sequence
import json
import logging
import sys

import numpy as np

from .camera import rodrigues
from .dataset import PRESETS, GenJob, generate_dataset, inspect_dataset
from .errors import EXIT_CODES, ConfigError, DatasetError, SeqHandError
from .handmodel import BETA_DIM, HandShape, load_hand_model
from .metrics import evaluate, load_keypoint_file, match_frames, write_pck_csv
from .posedb import load_db, save_db
from .poseflow import CameraBounds, FlowConfig

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def parse_scale_range(value: str | Sequence[float]) -> tuple[float, float]:
    """`low,high` on the command line, a 2-item list in a config file"""
    parts = value.split(",") if isinstance(value, str) else list(value)
    if len(parts) != 2:
        raise ValueError(f"expected low,high, got {value!r}")
    return float(parts[0]), float(parts[1])


# gen option -> (type, built-in default); None defaults mean "not set"
GEN_OPTIONS: dict[str, tuple[Callable[[Any], Any], Any]] = {
    "db": (str, None),
    "out": (str, None),
    "backgrounds": (str, None),
    "model": (str, None),
    "sequences": (int, 1000),
    "n_frames": (int, 10),
    "alpha": (float, 3.0),
    "noise_sigma": (float, 0.0),
    "width": (int, 224),
    "height": (int, 224),
    "seed": (int, 0),
    "workers": (int, 1),
    "scale_range": (parse_scale_range, (0.5, 1.5)),
    "translation_region": (float, 1 / 3),
    "max_angle": (float, pi),
}


def configure_logging(verbose: int, quiet: bool):
    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def parse_thresholds(text: str | None) -> np.ndarray | None:
    """`lo:hi:step` (inclusive of hi) or a comma separated list, in mm"""
    if text is None:
        return None
    try:
        if ":" in text:
            lo, hi, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError("step must be positive")
            return lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-9)) + 1)
        return np.array([float(v) for v in text.split(",")])
    except ValueError as e:
        raise ConfigError(f"bad thresholds {text!r}: {e}") from None


def parse_beta(text: str | None) -> HandShape:
    if text is None:
        return HandShape()
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"beta must be {BETA_DIM} comma separated numbers, got {text!r}") from None
    if len(values) != BETA_DIM:
        raise ConfigError(f"beta must have {BETA_DIM} values, got {len(values)}")
    return HandShape(np.array(values))


def load_config_file(path: str) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    options = {}
    for key, value in data.items():
        name = key.replace("-", "_")
        if name not in GEN_OPTIONS:
            raise ConfigError(f"{path}: unknown option {key!r}")
        typ = GEN_OPTIONS[name][0]
        try:
            options[name] = None if value is None else typ(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: option {key!r} has a bad value {value!r}") from None
    return options


def resolve_gen_options(args: Namespace) -> dict[str, Any]:
    """Built-in defaults < config file < preset < explicit flags"""
    options = {name: default for name, (_, default) in GEN_OPTIONS.items()}
    if args.config is not None:
        options.update(load_config_file(args.config))
    if args.preset is not None:
        options["sequences"] = PRESETS[args.preset]
    for name in GEN_OPTIONS:
        value = getattr(args, name)
        if value is not None:
            options[name] = value
    for required in ("db", "out"):
        if options[required] is None:
            raise ConfigError(f"--{required} is required (flag or config file)")
    return options


def cmd_gen(args: Namespace) -> int:
    options = resolve_gen_options(args)
    flow = FlowConfig(
        n_frames=options["n_frames"],
        alpha=options["alpha"],
        noise_sigma=options["noise_sigma"],
        width=options["width"],
        height=options["height"],
        seed=options["seed"],
        camera=CameraBounds(
            scale_range=options["scale_range"],
            translation_region=options["translation_region"],
            max_angle=options["max_angle"],
        ),
    )
    job = GenJob(
        db_path=Path(options["db"]),
        output_dir=Path(options["out"]),
        background_dir=None if options["backgrounds"] is None else Path(options["backgrounds"]),
        sequences=options["sequences"],
        flow=flow,
        workers=options["workers"],
        model_path=None if options["model"] is None else Path(options["model"]),
    )
    manifest = generate_dataset(job, progress=not args.no_progress and not args.quiet)
    print(f"wrote {len(manifest.entries)} sequences to {job.output_dir}")
    return 0


def cmd_eval(args: Namespace) -> int:
    pred_ids, preds = load_keypoint_file(args.pred, args.dims)
    truth_ids, truths = load_keypoint_file(args.truth, args.dims)
    order = match_frames(pred_ids, truth_ids)
    summary = evaluate(preds[order], truths, parse_thresholds(args.thresholds))
    if args.csv is not None:
        write_pck_csv(summary.curve, args.csv)
    unit = "mm" if args.dims == 3 else "px"
    print(f"frames={summary.frames} auc={summary.auc:.6f} mean_error={summary.mean_error:.6f}{unit}")
    return 0


def cmd_ik(args: Namespace) -> int:
    model = load_hand_model(args.model)
    beta = parse_beta(args.beta)
    ids, joints = load_keypoint_file(args.joints, 3)
    rows = []
    for id, target in zip(ids.tolist(), joints):
        root = np.zeros(3)
        if args.fit_root:
            root = model.fit_root_orientation(target, beta)
            target = (target - target[0]) @ rodrigues(root)
        theta, residual = model.fit_pose_params(target, beta)
        rows.append((id, residual, root, theta.theta_full))
        line = f"{id} residual={residual:.3e}mm"
        if args.fit_root:
            line += " root=" + ",".join(f"{v:.6f}" for v in root)
        print(line)
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as f:
            for id, residual, root, theta in rows:
                values = [residual] + (root.tolist() if args.fit_root else []) + theta.tolist()
                f.write(f"{id} " + " ".join(repr(float(v)) for v in values) + "\n")
    if rows:
        logger.info("fit %d poses, worst residual %.3e mm", len(rows), max(r[1] for r in rows))
    return 0


def cmd_inspect(args: Namespace) -> int:
    db = load_db(args.db) if args.db is not None else None
    report = inspect_dataset(Path(args.dataset), db)
    for check in report.checks:
        if not check.ok or args.verbose:
            print(check)
    print(report.summary())
    if not report.ok:
        first = report.failures[0]
        print(f"error[inspect]: {first.name}: {first.detail}", file=sys.stderr)
        return 1
    return 0


def cmd_convert(args: Namespace) -> int:
    db = load_db(args.input)
    try:
        save_db(db, args.output)
    except OSError as e:
        raise DatasetError(f"cannot write {args.output}: {e.strerror}") from None
    print(f"converted {len(db)} records (fingerprint {db.fingerprint})")
    return 0


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="pyseqhand", description="Sequential synthetic hand-pose datasets")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    parser.add_argument("--quiet", action="store_true", help="only log errors")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a pose-flow dataset")
    gen.add_argument("--config", help="JSON file of gen options (keys as flag names)")
    gen.add_argument("--preset", choices=("train", "test"), help="train: 40000 sequences, test: 1000")
    gen.add_argument("--db", help="pose database file")
    gen.add_argument("--out", help="output directory")
    gen.add_argument("--backgrounds", help="directory of background images")
    gen.add_argument("--model", help="hand model asset (default: shipped model)")
    gen.add_argument("--sequences", type=int)
    gen.add_argument("--n-frames", type=int)
    gen.add_argument("--alpha", type=float)
    gen.add_argument("--noise-sigma", type=float)
    gen.add_argument("--width", type=int)
    gen.add_argument("--height", type=int)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--workers", type=int)
    gen.add_argument("--scale-range", type=parse_scale_range, help="camera scale range as low,high multiples of the fit-to-frame scale")
    gen.add_argument("--translation-region", type=float, help="fraction of the frame the camera translation is sampled in")
    gen.add_argument("--max-angle", type=float, help="largest camera rotation angle (radians)")
    gen.add_argument("--no-progress", action="store_true", help="hide the progress bar")
    gen.set_defaults(func=cmd_gen)

    ev = sub.add_parser("eval", help="PCK/AUC/mean error of predictions")
    ev.add_argument("pred", help="prediction keypoint file")
    ev.add_argument("truth", help="ground-truth keypoint file")
    ev.add_argument("--thresholds", help="lo:hi:step or a comma list in mm (default 20:50:1)")
    ev.add_argument("--csv", help="write the PCK curve here")
    ev.add_argument("--dims", type=int, choices=(2, 3), default=3)
    ev.set_defaults(func=cmd_eval)

    ik = sub.add_parser("ik", help="fit pose parameters to joints")
    ik.add_argument("joints", help="keypoint file of 3D joints")
    ik.add_argument("--beta", help=f"{BETA_DIM} comma separated shape values (default 0)")
    ik.add_argument("--fit-root", action="store_true", help="align the palm first and report its rotation")
    ik.add_argument("--model", help="hand model asset (default: shipped model)")
    ik.add_argument("--out", help="write `id residual [root] theta` rows here")
    ik.set_defaults(func=cmd_ik)

    ins = sub.add_parser("inspect", help="audit a generated dataset")
    ins.add_argument("dataset", help="dataset root")
    ins.add_argument("--db", help="also check pose membership against this database")
    ins.set_defaults(func=cmd_inspect)

    conv = sub.add_parser("convert", help="validate and root-centre a pose database")
    conv.add_argument("input")
    conv.add_argument("output")
    conv.set_defaults(func=cmd_convert)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except SeqHandError as e:
        message = " ".join(str(e).split())
        print(f"error[{e.category}]: {message}", file=sys.stderr)
        return EXIT_CODES.get(e.category, 1)
    except OSError as e:
        print(f"error[io]: {' '.join(str(e).split())}", file=sys.stderr)
        return EXIT_CODES["io"]
