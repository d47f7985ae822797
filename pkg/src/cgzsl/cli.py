"""Command-line front end: ``cgzsl synth | split | train | eval | report``.

Exit codes: 0 success, 1 I/O failure, 2 usage or validation error,
3 numerical failure (the offending loss is named on stderr).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ABLATION_FLAGS, RunConfig
from .data import load_dataset, save_dataset, synth_dataset
from .errors import CGZSLError, ContractError, NumericalError
from .report import read_report, write_report
from .schedule import PRESETS, SETTINGS, TaskSchedule, build_schedule, preset_schedule
from .train import evaluate_checkpoints, run_experiment

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
SEED_ENV = "CZSL_SEED"

log = logging.getLogger("cgzsl")


class UsageError(CGZSLError):
    pass


def _min4(text: str) -> int:
    value = int(text)
    if value < 4:
        raise argparse.ArgumentTypeError(f"must be at least 4 (got {value})")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1 (got {value})")
    return value


def _non_negative_float(text: str) -> float:
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0 (got {text})")
    return value


def cmd_synth(args) -> int:
    ds = synth_dataset(args.classes, args.dim_x, args.dim_a, args.per_class, args.noise, args.seed)
    out = save_dataset(ds, args.out)
    print(f"wrote {ds.features.shape[0]} rows, {ds.num_classes} classes to {out}")
    return EXIT_OK


def cmd_split(args) -> int:
    if args.preset:
        schedule = preset_schedule(args.preset, args.setting)
    else:
        if args.tasks is None:
            raise UsageError("split needs --tasks (or --preset)")
        if args.data:
            inventory: int | list[int] = load_dataset(args.data).num_classes
        elif args.classes:
            inventory = args.classes
        else:
            raise UsageError("split needs --data or --classes to know the class inventory")
        schedule = build_schedule(inventory, args.setting, args.tasks, args.seen_per_task, args.unseen_per_task)
    schedule.save(args.out)
    for t in range(1, schedule.num_tasks + 1):
        seen, unseen = schedule.roles(t)
        print(f"task {t}: {len(seen)} seen / {len(unseen)} unseen")
    return EXIT_OK


def resolve_config(args) -> RunConfig:
    """Defaults, then the config file, then CZSL_SEED, then explicit flags."""
    obj: dict = {}
    if getattr(args, "config", None):
        obj = RunConfig.load(args.config).to_json()
    env_seed = os.environ.get(SEED_ENV)
    if env_seed not in (None, ""):
        try:
            obj["seed"] = int(env_seed)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer (got {env_seed!r})") from None
    if getattr(args, "seed", None) is not None:
        obj["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        obj["epochs"] = args.epochs
    try:
        cfg = RunConfig.from_json(obj)
    except TypeError as exc:
        raise ContractError(f"bad config value ({exc})") from None
    return cfg.disable(*(getattr(args, "ablate", None) or []))


def cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    schedule = TaskSchedule.load(args.schedule)
    cfg = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_experiment(dataset, schedule, cfg, checkpoint_dir=out)
    write_report(report, out)
    print(report.summary())
    return EXIT_OK


def _run_config(run_dir: Path, args) -> RunConfig:
    """The config a finished run used (metadata stripped), with CLI overrides."""
    if args.config or not (run_dir / "report.json").exists():
        return resolve_config(args)
    echoed = dict(read_report(run_dir).config)
    echoed.pop("metadata", None)
    if args.seed is not None:
        echoed["seed"] = args.seed
    return RunConfig.from_json(echoed)


def cmd_eval(args) -> int:
    dataset = load_dataset(args.data)
    schedule = TaskSchedule.load(args.schedule)
    run_dir = Path(args.run)
    cfg = _run_config(run_dir, args)
    report = evaluate_checkpoints(dataset, schedule, cfg, run_dir, args.task)
    if args.out:
        write_report(report, args.out)
    for task in report.tasks:
        print(f"task {task.t}: seenAcc={task.seen_acc:.9f} unseenAcc={_fmt(task.unseen_acc)} H={_fmt(task.harmonic)}")
    print(report.summary())
    return EXIT_OK


def _fmt(x) -> str:
    return "-" if x is None else f"{x:.9f}"


def cmd_report(args) -> int:
    report = read_report(args.run)
    if args.json:
        print(json.dumps(report.to_json(), indent=2))
    else:
        print(f"setting={report.setting} T={report.T}")
        print("t,seenAcc,unseenAcc,H,AUSUC")
        for task in report.tasks:
            print(f"{task.t},{_fmt(task.seen_acc)},{_fmt(task.unseen_acc)},{_fmt(task.harmonic)},{_fmt(task.ausuc)}")
        print(report.summary())
        print(f"forgetting={report.forgetting:.9f} mAUSUC={_fmt(report.mAUSUC)}")
    if args.out:
        write_report(report, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cgzsl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-task progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic attribute-correlated dataset")
    p.add_argument("--classes", type=_min4, default=20)
    p.add_argument("--dim-x", type=_positive, default=32)
    p.add_argument("--dim-a", type=_positive, default=16)
    p.add_argument("--per-class", type=_min4, default=100)
    p.add_argument("--noise", type=_non_negative_float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="write a task schedule")
    p.add_argument("--setting", choices=SETTINGS, required=True)
    p.add_argument("--tasks", type=_positive)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--data", help="dataset directory supplying the class inventory")
    p.add_argument("--classes", type=_positive, help="class count when no dataset is given")
    p.add_argument("--seen-per-task", type=int)
    p.add_argument("--unseen-per-task", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="run the continual experiment and write a report")
    p.add_argument("--data", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--ablate", action="append", choices=ABLATION_FLAGS, default=[],
                   help="switch a component off (repeatable)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="recompute metrics from saved per-task checkpoints")
    p.add_argument("--data", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--run", required=True, help="directory holding model_t<N>.czsm files")
    p.add_argument("--task", type=_positive, help="evaluate through task N only")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="also write report files here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="print or rewrite an existing report")
    p.add_argument("--run", required=True, help="report directory or report.json path")
    p.add_argument("--json", action="store_true", help="print the full JSON")
    p.add_argument("--out", help="rewrite report files into this directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: non-finite value in {exc.name}", file=sys.stderr)
        return EXIT_NUMERIC
    except CGZSLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
