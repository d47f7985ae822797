"""Experiment report objects and their on-disk form.

``report.json`` holds everything; ``metrics.csv`` has one row per task and
``traces.csv`` one row per (task, tracked class, rank). CSV numbers use fixed
9-decimal formatting so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

REPORT_VERSION = 1


@dataclass
class TaskEval:
    t: int
    seen_classes: list[int]
    unseen_classes: list[int]
    seen_acc: float
    unseen_acc: float | None
    harmonic: float | None
    ausuc: float | None
    seen_by_task: list[float | None]
    unseen_by_task: list[float | None]
    harmonic_by_task: list[float | None]
    traces: dict[int, list[tuple[int, float]]] = field(default_factory=dict)
    loss_trace: list[dict[str, float]] = field(default_factory=list)
    replay: dict = field(default_factory=dict)
    # full cosine score matrix of the evaluated test rows; kept in memory only
    scores: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "seen_classes": list(self.seen_classes),
            "unseen_classes": list(self.unseen_classes),
            "seenAcc": self.seen_acc,
            "unseenAcc": self.unseen_acc,
            "H": self.harmonic,
            "AUSUC": self.ausuc,
            "seen_by_task": list(self.seen_by_task),
            "unseen_by_task": list(self.unseen_by_task),
            "harmonic_by_task": list(self.harmonic_by_task),
            "traces": {str(c): [[k, s] for k, s in pairs] for c, pairs in self.traces.items()},
            "replay": self.replay,
            "loss_trace": self.loss_trace,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TaskEval":
        return cls(
            t=obj["t"],
            seen_classes=obj["seen_classes"],
            unseen_classes=obj["unseen_classes"],
            seen_acc=obj["seenAcc"],
            unseen_acc=obj["unseenAcc"],
            harmonic=obj["H"],
            ausuc=obj["AUSUC"],
            seen_by_task=obj["seen_by_task"],
            unseen_by_task=obj["unseen_by_task"],
            harmonic_by_task=obj["harmonic_by_task"],
            traces={int(c): [(int(k), float(s)) for k, s in pairs] for c, pairs in obj["traces"].items()},
            loss_trace=obj.get("loss_trace", []),
            replay=obj.get("replay", {}),
        )


@dataclass
class ExperimentReport:
    setting: str
    T: int
    mSA: float
    mUA: float | None
    mH: float | None
    forgetting: float
    mAUSUC: float | None
    tasks: list[TaskEval]
    config: dict
    version: int = REPORT_VERSION

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "setting": self.setting,
            "T": self.T,
            "mSA": self.mSA,
            "mUA": self.mUA,
            "mH": self.mH,
            "forgetting": self.forgetting,
            "mAUSUC": self.mAUSUC,
            "tasks": [t.to_json() for t in self.tasks],
            "config": self.config,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentReport":
        return cls(
            setting=obj["setting"],
            T=obj["T"],
            mSA=obj["mSA"],
            mUA=obj["mUA"],
            mH=obj["mH"],
            forgetting=obj["forgetting"],
            mAUSUC=obj["mAUSUC"],
            tasks=[TaskEval.from_json(t) for t in obj["tasks"]],
            config=obj["config"],
            version=obj["version"],
        )

    def summary(self) -> str:
        return f"mSA={_fmt(self.mSA)} mUA={_fmt(self.mUA)} mH={_fmt(self.mH)}"


def _fmt(x) -> str:
    return "" if x is None else f"{x:.9f}"


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def write_report(report: ExperimentReport, directory: str | Path) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "report.json", out / "metrics.csv", out / "traces.csv"]
    files[0].write_text(json.dumps(report.to_json(), indent=2) + "\n")
    metric_rows = [["t", "seenAcc", "unseenAcc", "H", "AUSUC"]]
    for task in report.tasks:
        metric_rows.append([task.t, _fmt(task.seen_acc), _fmt(task.unseen_acc), _fmt(task.harmonic), _fmt(task.ausuc)])
    files[1].write_text(_csv(metric_rows))
    trace_rows = [["t", "tracked", "rank", "class", "cosine"]]
    for task in report.tasks:
        for tracked, pairs in task.traces.items():
            for rank, (cls, sim) in enumerate(pairs, start=1):
                trace_rows.append([task.t, tracked, rank, cls, _fmt(sim)])
    files[2].write_text(_csv(trace_rows))
    return files


def read_report(directory: str | Path) -> ExperimentReport:
    path = Path(directory)
    if path.is_dir():
        path = path / "report.json"
    return ExperimentReport.from_json(json.loads(path.read_text()))
