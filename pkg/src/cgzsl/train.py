"""Generative replay, the per-task training loop, evaluation and experiment driver.

Each training step first updates the discriminator on the adversarial, real
classification and seen-normalized losses, then the generator on the
adversarial, pseudo classification and incremental alignment losses. The
nuclear term only depends on discriminator parameters, so its gradient is
applied in the discriminator update while its value is reported as part of
the generator objective.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import losses as L
from . import metrics
from . import nn
from .config import RunConfig
from .data import Dataset
from .errors import ContractError, NumericalError, ShapeError
from .model import (
    CGZSLModel,
    classify,
    generate,
    load_checkpoint,
    project_attributes,
    sample_noise,
    save_checkpoint,
)
from .report import ExperimentReport, TaskEval
from .schedule import TaskSchedule

log = logging.getLogger(__name__)

AuditHook = Callable[[int, np.ndarray, np.ndarray], None]


@dataclass
class ReplaySet:
    features: np.ndarray
    labels: np.ndarray
    counts: dict[int, int] = field(default_factory=dict)
    shortfall: dict[int, int] = field(default_factory=dict)

    @classmethod
    def empty(cls, d_x: int) -> "ReplaySet":
        return cls(np.zeros((0, d_x)), np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return self.labels.size


@dataclass
class TaskData:
    """Real training rows for one task plus the class roles in force."""

    t: int
    features: np.ndarray
    labels: np.ndarray
    rows: np.ndarray  # dataset row index of every feature row
    seen: list[int]
    unseen: list[int]


@dataclass
class ModelState:
    model: CGZSLModel
    opt_g: nn.Adam
    opt_d: nn.Adam

    @classmethod
    def create(cls, model: CGZSLModel, cfg: RunConfig) -> "ModelState":
        def adam(params):
            return nn.Adam(params, cfg.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.adam_eps)

        return cls(model, adam(model.generator.parameters()), adam(model.discriminator.parameters()))


def generate_replay(
    model: CGZSLModel,
    prev_seen: list[int],
    n_per_class: int,
    rng: np.random.Generator,
    budget: int = 10,
) -> ReplaySet:
    """Generated features of earlier seen classes that the model classifies correctly.

    Candidates are drawn in chunks until ``n_per_class`` survive the filter or
    ``budget * n_per_class`` candidates have been tried; any deficit is
    recorded in ``shortfall``. Kept rows are L2-normalised like real features.
    """
    d_x = model.config.d_x
    if not prev_seen or n_per_class <= 0:
        return ReplaySet.empty(d_x)
    ids = np.asarray(model.class_ids)
    projections = project_attributes(model, model.attributes).value
    feats, labels, counts, shortfall = [], [], {}, {}
    for c in prev_seen:
        attr = model.attributes_of([c])
        kept: list[np.ndarray] = []
        n_kept, drawn, limit = 0, 0, budget * n_per_class
        while n_kept < n_per_class and drawn < limit:
            k = min(n_per_class, limit - drawn)
            x = generate(model, sample_noise(k, model.config.d_z, rng), np.repeat(attr, k, axis=0)).value
            pred, _ = classify(x, projections)
            good = x[ids[pred] == c]
            kept.append(good)
            n_kept += good.shape[0]
            drawn += k
        rows = np.vstack(kept)[:n_per_class] if kept else np.zeros((0, d_x))
        counts[c] = rows.shape[0]
        if rows.shape[0] < n_per_class:
            shortfall[c] = n_per_class - rows.shape[0]
        feats.append(rows)
        labels.append(np.full(rows.shape[0], c, dtype=np.int64))
    if shortfall:
        log.info("replay shortfall for %d classes: %s", len(shortfall), shortfall)
    features = nn.l2_normalize_rows(np.vstack(feats)).value
    return ReplaySet(features, np.concatenate(labels), counts, shortfall)


def _finite(name: str, value) -> None:
    v = value.value if isinstance(value, nn.Tensor) else value
    if not np.all(np.isfinite(v)):
        raise NumericalError(name)


def train_task(
    state: ModelState,
    task: TaskData,
    replay: ReplaySet,
    cfg: RunConfig,
    rng: np.random.Generator,
    audit: AuditHook | None = None,
) -> list[dict[str, float]]:
    """Run ``cfg.epochs`` epochs on the task's real rows plus replay.

    Returns one dict of epoch-mean loss values per epoch.
    """
    model = state.model
    x_all = np.vstack([task.features, replay.features])
    y_all = np.concatenate([task.labels, replay.labels]).astype(np.int64)
    source = np.concatenate([task.rows, np.full(len(replay), -1)]).astype(np.int64)
    if y_all.size == 0:
        raise ContractError(f"task {task.t} has no training rows")
    if cfg.epochs == 0:
        return []

    ids = list(model.class_ids)
    pos = {c: i for i, c in enumerate(ids)}
    attrs = model.attributes
    seen_index = {c: k for k, c in enumerate(task.seen)}
    seen_cols = np.array([pos[c] for c in task.seen])
    seen_arr, unseen_arr = np.array(task.seen), np.array(task.unseen)
    temperature = model.config.temperature
    w = cfg.weights
    gen_n = cfg.gen_per_step or cfg.batch_size
    use = cfg.enabled

    with_data = [c for c in ids if np.any(y_all == c)]
    real_means = {c: m for c, m in zip(with_data, L.class_means(x_all, y_all, with_data).value)}
    nuc_cols = np.array([pos[c] for c in with_data])
    nuc_targets = np.array([real_means[c] for c in with_data])
    n_c = min(cfg.n_neighbors, len(ids) - 1)
    do_sal = use("sal") and n_c >= 1
    if do_sal:
        neighbors = L.semantic_neighbors(attrs, n_c)
        align = L.AlignmentConfig(cfg.align_eps, n_c)
        mean_labels = np.repeat(ids, cfg.mean_samples)
        mean_attrs = attrs[np.repeat(np.arange(len(ids)), cfg.mean_samples)]
    do_snl = use("snl") and unseen_arr.size > 0
    d_params = model.discriminator.parameters()
    g_params = model.generator.parameters()
    d_z = model.config.d_z

    history = []
    for _ in range(cfg.epochs):
        sums: dict[str, float] = {}
        steps = 0
        perm = rng.permutation(y_all.size)
        for start in range(0, perm.size, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb, yb = x_all[idx], y_all[idx]
            if audit is not None:
                audit(task.t, source[idx], yb)
            yb_cols = np.array([pos[c] for c in yb])

            ys = rng.choice(seen_arr, gen_n)
            ys_cols = np.array([pos[c] for c in ys])
            fake_s = generate(model, sample_noise(gen_n, d_z, rng), attrs[ys_cols])
            if do_snl:
                yu = rng.choice(unseen_arr, gen_n)
                yu_cols = np.array([pos[c] for c in yu])
                fake_u = generate(model, sample_noise(gen_n, d_z, rng), attrs[yu_cols])
            if do_sal:
                fake_m = generate(model, sample_noise(mean_labels.size, d_z, rng), mean_attrs)

            # discriminator
            proj = project_attributes(model, attrs)
            d_gan, _ = L.gan_loss(xb, fake_s.detach(), nn.take_rows(proj, yb_cols), nn.take_rows(proj, ys_cols))
            rcl = (
                L.classification_loss(xb, [seen_index[c] for c in yb], nn.take_rows(proj, seen_cols), temperature)
                if use("rcl") else 0.0
            )
            snl = L.classification_loss(fake_u.detach(), yu_cols, proj, temperature) if do_snl else 0.0
            d_total = L.total_d_loss(d_gan, rcl, snl, w)
            nuclear = L.nuclear_loss(nuc_targets, nn.take_rows(proj, nuc_cols)) if use("nuclear") else 0.0
            _finite("L_nuclear", nuclear)
            nn.zero_grad(d_params)
            nn.backward(d_total + w.iba * nuclear, d_params)
            state.opt_d.step()

            # generator
            proj_v = project_attributes(model, attrs).value
            _, g_gan = L.gan_loss(xb, fake_s, proj_v[yb_cols], proj_v[ys_cols])
            pcl = (
                L.classification_loss(fake_s, [seen_index[c] for c in ys], proj_v[seen_cols], temperature)
                if use("pcl") else 0.0
            )
            if do_sal:
                stats = L.ClassStats(ids, attrs, L.class_means(fake_m, mean_labels, ids), real_means)
                sal = L.semantic_alignment_loss(stats, neighbors, align)
            else:
                sal = 0.0
            _finite("L_sal", sal)
            nuc_value = float(getattr(nuclear, "value", nuclear))
            g_total = L.total_g_loss(g_gan, pcl, sal + nuc_value, w)
            nn.zero_grad(g_params)
            nn.backward(g_total if isinstance(g_total, nn.Tensor) else nn.Tensor(g_total), g_params)
            state.opt_g.step()

            parts = {
                "L_D": d_total, "L_G": g_total, "L_GAN_d": d_gan, "L_GAN_g": g_gan, "L_rcl": rcl,
                "L_snl": snl, "L_pcl": pcl, "L_sal": sal, "L_nuclear": nuclear,
            }
            for key, value in parts.items():
                sums[key] = sums.get(key, 0.0) + float(getattr(value, "value", value))
            steps += 1
        history.append({k: v / steps for k, v in sums.items()})
    return history


def _task_accuracy(pred, labels, classes) -> float | None:
    return metrics.per_class_accuracy(pred, labels, classes) if classes else None


def _combined(s: float | None, u: float | None) -> float | None:
    if s is not None and u is not None:
        return metrics.harmonic(s, u)
    return s if s is not None else u


def evaluate_task(
    model: CGZSLModel,
    features: np.ndarray,
    labels: np.ndarray,
    test_idx: np.ndarray,
    schedule: TaskSchedule,
    t: int,
    trace_classes: list[int] | None = None,
    top_k: int = 3,
    rng: np.random.Generator | None = None,
) -> TaskEval:
    """Classify the test rows of every class encountered by task ``t``.

    Candidates are all classes with visible attributes. Besides pooled seen
    and unseen accuracies, the accuracy on each earlier task's classes is
    re-measured for the forgetting matrix.
    """
    seen, unseen = schedule.roles(t)
    seen_set, unseen_set = set(seen), set(unseen)
    ids = np.asarray(model.class_ids)
    pos = {c: i for i, c in enumerate(model.class_ids)}
    rows = test_idx[np.isin(labels[test_idx], seen + unseen)]
    y = labels[rows]
    pred_cols, scores = classify(features[rows], project_attributes(model, model.attributes).value)
    pred = ids[pred_cols]

    seen_acc = metrics.per_class_accuracy(pred, y, seen)
    unseen_acc = _task_accuracy(pred, y, unseen)
    h = metrics.harmonic(seen_acc, unseen_acc) if unseen_acc is not None else None
    auc = None
    if unseen:
        y_cols = np.array([pos[c] for c in y])
        auc = metrics.ausuc(scores, y_cols, [pos[c] for c in seen], [pos[c] for c in unseen])

    seen_by, unseen_by, h_by = [], [], []
    for j in range(1, t + 1):
        group = schedule.introduced(j)
        s = _task_accuracy(pred, y, [c for c in group if c in seen_set])
        u = _task_accuracy(pred, y, [c for c in group if c in unseen_set])
        seen_by.append(s)
        unseen_by.append(u)
        h_by.append(_combined(s, u))

    traces = {}
    rng = rng if rng is not None else np.random.default_rng(0)
    for c in trace_classes or []:
        if c not in pos:
            continue
        probe = None
        if c in seen_set:
            probe = features[test_idx[labels[test_idx] == c]].mean(axis=0)
        traces[int(c)] = metrics.similarity_trace(model, int(c), top_k, probe=probe, rng=rng)

    return TaskEval(
        t=t,
        seen_classes=list(seen),
        unseen_classes=list(unseen),
        seen_acc=seen_acc,
        unseen_acc=unseen_acc,
        harmonic=h,
        ausuc=auc,
        seen_by_task=seen_by,
        unseen_by_task=unseen_by,
        harmonic_by_task=h_by,
        traces=traces,
        scores=scores,
    )


def _default_trace_classes(schedule: TaskSchedule) -> list[int]:
    seen, unseen = schedule.roles(1)
    return [unseen[0]] if unseen else [seen[0]]


def prepare(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalised features and attributes, the form every loss consumes."""
    return nn.l2_normalize_rows(dataset.features).value, nn.l2_normalize_rows(dataset.attributes).value


def rng_for(seed: int, purpose: str, t: int = 0) -> np.random.Generator:
    streams = {"init": 0, "train": 1, "replay": 2, "eval": 3}
    return np.random.default_rng([seed, streams[purpose], t])


def build_report(schedule: TaskSchedule, cfg: RunConfig, evals: list[TaskEval], extra=None) -> ExperimentReport:
    T = len(evals)
    seen = [e.seen_acc for e in evals]
    unseen = [e.unseen_acc for e in evals]
    if schedule.setting == "static":
        msa, mua, mh = metrics.aggregate_static(seen, unseen, T)
    else:
        msa, mua, mh = metrics.aggregate_dynamic(seen, unseen, T)
    forget = metrics.forgetting([e.harmonic_by_task for e in evals])
    aucs = [e.ausuc for e in evals if e.ausuc is not None]
    config = cfg.to_json()
    config["metadata"] = {
        "forgetting_basis": "harmonic",
        "nuclear_reduction": "mean",
        "mausuc_tasks": "tasks with a non-empty unseen pool",
        **(extra or {}),
    }
    return ExperimentReport(
        setting=schedule.setting,
        T=T,
        mSA=msa,
        mUA=mua,
        mH=mh,
        forgetting=forget,
        mAUSUC=metrics.mausuc(aucs) if aucs else None,
        tasks=evals,
        config=config,
    )


def run_experiment(
    dataset: Dataset,
    schedule: TaskSchedule,
    cfg: RunConfig,
    audit: AuditHook | None = None,
    checkpoint_dir: str | Path | None = None,
) -> ExperimentReport:
    """Train task by task and evaluate after each one."""
    bad = [c for c in schedule.classes if not 0 <= c < dataset.num_classes]
    if bad:
        raise ContractError(f"schedule classes {bad[:5]} are not in the dataset")
    features, attributes = prepare(dataset)
    labels = dataset.labels
    model = CGZSLModel.create(cfg.model_config(dataset.d_x, dataset.d_a), rng_for(cfg.seed, "init"))
    state = ModelState.create(model, cfg)
    trace_classes = cfg.trace_classes if cfg.trace_classes is not None else _default_trace_classes(schedule)

    evals: list[TaskEval] = []
    prev_seen: list[int] = []
    for t in range(1, schedule.num_tasks + 1):
        if t > 1 and cfg.enabled("replay"):
            replay = generate_replay(model, prev_seen, cfg.replay_per_class, rng_for(cfg.seed, "replay", t),
                                     cfg.replay_budget)
        else:
            replay = ReplaySet.empty(dataset.d_x)
        visible = schedule.visible(t)
        model.encounter(visible, attributes[visible])
        seen, unseen = schedule.roles(t)
        model.mark_seen(seen)
        rows = dataset.train_idx[np.isin(labels[dataset.train_idx], schedule.trained(t))]
        task = TaskData(t, features[rows], labels[rows], rows, seen, unseen)
        history = train_task(state, task, replay, cfg, rng_for(cfg.seed, "train", t), audit)
        if checkpoint_dir is not None:
            save_checkpoint(model, checkpoint_path(checkpoint_dir, t))
        ev = evaluate_task(model, features, labels, dataset.test_idx, schedule, t, trace_classes,
                           cfg.trace_top_k, rng_for(cfg.seed, "eval", t))
        ev.loss_trace = history
        ev.replay = {"requested": cfg.replay_per_class if replay.counts else 0,
                     "counts": {str(k): v for k, v in replay.counts.items()},
                     "shortfall": {str(k): v for k, v in replay.shortfall.items()}}
        log.info("task %d: seen %.4f unseen %s H %s", t, ev.seen_acc, ev.unseen_acc, ev.harmonic)
        evals.append(ev)
        prev_seen = seen
    return build_report(schedule, cfg, evals, {"dataset": dataset.name})


def checkpoint_path(directory: str | Path, t: int) -> Path:
    return Path(directory) / f"model_t{t}.czsm"


def evaluate_checkpoints(
    dataset: Dataset,
    schedule: TaskSchedule,
    cfg: RunConfig,
    checkpoint_dir: str | Path,
    upto: int | None = None,
) -> ExperimentReport:
    """Recompute the metrics of tasks ``1..upto`` from saved per-task models."""
    upto = schedule.num_tasks if upto is None else upto
    if not 1 <= upto <= schedule.num_tasks:
        raise ContractError(f"task {upto} outside 1..{schedule.num_tasks}")
    features, _ = prepare(dataset)
    trace_classes = cfg.trace_classes if cfg.trace_classes is not None else _default_trace_classes(schedule)
    evals = []
    for t in range(1, upto + 1):
        model = load_checkpoint(checkpoint_path(checkpoint_dir, t))
        if (model.config.d_x, model.config.d_a) != (dataset.d_x, dataset.d_a):
            raise ShapeError(
                f"checkpoint for task {t} expects d_x={model.config.d_x}, d_a={model.config.d_a}; "
                f"dataset has d_x={dataset.d_x}, d_a={dataset.d_a}"
            )
        missing = set(schedule.visible(t)) - set(model.class_ids)
        if missing:
            raise ContractError(f"checkpoint for task {t} lacks classes {sorted(missing)[:5]}")
        evals.append(evaluate_task(model, features, dataset.labels, dataset.test_idx, schedule, t,
                                   trace_classes, cfg.trace_top_k, rng_for(cfg.seed, "eval", t)))
    return build_report(schedule, cfg, evals, {"dataset": dataset.name})
