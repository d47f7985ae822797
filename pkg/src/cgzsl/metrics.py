"""Class-balanced accuracies, task aggregates, forgetting, AUSUC, similarity traces."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import model as M
from .errors import ContractError


def per_class_accuracy(preds, labels, class_set) -> float:
    """Mean over ``class_set`` of the fraction of that class's rows predicted correctly."""
    preds, labels = np.asarray(preds), np.asarray(labels)
    accs = []
    for c in class_set:
        rows = labels == c
        n = int(rows.sum())
        if n == 0:
            raise ContractError(f"class {c} has no labelled rows")
        accs.append(np.count_nonzero(preds[rows] == c) / n)
    if not accs:
        raise ContractError("per_class_accuracy over an empty class set")
    return float(np.mean(accs))


def harmonic(s: float, u: float) -> float:
    return 0.0 if s + u == 0 else 2.0 * s * u / (s + u)


def _mean(values: Sequence[float]) -> float:
    return float(sum(values) / len(values))


def aggregate_static(seen: Sequence[float], unseen: Sequence[float | None], T: int):
    """(mSA, mUA, mH) when future tasks form the unseen pool.

    Seen accuracy is averaged over all ``T`` tasks; unseen and harmonic over
    the first ``T - 1`` (the last task has no future). With ``T == 1`` the
    latter two are ``None``.
    """
    if T < 1:
        raise ContractError("aggregate_static needs T >= 1")
    if len(seen) < T or len(unseen) < T - 1:
        raise ContractError("fewer task accuracies than tasks")
    msa = _mean(seen[:T])
    if T == 1:
        return msa, None, None
    mua = _mean(unseen[: T - 1])
    mh = _mean([harmonic(s, u) for s, u in zip(seen[: T - 1], unseen[: T - 1])])
    return msa, mua, mh


def aggregate_dynamic(seen: Sequence[float], unseen: Sequence[float], T: int):
    """(mSA, mUA, mH) averaged over all tasks; mH is the mean of per-task harmonics."""
    if T < 1:
        raise ContractError("aggregate_dynamic needs T >= 1")
    if len(seen) < T or len(unseen) < T:
        raise ContractError("fewer task accuracies than tasks")
    s, u = list(seen[:T]), list(unseen[:T])
    return _mean(s), _mean(u), _mean([harmonic(a, b) for a, b in zip(s, u)])


def forgetting(acc) -> float:
    """Average drop from each earlier task's best accuracy to its final accuracy.

    ``acc[t][j]`` is the accuracy on task j's classes after training task t
    (0-based, lower triangular). Improvements count as zero.
    """
    T = len(acc)
    if T < 2:
        return 0.0
    drops = []
    for j in range(T - 1):
        best = max(acc[t][j] for t in range(j, T - 1))
        drops.append(max(0.0, best - acc[T - 1][j]))
    return _mean(drops)


def ausuc(scores, labels, seen_classes, unseen_classes) -> float:
    """Area under the seen/unseen accuracy curve.

    ``scores`` is rows × classes with labels given as column indices;
    ``seen_classes``/``unseen_classes`` partition the columns. A bias is
    subtracted from every seen score and swept across each value where a
    row's seen-vs-unseen decision flips; the resulting class-balanced
    (unseen acc, seen acc) points are integrated with the trapezoid rule.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    seen_classes = np.asarray(seen_classes, dtype=np.intp)
    unseen_classes = np.asarray(unseen_classes, dtype=np.intp)
    if seen_classes.size == 0 or unseen_classes.size == 0:
        raise ContractError("ausuc needs both seen and unseen classes")
    is_seen = np.isin(labels, seen_classes)
    is_unseen = np.isin(labels, unseen_classes)
    if not is_seen.any() or not is_unseen.any():
        raise ContractError("ausuc needs test rows from both pools")
    keep = is_seen | is_unseen
    scores, labels, is_seen = scores[keep], labels[keep], is_seen[keep]

    s_part, u_part = scores[:, seen_classes], scores[:, unseen_classes]
    seen_pred = seen_classes[np.argmax(s_part, axis=1)]
    unseen_pred = unseen_classes[np.argmax(u_part, axis=1)]
    flip = s_part.max(axis=1) - u_part.max(axis=1)

    weight = np.zeros(labels.size)
    for mask in (is_seen, ~is_seen):
        pool = np.unique(labels[mask])
        for c in pool:
            rows = labels == c
            weight[rows] = 1.0 / (rows.sum() * pool.size)
    gain_u = np.where(~is_seen & (unseen_pred == labels), weight, 0.0)
    loss_s = np.where(is_seen & (seen_pred == labels), weight, 0.0)

    order = np.argsort(flip, kind="stable")
    points_u = [0.0]
    points_s = [float(loss_s.sum())]
    # flips equal up to rounding are one breakpoint; splitting them would turn a
    # diagonal segment of the curve into a staircase
    sorted_flip = flip[order]
    tol = 64 * np.finfo(np.float64).eps * max(1.0, float(np.abs(scores).max()))
    starts = np.flatnonzero(np.r_[True, np.diff(sorted_flip) > tol])
    ends = np.append(starts[1:], order.size)
    u_acc, s_acc = 0.0, points_s[0]
    for lo, hi in zip(starts, ends):
        rows = order[lo:hi]
        u_acc += gain_u[rows].sum()
        s_acc -= loss_s[rows].sum()
        points_u.append(u_acc)
        points_s.append(max(s_acc, 0.0))
    pu, ps = np.array(points_u), np.array(points_s)
    return float(np.sum(np.diff(pu) * (ps[1:] + ps[:-1]) / 2.0))


def mausuc(per_task: Sequence[float]) -> float:
    if len(per_task) == 0:
        raise ContractError("mausuc over zero tasks")
    return _mean(per_task)


def top_similar(probe: np.ndarray, projections: np.ndarray, class_ids: Sequence[int], top_k: int):
    """The ``top_k`` (class, cosine) pairs, highest first, ties to the lower class id."""
    sims = M.classify(np.asarray(probe).reshape(1, -1), projections)[1][0]
    ids = np.asarray(class_ids)
    order = np.lexsort((ids, -sims))[:top_k]
    return [(int(ids[i]), float(sims[i])) for i in order]


def similarity_trace(
    model: M.CGZSLModel,
    tracked_class: int,
    top_k: int = 3,
    probe: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    n_samples: int = 64,
):
    """Classes whose identifier projections are closest to a tracked class.

    The probe is ``probe`` if given (e.g. the mean real test feature of a seen
    class), otherwise the mean of ``n_samples`` generated features.
    """
    if tracked_class not in model.class_ids:
        raise ContractError(f"class {tracked_class} has not been encountered")
    projections = M.project_attributes(model, model.attributes).value
    if probe is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        attr = np.repeat(model.attributes_of([tracked_class]), n_samples, axis=0)
        z = M.sample_noise(n_samples, model.config.d_z, rng)
        probe = M.generate(model, z, attr).value.mean(axis=0)
    return top_similar(probe, projections, model.class_ids, top_k)
