"""Adversarial, classification and incremental alignment losses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ContractError, NumericalError

PROB_FLOOR = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Multipliers of the GAN, classification, seen-normalized and alignment terms."""

    gan: float = 1.0  # λ1
    cls: float = 1.0  # λ2, shared by the real and pseudo classification losses
    snl: float = 1.0  # λ3
    iba: float = 1.0  # λ4

    def __post_init__(self):
        for name, value in vars(self).items():
            if not (math.isfinite(value) and value >= 0):
                raise ContractError(f"loss weight {name} must be finite and >= 0, got {value}")

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(self.gan * factor, self.cls * factor, self.snl * factor, self.iba * factor)


@dataclass(frozen=True)
class AlignmentConfig:
    eps: float = 0.1  # half-width of the allowed band around attribute similarity
    n_neighbors: int = 3

    def __post_init__(self):
        if not self.eps >= 0:
            raise ContractError("alignment eps must be >= 0")
        if self.n_neighbors < 1:
            raise ContractError("n_neighbors must be >= 1")


def rowwise_cosine(x, p) -> nn.Tensor:
    """Cosine between row i of ``x`` and row i of ``p``, as an (m, 1) column."""
    x, p = nn._lift(x), nn._lift(p)
    if x.shape != p.shape:
        raise ContractError(f"paired rows need equal shapes, got {x.shape} and {p.shape}")
    prod = nn.mul(nn.l2_normalize_rows(x), nn.l2_normalize_rows(p))
    return nn.clip(prod @ np.ones((x.shape[1], 1)), -1.0, 1.0)


def _similarity_prob(s: nn.Tensor) -> nn.Tensor:
    return nn.clip((s + 1.0) * 0.5, PROB_FLOOR, 1.0 - PROB_FLOOR)


def gan_loss(real_x, gen_x, real_proj, gen_proj) -> tuple[nn.Tensor, nn.Tensor]:
    """Adversarial losses on feature/projection cosine similarity.

    Each feature row is paired with the identifier projection of its own
    class. Cosines are mapped to ``(1+s)/2`` and clamped away from 0 and 1 so
    the logs stay finite. Returns ``(d_loss, g_loss)``; the generator side is
    the non-saturating ``-E[log m(s_fake)]``.
    """
    real_x, gen_x = nn._lift(real_x), nn._lift(gen_x)
    if real_x.shape[0] == 0 or gen_x.shape[0] == 0:
        raise ContractError("gan_loss needs non-empty real and generated batches")
    m_real = _similarity_prob(rowwise_cosine(real_x, real_proj))
    m_fake = _similarity_prob(rowwise_cosine(gen_x, gen_proj))
    d_loss = -(nn.mean(nn.log(m_real)) + nn.mean(nn.log(1.0 - m_fake)))
    g_loss = -nn.mean(nn.log(m_fake))
    return d_loss, g_loss


def classification_loss(features, labels, projections, temperature: float) -> nn.Tensor:
    """Cross-entropy of the tempered softmax over cosine scores.

    ``labels`` index rows of ``projections``.
    """
    scores = nn.cosine_matrix(features, projections)
    return nn.softmax_cross_entropy(scores, labels, temperature)


def class_means(features, labels, class_set) -> nn.Tensor:
    """Mean feature of each class in ``class_set`` (rows in that order)."""
    features = nn._lift(features)
    labels = np.asarray(labels)
    avg = np.zeros((len(class_set), features.shape[0]))
    for i, c in enumerate(class_set):
        rows = np.flatnonzero(labels == c)
        if rows.size == 0:
            raise ContractError(f"class {c} has no samples to average")
        avg[i, rows] = 1.0 / rows.size
    return nn.Tensor(avg) @ features


def attribute_similarity(attributes: np.ndarray) -> np.ndarray:
    return nn.cosine_matrix(attributes, attributes).value


def semantic_neighbors(attributes: np.ndarray, n_neighbors: int) -> np.ndarray:
    """For every class, the ``n_neighbors`` most attribute-similar other classes.

    Returns an (N, n_neighbors) index array. Self is excluded; equal
    similarities resolve toward the lower index.
    """
    n = attributes.shape[0]
    if n_neighbors >= n:
        raise ContractError(f"need more than {n_neighbors} classes for {n_neighbors} neighbours, have {n}")
    sim = attribute_similarity(attributes)
    idx = np.arange(n)
    out = np.empty((n, n_neighbors), dtype=np.intp)
    for i in range(n):
        others = idx[idx != i]
        order = np.lexsort((others, -sim[i, others]))
        out[i] = others[order[:n_neighbors]]
    return out


@dataclass
class ClassStats:
    """Per-class quantities feeding the alignment losses.

    ``gen_means`` holds one generated mean per encountered class (same order as
    ``class_ids``) and stays attached to the generator's graph. ``real_means``
    maps class id to the mean of its real (current or replayed) features.
    """

    class_ids: list[int]
    attributes: np.ndarray
    gen_means: nn.Tensor
    real_means: dict[int, np.ndarray]

    def reference_means(self) -> np.ndarray:
        """Real mean where one exists, otherwise the (constant) generated mean."""
        ref = self.gen_means.value.copy()
        for i, c in enumerate(self.class_ids):
            if c in self.real_means:
                ref[i] = self.real_means[c]
        return ref


def semantic_alignment_loss(stats: ClassStats, neighbors: np.ndarray, cfg: AlignmentConfig) -> nn.Tensor:
    """Squared hinge keeping visual similarity within ``±eps`` of attribute similarity.

    For each class i and neighbour j the cosine between the reference mean of
    j and the generated mean of i is compared against the band around the
    attribute cosine of (i, j). Summed over neighbours, averaged over classes.
    """
    n = len(stats.class_ids)
    if stats.gen_means.shape[0] != n:
        raise ContractError(f"{stats.gen_means.shape[0]} generated means for {n} classes")
    tau = attribute_similarity(stats.attributes)
    mask = np.zeros((n, n))
    mask[np.repeat(np.arange(n), neighbors.shape[1]), neighbors.ravel()] = 1.0
    visual = nn.cosine_matrix(stats.gen_means, stats.reference_means())
    above = nn.relu(visual - (tau + cfg.eps))
    below = nn.relu((tau - cfg.eps) - visual)
    hinge = nn.square(above) + nn.square(below)
    return nn.total(nn.mul(hinge, mask)) / n


def nuclear_loss(real_means, projections) -> nn.Tensor:
    """Mean squared distance between each class's real mean and its projection."""
    projections = nn._lift(projections)
    real_means = np.asarray(real_means, dtype=np.float64)
    if real_means.shape[0] == 0:
        raise ContractError("nuclear_loss needs at least one class")
    return nn.total(nn.square(projections - real_means)) / real_means.shape[0]


def _check(parts: dict) -> None:
    for name, value in parts.items():
        v = value.value if isinstance(value, nn.Tensor) else np.asarray(value)
        if not np.all(np.isfinite(v)):
            raise NumericalError(name)


def total_d_loss(gan, rcl, snl, w: LossWeights):
    _check({"L_GAN": gan, "L_rcl": rcl, "L_snl": snl})
    return w.gan * gan + w.cls * rcl + w.snl * snl


def total_g_loss(gan, pcl, iba, w: LossWeights):
    _check({"L_GAN": gan, "L_pcl": pcl, "L_iba": iba})
    return w.gan * gan + w.cls * pcl + w.iba * iba
