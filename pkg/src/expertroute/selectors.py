"""Expert selection strategies that avoid any downstream training.

Three scored strategies plus a uniform baseline:

  * domain prediction: average log-probability the domain classifier assigns
    to each expert over the task's images, argmax
  * label matching: Bernoulli KL between each expert's label prior and the
    task's estimated upstream label distribution, argmin
  * random: seeded uniform draw, no scores

Mean-of-logs is used for aggregation rather than an explicit geometric mean;
the argmax is identical and nothing overflows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset_io import CATEGORICAL, MULTILABEL, DataFormatError, ProbMatrix

EPN_LOG_CLAMP = 1e-12
KL_CLAMP = 1e-7

_DIRECTIONS = ("maximize", "minimize")
_METHODS = ("knn", "epn", "kl", "random", "oracle")


class SelectorInputError(ValueError):
    """Input of the wrong kind for the requested method."""


@dataclass
class LabelDistribution:
    """Independent per-label marginals over the upstream label space."""

    marginals: np.ndarray

    def __post_init__(self):
        self.marginals = np.ascontiguousarray(self.marginals, dtype=np.float64)
        if self.marginals.ndim != 1 or len(self.marginals) < 1:
            raise DataFormatError("marginals must be a non-empty vector")
        if not np.isfinite(self.marginals).all():
            raise DataFormatError("non-finite marginal")
        if ((self.marginals < 0.0) | (self.marginals > 1.0)).any():
            raise DataFormatError("marginals must lie in [0, 1]")

    def __len__(self):
        return len(self.marginals)


@dataclass
class SelectionReport:
    method: str
    scores: dict[int, float]
    chosen: int
    tie_count: int
    direction: str = "maximize"

    def __post_init__(self):
        if self.method not in _METHODS:
            raise DataFormatError(f"unknown method {self.method!r}")
        if self.direction not in _DIRECTIONS:
            raise DataFormatError(f"unknown direction {self.direction!r}")
        if self.tie_count < 1:
            raise DataFormatError("tie_count must be at least 1")
        if self.scores:
            want_chosen, want_ties = pick_best(self.scores, self.direction)
            if self.chosen != want_chosen or self.tie_count != want_ties:
                raise DataFormatError("report is inconsistent with its scores")

    def to_text(self) -> str:
        lines = [f"method={self.method} chosen={self.chosen} tie_count={self.tie_count}"]
        for eid in sorted(self.scores):
            lines.append(f"score {eid} {self.scores[eid]:.9g}")
        return "\n".join(lines) + "\n"


def pick_best(scores: dict[int, float], direction: str) -> tuple[int, int]:
    """Optimal expert id under the direction; ties go to the lowest id."""
    if not scores:
        raise DataFormatError("cannot pick from empty scores")
    vals = np.array([scores[e] for e in sorted(scores)], dtype=np.float64)
    best = vals.max() if direction == "maximize" else vals.min()
    winners = [e for e in sorted(scores) if scores[e] == best]
    return winners[0], len(winners)


def epn_select(probs: ProbMatrix) -> SelectionReport:
    """Pick the expert with the highest mean log-probability over the task.

    Columns are experts. Probabilities are clamped below at 1e-12 before the
    log so a single zero cannot veto an expert.
    """
    if probs.kind != CATEGORICAL:
        raise SelectorInputError("domain prediction needs a categorical probability matrix")
    p = np.maximum(probs.data.astype(np.float64), EPN_LOG_CLAMP)
    means = np.log(p).mean(axis=0)
    scores = {e: float(means[e]) for e in range(probs.k)}
    chosen, ties = pick_best(scores, "maximize")
    return SelectionReport(method="epn", scores=scores, chosen=chosen,
                           tie_count=ties, direction="maximize")


def estimate_task_distribution(probs: ProbMatrix) -> LabelDistribution:
    """Column means of per-image multilabel probabilities."""
    if probs.kind != MULTILABEL:
        raise SelectorInputError("task distribution needs a multilabel probability matrix")
    return LabelDistribution(probs.data.astype(np.float64).mean(axis=0))


def empirical_prior(sl, closed_labels, num_classes: int) -> LabelDistribution:
    """Per-label membership frequency over a slice.

    closed_labels maps example id to its transitively closed label set;
    marginal c is the fraction of slice members whose set contains c.
    """
    if num_classes < 1:
        raise DataFormatError("num_classes must be at least 1")
    if not sl.member_ids:
        raise DataFormatError("slice has no members")
    counts = np.zeros(num_classes, dtype=np.float64)
    for eid in sl.member_ids:
        labels = closed_labels.get(eid)
        if labels is None:
            raise DataFormatError(f"slice member {eid} has no closed label set")
        for lid in labels:
            if 0 <= lid < num_classes:
                counts[lid] += 1.0
    return LabelDistribution(counts / len(sl.member_ids))


def bernoulli_kl(p, q, eps: float = KL_CLAMP) -> float:
    """Sum of per-label Bernoulli KL divergences D(p_c || q_c).

    Both arguments are clamped into [eps, 1-eps] inside the logs; the outer
    multipliers stay unclamped. Natural log.
    """
    p = np.asarray(getattr(p, "marginals", p), dtype=np.float64)
    q = np.asarray(getattr(q, "marginals", q), dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1 or len(p) < 1:
        raise DataFormatError("distributions must be equal-length vectors")
    for name, v in (("p", p), ("q", q)):
        if not np.isfinite(v).all() or ((v < 0.0) | (v > 1.0)).any():
            raise DataFormatError(f"{name} is not a vector of probabilities")
    pc = np.clip(p, eps, 1.0 - eps)
    qc = np.clip(q, eps, 1.0 - eps)
    terms = p * np.log(pc / qc) + (1.0 - p) * np.log((1.0 - pc) / (1.0 - qc))
    return float(terms.sum())


def kl_select(priors: list[LabelDistribution], q: LabelDistribution) -> SelectionReport:
    """Pick the expert whose label prior is closest to the task's in KL."""
    if not priors:
        raise DataFormatError("no expert priors supplied")
    scores = {e: bernoulli_kl(prior, q) for e, prior in enumerate(priors)}
    chosen, ties = pick_best(scores, "minimize")
    return SelectionReport(method="kl", scores=scores, chosen=chosen,
                           tie_count=ties, direction="minimize")


def random_select(num_experts: int, seed: int) -> SelectionReport:
    """Uniform seeded pick among the experts; carries no scores."""
    if num_experts < 1:
        raise DataFormatError("need at least one expert")
    chosen = int(np.random.default_rng(seed).integers(num_experts))
    return SelectionReport(method="random", scores={}, chosen=chosen,
                           tie_count=1, direction="maximize")
