"""Leave-one-out 1-nearest-neighbor scoring of candidate experts.

Squared Euclidean distances are computed row by row as sums of squared
differences, so they match a naive per-pair evaluation bit for bit and do
not depend on BLAS threading. Ties go to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset_io import DataFormatError, EmbeddingMatrix, TaskDataset
from .selectors import SelectionReport, pick_best


@dataclass
class LoocvResult:
    accuracy: float
    correct: int
    total: int
    nn_index: np.ndarray


def pairwise_sq_dists(x) -> np.ndarray:
    """Full N x N squared-distance matrix (diagonal is zero)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        out[i] = np.sum((x - x[i]) ** 2, axis=1)
    return out


def loocv_1nn_accuracy(x, y) -> LoocvResult:
    """Fraction of points whose nearest other point shares their label."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataFormatError("leave-one-out scoring needs at least 2 points")
    if y.shape != (x.shape[0],):
        raise DataFormatError("one label per point required")
    if not np.isfinite(x).all():
        raise DataFormatError("non-finite value in point matrix")
    n = x.shape[0]
    nn = np.empty(n, dtype=np.int64)
    correct = 0
    for i in range(n):
        d = np.sum((x - x[i]) ** 2, axis=1)
        d[i] = np.inf
        j = int(np.argmin(d))  # first minimum, so ties resolve to lowest j
        nn[i] = j
        if y[j] == y[i]:
            correct += 1
    return LoocvResult(accuracy=correct / n, correct=correct, total=n, nn_index=nn)


def knn_select(task: TaskDataset, embeddings: list[EmbeddingMatrix]) -> SelectionReport:
    """Score every expert by leave-one-out accuracy on its embeddings.

    Each embedding matrix must cover exactly the task's example ids; rows
    are matched by id, so file order does not matter.
    """
    if not embeddings:
        raise DataFormatError("no expert embeddings supplied")
    if task.n < 2:
        raise DataFormatError("selection needs at least 2 task examples")
    pos = {int(eid): i for i, eid in enumerate(task.example_ids)}
    scores: dict[int, float] = {}
    for emb in embeddings:
        if emb.expert_id in scores:
            raise DataFormatError(f"duplicate expert id {emb.expert_id}")
        if emb.n != task.n:
            raise DataFormatError(
                f"expert {emb.expert_id} has {emb.n} rows, task has {task.n} examples")
        perm = np.empty(task.n, dtype=np.int64)
        for i, eid in enumerate(emb.example_ids):
            at = pos.get(int(eid))
            if at is None:
                raise DataFormatError(
                    f"expert {emb.expert_id} embeds unknown example id {int(eid)}")
            perm[at] = i
        aligned = emb.data[perm].astype(np.float64)
        scores[emb.expert_id] = loocv_1nn_accuracy(aligned, task.class_labels).accuracy
    chosen, tie_count = pick_best(scores, "maximize")
    return SelectionReport(method="knn", scores=scores, chosen=chosen,
                           tie_count=tie_count, direction="maximize")
