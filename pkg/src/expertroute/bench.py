"""Synthetic benchmark: worlds with a known best expert, a fine-tune oracle,
selector regret with bootstrap confidence intervals, and the asymptotic cost
model for the two transfer strategies.

A semantic world gives every expert its own latent coordinate subspace. Each
task hides its class structure inside the true expert's subspace, so that
expert's embedding separates the classes while the others see mostly noise.
The random_slices mode keeps the tasks but replaces the experts with
projections spanned by random examples from a shared pool, which leaves them
weakly differentiated.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset_io import MULTILABEL, DataFormatError, EmbeddingMatrix, ProbMatrix, TaskDataset
from .knn import knn_select
from .selectors import (LabelDistribution, SelectionReport, epn_select,
                        estimate_task_distribution, kl_select, random_select)
from .toy_models import (LinearExtractor, TrainerConfig, extract,
                         oracle_downstream_accuracy, predict_proba, train_logistic)

SEMANTIC = "semantic"
RANDOM_SLICES = "random_slices"

# Generator shape constants: domain shift per expert, class separation, label
# prior concentration, upstream bank size per expert.
_CENTER_SCALE = 2.0
_CLASS_SEP = 3.0
_PRIOR_HI = 0.92
_PRIOR_LO = 0.08
_UPSTREAM_PER_EXPERT = 48

_METHOD_SALT = {"knn": 101, "epn": 102, "kl": 103, "random": 104, "oracle": 105}


@dataclass
class WorldConfig:
    seed: int = 0
    num_experts: int = 16
    d_raw: int = 64
    d_embed: int = 8
    num_classes: int = 4
    num_tasks: int = 20
    noise: float = 0.5
    mode: str = SEMANTIC
    train_per_task: int = 1000
    test_per_task: int = 200


@dataclass
class TaskInstance:
    index: int
    true_expert: int
    train: TaskDataset
    train_x: np.ndarray
    test: TaskDataset
    test_x: np.ndarray
    label_probs: ProbMatrix


@dataclass
class SyntheticWorld:
    config: WorldConfig
    experts: list[LinearExtractor]
    slice_priors: list[LabelDistribution]
    tasks: list[TaskInstance]
    upstream_x: np.ndarray
    upstream_expert: np.ndarray

    @property
    def num_experts(self) -> int:
        return len(self.experts)

    def digest(self) -> str:
        """sha256 over a canonical byte serialization of the whole world."""
        h = hashlib.sha256()
        cfg = self.config
        h.update(repr((cfg.seed, cfg.num_experts, cfg.d_raw, cfg.d_embed,
                       cfg.num_classes, cfg.num_tasks, cfg.noise, cfg.mode,
                       cfg.train_per_task, cfg.test_per_task)).encode())
        for e in self.experts:
            h.update(np.ascontiguousarray(e.weight, dtype=np.float64).tobytes())
            h.update(np.ascontiguousarray(e.bias, dtype=np.float64).tobytes())
        for p in self.slice_priors:
            h.update(p.marginals.tobytes())
        for t in self.tasks:
            h.update(repr((t.index, t.true_expert)).encode())
            h.update(t.train.example_ids.tobytes())
            h.update(t.train.class_labels.tobytes())
            h.update(np.ascontiguousarray(t.train_x).tobytes())
            h.update(t.test.example_ids.tobytes())
            h.update(t.test.class_labels.tobytes())
            h.update(np.ascontiguousarray(t.test_x).tobytes())
            h.update(t.label_probs.data.tobytes())
        h.update(np.ascontiguousarray(self.upstream_x).tobytes())
        h.update(np.ascontiguousarray(self.upstream_expert).tobytes())
        return h.hexdigest()


def _orthonormal_rows(m: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt with einsum dots (no BLAS, fixed order)."""
    rows = []
    for row in np.ascontiguousarray(m, dtype=np.float64):
        v = row.copy()
        for u in rows:
            v = v - np.einsum("i,i->", u, v) * u
        nrm = math.sqrt(float(np.einsum("i,i->", v, v)))
        if nrm < 1e-9:
            raise DataFormatError("degenerate rows cannot be orthonormalized")
        rows.append(v / nrm)
    return np.stack(rows)


def _validate_config(cfg: WorldConfig) -> None:
    if cfg.num_experts < 2:
        raise DataFormatError("a world needs at least 2 experts")
    if cfg.mode not in (SEMANTIC, RANDOM_SLICES):
        raise DataFormatError(f"unknown world mode {cfg.mode!r}")
    if cfg.d_embed < 1 or cfg.d_raw < cfg.d_embed:
        raise DataFormatError("need 1 <= d_embed <= d_raw")
    if not 2 <= cfg.num_classes <= cfg.d_embed:
        raise DataFormatError("need 2 <= classes <= d_embed")
    if cfg.num_tasks < 1:
        raise DataFormatError("need at least one task")
    if cfg.noise < 0:
        raise DataFormatError("noise must be non-negative")
    if cfg.train_per_task < 2 * cfg.num_classes or cfg.test_per_task < cfg.num_classes:
        raise DataFormatError("per-task sample counts too small for the class count")
    if cfg.num_experts > math.comb(cfg.d_raw, cfg.d_embed):
        raise DataFormatError(
            f"{cfg.num_experts} experts exceed the {math.comb(cfg.d_raw, cfg.d_embed)} "
            f"distinct {cfg.d_embed}-dim subspaces of a {cfg.d_raw}-dim space")


def generate_world(cfg: WorldConfig) -> SyntheticWorld:
    """Build a deterministic world; per-task streams are seeded seed^task."""
    _validate_config(cfg)
    e_count, d_raw, d_embed = cfg.num_experts, cfg.d_raw, cfg.d_embed
    rng_world = np.random.default_rng([cfg.seed, 11])

    coords = []
    seen = set()
    while len(coords) < e_count:
        c = tuple(int(i) for i in np.sort(rng_world.choice(d_raw, size=d_embed, replace=False)))
        if c not in seen:
            seen.add(c)
            coords.append(np.array(c, dtype=np.int64))
    centers = rng_world.normal(size=(e_count, d_embed)) * _CENTER_SCALE

    rng_up = np.random.default_rng([cfg.seed, 13])
    ux, ue = [], []
    for e in range(e_count):
        block = rng_up.normal(size=(_UPSTREAM_PER_EXPERT, d_raw))
        block[:, coords[e]] = centers[e] + rng_up.normal(size=(_UPSTREAM_PER_EXPERT, d_embed))
        ux.append(block)
        ue.extend([e] * _UPSTREAM_PER_EXPERT)
    upstream_x = np.concatenate(ux, axis=0)
    upstream_expert = np.array(ue, dtype=np.int64)

    if cfg.mode == SEMANTIC:
        experts = []
        for e in range(e_count):
            w = np.zeros((d_embed, d_raw))
            w[np.arange(d_embed), coords[e]] = 1.0
            experts.append(LinearExtractor(expert_id=e, weight=w, bias=np.zeros(d_embed)))
    else:
        experts = []
        for e in range(e_count):
            rng_fit = np.random.default_rng([cfg.seed, 17, e])
            for _ in range(32):
                idx = rng_fit.choice(len(upstream_x), size=d_embed, replace=False)
                try:
                    basis = _orthonormal_rows(upstream_x[idx])
                    break
                except DataFormatError:
                    continue
            else:
                raise DataFormatError("could not fit a projection from the example pool")
            experts.append(LinearExtractor(expert_id=e, weight=basis, bias=np.zeros(d_embed)))

    priors = []
    for e in range(e_count):
        m = np.full(e_count, _PRIOR_LO)
        m[e] = _PRIOR_HI
        priors.append(LabelDistribution(m))

    tasks = [_generate_task(cfg, t, coords, centers, priors)
             for t in range(cfg.num_tasks)]
    return SyntheticWorld(config=cfg, experts=experts, slice_priors=priors,
                          tasks=tasks, upstream_x=upstream_x, upstream_expert=upstream_expert)


def _generate_task(cfg, t, coords, centers, priors) -> TaskInstance:
    rng = np.random.default_rng(cfg.seed ^ t)
    true_e = t % cfg.num_experts
    c = cfg.num_classes
    class_dirs = _orthonormal_rows(rng.normal(size=(c, cfg.d_embed))) * _CLASS_SEP

    def split(n, id_base):
        y = rng.permutation(np.arange(n) % c).astype(np.uint32)
        x = rng.normal(size=(n, cfg.d_raw))
        x[:, coords[true_e]] = (centers[true_e] + class_dirs[y]
                                + cfg.noise * rng.normal(size=(n, cfg.d_embed)))
        ids = np.arange(id_base, id_base + n, dtype=np.uint64)
        return TaskDataset(example_ids=ids, class_labels=y, num_classes=c), x

    train, train_x = split(cfg.train_per_task, 0)
    test, test_x = split(cfg.test_per_task, cfg.train_per_task)

    # Stand-in for upstream-label predictions on the task's images: rows near
    # the true expert's prior, occasionally dragged toward a wrong expert's.
    target = priors[true_e].marginals
    if rng.random() < min(0.5, 0.35 * cfg.noise):
        other = int(rng.integers(cfg.num_experts - 1))
        other += int(other >= true_e)
        lam = rng.uniform(0.55, 0.85)
        target = (1.0 - lam) * target + lam * priors[other].marginals
    jitter = (0.05 + 0.15 * cfg.noise) * rng.normal(size=(cfg.train_per_task, cfg.num_experts))
    rows = np.clip(target + jitter, 0.01, 0.99)
    label_probs = ProbMatrix(data=rows, kind=MULTILABEL)

    return TaskInstance(index=t, true_expert=true_e, train=train, train_x=train_x,
                        test=test, test_x=test_x, label_probs=label_probs)


@dataclass
class TaskRecord:
    task_index: int
    oracle_best: int
    chosen: int
    oracle_acc: float
    selector_acc: float
    regret: float


@dataclass
class RegretSummary:
    method: str
    records: list[TaskRecord]
    mean_regret: float
    agreement: float
    regret_ci: tuple[float, float]
    agreement_ci: tuple[float, float]


def bootstrap_ci(samples, level: float = 0.95, resamples: int = 2000,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean, linear-interpolated."""
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim != 1 or len(s) == 0:
        raise DataFormatError("bootstrap needs a non-empty 1-d sample")
    if not 0.0 < level < 1.0:
        raise DataFormatError("level must be inside (0, 1)")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(s), size=(resamples, len(s)))
    means = s[idx].mean(axis=1)
    alpha = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [alpha, 100.0 - alpha])
    return float(lo), float(hi)


def evaluate_selectors(world: SyntheticWorld, methods=("knn", "epn", "kl", "random"),
                       trainer: TrainerConfig | None = None, resamples: int = 2000,
                       level: float = 0.95) -> dict[str, RegretSummary]:
    """Oracle-evaluate every expert on every task, then score each selector.

    Selector and oracle accuracies come from the identical evaluation, so
    regret is non-negative by construction. The oracle pseudo-method is
    allowed for self-consistency checks.
    """
    if len(world.tasks) < 5:
        raise DataFormatError("benchmark needs at least 5 tasks")
    for m in methods:
        if m not in _METHOD_SALT:
            raise DataFormatError(f"unknown selector {m!r}")
    trainer = trainer or TrainerConfig(lr=0.5, steps=80, seed=0)
    e_count = world.num_experts

    epn_model = None
    if "epn" in methods:
        epn_model = train_logistic(world.upstream_x, world.upstream_expert,
                                   lr=0.5, steps=150, seed=0)

    oracle_accs = np.empty((len(world.tasks), e_count))
    for t, task in enumerate(world.tasks):
        for e in range(e_count):
            oracle_accs[t, e] = oracle_downstream_accuracy(task, world.experts[e], trainer)
    oracle_best = np.argmax(oracle_accs, axis=1)  # first max, so lowest id on ties

    out: dict[str, RegretSummary] = {}
    for method in methods:
        records = []
        for t, task in enumerate(world.tasks):
            chosen = _run_selector(method, world, task, epn_model, int(oracle_best[t]))
            o_acc = float(oracle_accs[t, oracle_best[t]])
            s_acc = float(oracle_accs[t, chosen])
            records.append(TaskRecord(task_index=t, oracle_best=int(oracle_best[t]),
                                      chosen=chosen, oracle_acc=o_acc,
                                      selector_acc=s_acc, regret=o_acc - s_acc))
        regrets = np.array([r.regret for r in records])
        agrees = np.array([1.0 if r.chosen == r.oracle_best else 0.0 for r in records])
        salt = _METHOD_SALT[method]
        out[method] = RegretSummary(
            method=method, records=records,
            mean_regret=float(regrets.mean()), agreement=float(agrees.mean()),
            regret_ci=bootstrap_ci(regrets, level, resamples,
                                   seed=(world.config.seed + 1) * 1000003 + salt),
            agreement_ci=bootstrap_ci(agrees, level, resamples,
                                      seed=(world.config.seed + 1) * 1000003 + 500 + salt))
    return out


def _run_selector(method, world, task, epn_model, oracle_best: int) -> int:
    if method == "oracle":
        return oracle_best
    if method == "random":
        return random_select(world.num_experts,
                             seed=(world.config.seed ^ task.index) + 7919).chosen
    if method == "knn":
        embs = [EmbeddingMatrix(expert_id=e, example_ids=task.train.example_ids,
                                data=extract(world.experts[e], task.train_x))
                for e in range(world.num_experts)]
        return knn_select(task.train, embs).chosen
    if method == "epn":
        return epn_select(predict_proba(epn_model, task.train_x)).chosen
    if method == "kl":
        q = estimate_task_distribution(task.label_probs)
        return kl_select(world.slice_priors, q).chosen
    raise DataFormatError(f"unknown selector {method!r}")


def render_report(summaries: dict[str, RegretSummary]) -> str:
    """One summary line per selector, then its per-task records."""
    lines = []
    for m, s in summaries.items():
        lines.append(f"method={m} mean_regret={s.mean_regret:.6f} "
                     f"agreement={s.agreement:.6f} "
                     f"ci_lo={s.regret_ci[0]:.6f} ci_hi={s.regret_ci[1]:.6f}")
        for r in s.records:
            lines.append(f"task {r.task_index} oracle_best={r.oracle_best} "
                         f"chosen={r.chosen} oracle_acc={r.oracle_acc:.6f} "
                         f"selector_acc={r.selector_acc:.6f} regret={r.regret:.6f}")
    return "\n".join(lines) + "\n"


@dataclass
class CostModelInput:
    params: int
    batch: int
    steps_upstream: int
    steps_adapter: int
    steps_finetune: int
    num_experts: int
    task_examples: int

    def __post_init__(self):
        for name in ("params", "batch", "num_experts", "task_examples"):
            if getattr(self, name) < 1:
                raise DataFormatError(f"{name} must be a positive integer")
        for name in ("steps_upstream", "steps_adapter", "steps_finetune"):
            if getattr(self, name) < 0:
                raise DataFormatError(f"{name} must be non-negative")


@dataclass
class CostTable:
    dat_upstream: int
    dat_preparation: int
    dat_finetune: int
    ours_upstream: int
    ours_preparation: int
    ours_finetune: int
    preparation_ratio: float

    def to_text(self) -> str:
        r = self.preparation_ratio
        ratio_txt = f"{r:.6g}"
        return (f"dat upstream {self.dat_upstream}\n"
                f"dat preparation {self.dat_preparation}\n"
                f"dat finetune {self.dat_finetune}\n"
                f"ours upstream {self.ours_upstream}\n"
                f"ours preparation {self.ours_preparation}\n"
                f"ours finetune {self.ours_finetune}\n"
                f"ratio {ratio_txt}\n")


def asymptotic_costs(inp: CostModelInput) -> CostTable:
    """Dominant cost of each pipeline phase for both strategies, exact ints.

    The headline ratio compares the example counts that dominate the two
    preparation cells, S_A*B against N_T*E, leaving the parameter count
    aside; it is what the three-orders-of-magnitude claim is about.
    """
    p, b = inp.params, inp.batch
    su, sa, sf = inp.steps_upstream, inp.steps_adapter, inp.steps_finetune
    e, nt = inp.num_experts, inp.task_examples
    ratio = (sa * b) / (nt * e)
    return CostTable(
        dat_upstream=su * b * p,
        dat_preparation=(nt + sa * b) * p,
        dat_finetune=sf * b * p,
        ours_upstream=(su + sa * e) * b * p,
        ours_preparation=(nt * p + nt * nt) * e,
        ours_finetune=sf * b * p,
        preparation_ratio=ratio)
