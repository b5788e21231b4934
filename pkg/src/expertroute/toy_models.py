"""Desk-scale model kernel: linear extractors, a softmax-regression trainer,
group normalization, bottleneck adapters, and parameter accounting for the
full-size backbone they are meant for.

Matrix products go through np.einsum with a fixed reduction order, so results
are identical regardless of thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset_io import CATEGORICAL, DataFormatError, ProbMatrix

ADAPTER_CHANNELS = (64, 256, 512, 1024)


class NumericError(RuntimeError):
    """A computation produced non-finite values."""


@dataclass
class LinearExtractor:
    """Stand-in for one expert's embedding head: y = Wx + b, optional ReLU."""

    expert_id: int
    weight: np.ndarray
    bias: np.ndarray
    nonlinearity: str = "none"

    def __post_init__(self):
        self.weight = np.ascontiguousarray(self.weight, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2:
            raise DataFormatError("extractor weight must be d_out x d_in")
        if self.bias.shape != (self.weight.shape[0],):
            raise DataFormatError("extractor bias must match output width")
        if self.nonlinearity not in ("none", "relu"):
            raise DataFormatError(f"unknown nonlinearity {self.nonlinearity!r}")


def extract(e: LinearExtractor, x) -> np.ndarray:
    """Apply an extractor to one vector (d_in,) or a batch (N, d_in)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim not in (1, 2):
        raise DataFormatError("input must be a vector or a batch of vectors")
    if x.shape[-1] != e.weight.shape[1]:
        raise DataFormatError(
            f"input width {x.shape[-1]} does not match extractor width {e.weight.shape[1]}")
    if x.ndim == 1:
        z = np.einsum("od,d->o", e.weight, x) + e.bias
    else:
        z = np.einsum("nd,od->no", x, e.weight) + e.bias
    if e.nonlinearity == "relu":
        z = np.maximum(z, 0.0)
    return z


@dataclass
class LogisticModel:
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.ascontiguousarray(self.weight, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DataFormatError("weight must be C x d with a length-C bias")


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def predict_logits(m: LogisticModel, x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    return np.einsum("nd,cd->nc", x, m.weight) + m.bias


def predict_proba(m: LogisticModel, x) -> ProbMatrix:
    """Row-wise softmax over the model's classes."""
    return ProbMatrix(data=_softmax(predict_logits(m, x)), kind=CATEGORICAL)


def cross_entropy(m: LogisticModel, x, y) -> float:
    """Mean negative log-likelihood of the true classes."""
    y = np.asarray(y, dtype=np.int64)
    probs = _softmax(predict_logits(m, x))
    return float(-np.mean(np.log(probs[np.arange(len(y)), y])))


def logistic_gradient(m: LogisticModel, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of mean softmax cross-entropy in (weight, bias)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    probs = _softmax(predict_logits(m, x))
    g = probs / n
    g[np.arange(n), y] -= 1.0 / n
    return np.einsum("nc,nd->cd", g, x), g.sum(axis=0)


def train_logistic(x, y, lr: float = 0.5, steps: int = 200, seed: int = 0) -> LogisticModel:
    """Full-batch gradient descent on softmax cross-entropy from zero weights.

    Deterministic: zero init plus full batches leave nothing for the seed to
    decide; the argument stays for interface stability. A non-finite loss
    aborts with the step index in the message.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != len(y) or len(y) < 1:
        raise DataFormatError("need one label per input row")
    if y.min() < 0:
        raise DataFormatError("negative class label")
    n, d = x.shape
    c = max(2, int(y.max()) + 1)
    model = LogisticModel(weight=np.zeros((c, d)), bias=np.zeros(c))
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for step in range(steps):
            probs = _softmax(predict_logits(model, x))
            loss = -np.mean(np.log(np.maximum(probs[np.arange(n), y], 1e-300)))
            if not np.isfinite(loss) or not np.isfinite(probs).all():
                raise NumericError(f"training loss diverged at step {step}")
            gw, gb = logistic_gradient(model, x, y)
            model = LogisticModel(weight=model.weight - lr * gw,
                                  bias=model.bias - lr * gb)
    return model


@dataclass
class TrainerConfig:
    lr: float = 0.5
    steps: int = 200
    seed: int = 0


def oracle_downstream_accuracy(task, e: LinearExtractor, cfg: TrainerConfig) -> float:
    """Embed, fit the logistic head on the train split, score the test split.

    The task must expose train_x/test_x raw inputs and train/test label sets;
    the number from this sweep defines which expert really was best.
    """
    z_train = extract(e, task.train_x)
    model = train_logistic(z_train, task.train.class_labels,
                           lr=cfg.lr, steps=cfg.steps, seed=cfg.seed)
    z_test = extract(e, task.test_x)
    pred = np.argmax(predict_logits(model, z_test), axis=1)
    return float(np.mean(pred == task.test.class_labels.astype(np.int64)))


@dataclass
class FeatureMap:
    """One spatial feature map, stored channels x sites."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise DataFormatError("feature map must be channels x sites")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def sites(self) -> int:
        return self.data.shape[1]


def group_norm(x: FeatureMap, num_groups: int, gamma, beta, eps: float = 1e-5) -> FeatureMap:
    """Normalize per channel group over channels x sites, then scale and shift."""
    c, s = x.channels, x.sites
    if num_groups < 1 or c % num_groups != 0:
        raise DataFormatError(f"{c} channels not divisible into {num_groups} groups")
    gamma = np.ascontiguousarray(gamma, dtype=np.float64)
    beta = np.ascontiguousarray(beta, dtype=np.float64)
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DataFormatError("gamma and beta must have one entry per channel")
    grouped = x.data.reshape(num_groups, (c // num_groups) * s)
    mean = grouped.mean(axis=1, keepdims=True)
    var = ((grouped - mean) ** 2).mean(axis=1, keepdims=True)
    normed = ((grouped - mean) / np.sqrt(var + eps)).reshape(c, s)
    return FeatureMap(normed * gamma[:, None] + beta[:, None])


def default_groups(c: int, k: int) -> int:
    """32 when both widths allow it, else the largest shared divisor up to 32."""
    g = math.gcd(c, k)
    for cand in range(min(32, g), 0, -1):
        if g % cand == 0:
            return cand
    return 1


@dataclass
class AdapterParams:
    """Bottleneck adapter: norm, ReLU, 1x1 down to k, norm, ReLU, 1x1 back to c."""

    norm1_gamma: np.ndarray
    norm1_beta: np.ndarray
    conv1_weight: np.ndarray
    conv1_bias: np.ndarray
    norm2_gamma: np.ndarray
    norm2_beta: np.ndarray
    conv2_weight: np.ndarray
    conv2_bias: np.ndarray
    groups: int

    def __post_init__(self):
        for name in ("norm1_gamma", "norm1_beta", "conv1_weight", "conv1_bias",
                     "norm2_gamma", "norm2_beta", "conv2_weight", "conv2_bias"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        k, c = self.conv1_weight.shape
        if k < 1 or c < 1:
            raise DataFormatError("conv1 weight must be k x c with k, c >= 1")
        if self.conv2_weight.shape != (c, k):
            raise DataFormatError("conv2 weight must be c x k")
        if self.norm1_gamma.shape != (c,) or self.norm1_beta.shape != (c,):
            raise DataFormatError("norm1 parameters must have length c")
        if self.conv1_bias.shape != (k,):
            raise DataFormatError("conv1 bias must have length k")
        if self.norm2_gamma.shape != (k,) or self.norm2_beta.shape != (k,):
            raise DataFormatError("norm2 parameters must have length k")
        if self.conv2_bias.shape != (c,):
            raise DataFormatError("conv2 bias must have length c")
        if self.groups < 1 or c % self.groups != 0 or k % self.groups != 0:
            raise DataFormatError(
                f"group count {self.groups} must divide both widths {c} and {k}")

    @property
    def channels(self) -> int:
        return self.conv1_weight.shape[1]

    @property
    def bottleneck(self) -> int:
        return self.conv1_weight.shape[0]

    @classmethod
    def zero_init(cls, channels: int, bottleneck: int | None = None,
                  groups: int | None = None) -> "AdapterParams":
        """Identity-start adapter: unit norms, zero convolutions."""
        if bottleneck is None:
            bottleneck = channels // 2
        if bottleneck < 1:
            raise DataFormatError("bottleneck width must be at least 1")
        if groups is None:
            groups = default_groups(channels, bottleneck)
        return cls(
            norm1_gamma=np.ones(channels), norm1_beta=np.zeros(channels),
            conv1_weight=np.zeros((bottleneck, channels)), conv1_bias=np.zeros(bottleneck),
            norm2_gamma=np.ones(bottleneck), norm2_beta=np.zeros(bottleneck),
            conv2_weight=np.zeros((channels, bottleneck)), conv2_bias=np.zeros(channels),
            groups=groups)

    def param_count(self) -> int:
        c, k = self.channels, self.bottleneck
        return 2 * c + (c * k + k) + 2 * k + (k * c + c)


def adapter_forward(x: FeatureMap, a: AdapterParams) -> FeatureMap:
    """x plus the bottleneck residual; exact identity at zero conv weights."""
    if x.channels != a.channels:
        raise DataFormatError(
            f"feature map has {x.channels} channels, adapter expects {a.channels}")
    h = group_norm(x, a.groups, a.norm1_gamma, a.norm1_beta)
    h = np.maximum(h.data, 0.0)
    z = np.einsum("kc,cs->ks", a.conv1_weight, h) + a.conv1_bias[:, None]
    h2 = group_norm(FeatureMap(z), a.groups, a.norm2_gamma, a.norm2_beta)
    h2 = np.maximum(h2.data, 0.0)
    r = np.einsum("ck,ks->cs", a.conv2_weight, h2) + a.conv2_bias[:, None]
    return FeatureMap(x.data + r)


def adapted_block_forward(x: FeatureMap, block_fn, a: AdapterParams) -> FeatureMap:
    """Insert the adapter before a frozen block: block_fn(x + residual(x))."""
    return block_fn(adapter_forward(x, a))


def resnet50v2_backbone_params() -> int:
    """Parameter count of the frozen backbone from its shape table.

    Root 7x7 conv into 64 channels, four stages of pre-activation bottleneck
    units (3, 4, 6, 3) at widths 64/128/256/512 expanding 4x, projection
    shortcut on each first unit, scale-and-shift on every norm, one final
    norm. Pooling and the classification head are excluded.
    """
    widths = (64, 128, 256, 512)
    units = (3, 4, 6, 3)
    total = 7 * 7 * 3 * 64
    in_ch = 64
    for w, n in zip(widths, units):
        out_ch = 4 * w
        for u in range(n):
            total += 2 * in_ch          # pre-activation norm
            total += in_ch * w          # 1x1 reduce
            total += 2 * w + 9 * w * w  # norm + 3x3
            total += 2 * w + w * out_ch  # norm + 1x1 expand
            if u == 0:
                total += in_ch * out_ch  # projection shortcut
            in_ch = out_ch
    total += 2 * in_ch
    return total


def _bottleneck_of(rule) -> callable:
    if rule == "half":
        return lambda c: c // 2
    if isinstance(rule, str) and rule.startswith("fixed:"):
        k = int(rule.split(":", 1)[1])
        return lambda c: k
    if isinstance(rule, int):
        return lambda c: rule
    if callable(rule):
        return rule
    raise DataFormatError(f"unknown bottleneck rule {rule!r}")


@dataclass
class ParamReport:
    backbone_params: int
    per_adapter_params: int
    ratio: float

    def to_text(self) -> str:
        return (f"backbone {self.backbone_params}\n"
                f"adapter {self.per_adapter_params}\n"
                f"ratio {self.ratio:.4f}\n")


def count_params(bottleneck="half", adapter_channels=ADAPTER_CHANNELS) -> ParamReport:
    """Backbone size, one adapter's size over its insertion points, and their ratio."""
    rule = _bottleneck_of(bottleneck)
    per_adapter = 0
    for c in adapter_channels:
        if c < 1:
            raise DataFormatError("channel widths must be positive")
        k = rule(c)
        if k < 1:
            raise DataFormatError(f"bottleneck width for {c} channels must be positive")
        per_adapter += 2 * c + (c * k + k) + 2 * k + (k * c + c)
    backbone = resnet50v2_backbone_params()
    return ParamReport(backbone_params=backbone, per_adapter_params=per_adapter,
                       ratio=per_adapter / backbone)
