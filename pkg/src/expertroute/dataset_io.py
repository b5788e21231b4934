"""Binary file formats for embeddings, task label files, and probability matrices.

All files are little-endian with a fixed header:

    embeddings  magic 'XPRT', u32 version=1, u32 N, u32 d,
                then N example ids (u64), then N*d float32 row-major
    task        magic 'TASK', u32 version=1, u32 N_T, u32 C,
                then N_T records of (u64 example_id, u32 class_label)
    probs       magic 'PROB', u32 version=1, u32 N, u32 K, u8 kind,
                then N*K float32 row-major; kind 0 = categorical (rows sum
                to 1), kind 1 = multilabel (independent marginals)

Readers reject wrong magic or version, byte lengths that disagree with the
declared dimensions, and non-finite or out-of-range values, naming the first
offending row and column.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field

import numpy as np

CATEGORICAL = "categorical"
MULTILABEL = "multilabel"

_ROW_SUM_TOL = 1e-6


class DataFormatError(ValueError):
    pass


def _first_bad(data, ok_mask) -> tuple[int, int]:
    r, c = np.argwhere(~ok_mask)[0]
    return int(r), int(c)


@dataclass
class EmbeddingMatrix:
    """Per-expert embeddings of a set of examples, stored as float32."""

    expert_id: int
    example_ids: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        self.example_ids = np.ascontiguousarray(self.example_ids, dtype=np.uint64)
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise DataFormatError("embedding data must be a non-empty N x d matrix")
        if self.example_ids.shape != (self.data.shape[0],):
            raise DataFormatError("one example id per embedding row required")
        if len(np.unique(self.example_ids)) != len(self.example_ids):
            raise DataFormatError("example ids must be unique")
        finite = np.isfinite(self.data)
        if not finite.all():
            r, c = _first_bad(self.data, finite)
            raise DataFormatError(f"non-finite embedding value at row {r} col {c}")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass
class TaskDataset:
    """Labeled examples of one downstream task."""

    example_ids: np.ndarray
    class_labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.example_ids = np.ascontiguousarray(self.example_ids, dtype=np.uint64)
        self.class_labels = np.ascontiguousarray(self.class_labels, dtype=np.uint32)
        if self.num_classes < 1:
            raise DataFormatError("num_classes must be at least 1")
        if self.example_ids.ndim != 1 or len(self.example_ids) < 1:
            raise DataFormatError("task needs at least one example")
        if self.class_labels.shape != self.example_ids.shape:
            raise DataFormatError("one label per example id required")
        if len(np.unique(self.example_ids)) != len(self.example_ids):
            raise DataFormatError("example ids must be unique")
        bad = np.nonzero(self.class_labels >= self.num_classes)[0]
        if len(bad):
            i = int(bad[0])
            raise DataFormatError(
                f"label {int(self.class_labels[i])} at row {i} outside [0, {self.num_classes})")

    @property
    def n(self) -> int:
        return len(self.example_ids)


@dataclass
class ProbMatrix:
    """Row-per-example probability matrix, categorical or multilabel."""

    data: np.ndarray
    kind: str

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.kind not in (CATEGORICAL, MULTILABEL):
            raise DataFormatError(f"unknown prob kind {self.kind!r}")
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise DataFormatError("probability data must be a non-empty N x K matrix")
        finite = np.isfinite(self.data)
        if not finite.all():
            r, c = _first_bad(self.data, finite)
            raise DataFormatError(f"non-finite probability at row {r} col {c}")
        in_range = (self.data >= 0.0) & (self.data <= 1.0)
        if not in_range.all():
            r, c = _first_bad(self.data, in_range)
            raise DataFormatError(f"probability outside [0, 1] at row {r} col {c}")
        if self.kind == CATEGORICAL:
            sums = self.data.astype(np.float64).sum(axis=1)
            off = np.nonzero(np.abs(sums - 1.0) > _ROW_SUM_TOL)[0]
            if len(off):
                i = int(off[0])
                raise DataFormatError(f"categorical row {i} sums to {sums[i]!r}, not 1")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def k(self) -> int:
        return self.data.shape[1]


_EMB_HDR = struct.Struct("<4sIII")
_TASK_HDR = struct.Struct("<4sIII")
_PROB_HDR = struct.Struct("<4sIIIB")
_TASK_REC = np.dtype([("id", "<u8"), ("label", "<u4")])


def write_embeddings(path, emb: EmbeddingMatrix) -> None:
    with open(path, "wb") as f:
        f.write(_EMB_HDR.pack(b"XPRT", 1, emb.n, emb.dim))
        f.write(emb.example_ids.astype("<u8").tobytes())
        f.write(emb.data.astype("<f4").tobytes())


def read_embeddings(path, expert_id: int | None = None) -> EmbeddingMatrix:
    """Load an embedding file.

    The format carries no expert id; pass one explicitly or encode it as the
    trailing integer of the file stem (expert_7.xprt).
    """
    blob = _read_all(path)
    magic, version, n, d = _unpack_header(_EMB_HDR, blob, path, b"XPRT")
    if expert_id is None:
        expert_id = expert_id_from_name(path)
    body = blob[_EMB_HDR.size:]
    expect = n * 8 + n * d * 4
    if len(body) != expect:
        raise DataFormatError(
            f"{path}: declared {n} x {d} needs {expect} body bytes, found {len(body)}")
    ids = np.frombuffer(body, dtype="<u8", count=n)
    data = np.frombuffer(body, dtype="<f4", offset=n * 8).reshape(n, d)
    return EmbeddingMatrix(expert_id=expert_id, example_ids=ids.copy(), data=data.copy())


def write_task(path, task: TaskDataset) -> None:
    rec = np.empty(task.n, dtype=_TASK_REC)
    rec["id"] = task.example_ids
    rec["label"] = task.class_labels
    with open(path, "wb") as f:
        f.write(_TASK_HDR.pack(b"TASK", 1, task.n, task.num_classes))
        f.write(rec.tobytes())


def read_task(path) -> TaskDataset:
    blob = _read_all(path)
    magic, version, n, c = _unpack_header(_TASK_HDR, blob, path, b"TASK")
    body = blob[_TASK_HDR.size:]
    if len(body) != n * _TASK_REC.itemsize:
        raise DataFormatError(
            f"{path}: declared {n} records need {n * _TASK_REC.itemsize} body bytes, found {len(body)}")
    rec = np.frombuffer(body, dtype=_TASK_REC, count=n)
    try:
        return TaskDataset(example_ids=rec["id"].copy(),
                           class_labels=rec["label"].copy(), num_classes=c)
    except DataFormatError as e:
        raise DataFormatError(f"{path}: {e}") from None


def write_probs(path, pm: ProbMatrix) -> None:
    kind_byte = 0 if pm.kind == CATEGORICAL else 1
    with open(path, "wb") as f:
        f.write(_PROB_HDR.pack(b"PROB", 1, pm.n, pm.k, kind_byte))
        f.write(pm.data.astype("<f4").tobytes())


def read_probs(path) -> ProbMatrix:
    blob = _read_all(path)
    if len(blob) < _PROB_HDR.size:
        raise DataFormatError(f"{path}: truncated header")
    magic, version, n, k, kind_byte = _PROB_HDR.unpack_from(blob)
    if magic != b"PROB":
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != 1:
        raise DataFormatError(f"{path}: unsupported version {version}")
    if kind_byte not in (0, 1):
        raise DataFormatError(f"{path}: unknown kind byte {kind_byte}")
    body = blob[_PROB_HDR.size:]
    if len(body) != n * k * 4:
        raise DataFormatError(
            f"{path}: declared {n} x {k} needs {n * k * 4} body bytes, found {len(body)}")
    data = np.frombuffer(body, dtype="<f4", count=n * k).reshape(n, k)
    try:
        return ProbMatrix(data=data.copy(), kind=CATEGORICAL if kind_byte == 0 else MULTILABEL)
    except DataFormatError as e:
        raise DataFormatError(f"{path}: {e}") from None


def expert_id_from_name(path) -> int:
    """Trailing integer of the file stem: .../expert_7.xprt -> 7."""
    stem = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    m = re.search(r"(\d+)$", stem)
    if not m:
        raise DataFormatError(f"cannot infer expert id from file name {path!r}")
    return int(m.group(1))


def _read_all(path) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def _unpack_header(hdr: struct.Struct, blob: bytes, path, want_magic: bytes):
    if len(blob) < hdr.size:
        raise DataFormatError(f"{path}: truncated header")
    fields = hdr.unpack_from(blob)
    if fields[0] != want_magic:
        raise DataFormatError(f"{path}: bad magic {fields[0]!r}")
    if fields[1] != 1:
        raise DataFormatError(f"{path}: unsupported version {fields[1]}")
    return fields
