"""Label hierarchy handling: loading, transitive closure, domain selection, slicing.

The hierarchy file is line oriented, UTF-8, one record per line:

    L <label_id> <name>          declares a label (name contains no whitespace)
    E <child_id> <parent_id>     declares an is-a edge
    C <label_id> <count>         records an image count for a label

An example corpus uses:

    X <example_id> <label_id>[,<label_id>...]

Multiple parents are allowed; cycles are not.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


class HierarchyError(ValueError):
    pass


@dataclass
class LabelHierarchy:
    names: dict[int, str] = field(default_factory=dict)
    parents: dict[int, set[int]] = field(default_factory=dict)
    counts: dict[int, int] = field(default_factory=dict)

    def labels(self) -> list[int]:
        return sorted(self.names)

    def count(self, label_id: int) -> int:
        return self.counts.get(label_id, 0)


@dataclass(frozen=True)
class MultiLabelExample:
    example_id: int
    labels: frozenset[int]


@dataclass
class ExpertSlice:
    expert_id: int
    root_label: int
    member_ids: set[int]


# RoutingTable: example_id -> sorted list of owning expert ids.
RoutingTable = dict[int, list[int]]


def load_hierarchy(path) -> LabelHierarchy:
    """Parse a hierarchy file and validate it (declared endpoints, acyclic)."""
    h = LabelHierarchy()
    edges = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            kind = parts[0]
            try:
                if kind == "L":
                    if len(parts) != 3:
                        raise HierarchyError("L record needs id and name")
                    lid = int(parts[1])
                    if lid in h.names:
                        raise HierarchyError(f"duplicate label id {lid}")
                    h.names[lid] = parts[2]
                    h.parents.setdefault(lid, set())
                elif kind == "E":
                    if len(parts) != 3:
                        raise HierarchyError("E record needs child and parent")
                    edges.append((int(parts[1]), int(parts[2])))
                elif kind == "C":
                    if len(parts) != 3:
                        raise HierarchyError("C record needs id and count")
                    lid, n = int(parts[1]), int(parts[2])
                    if n < 0:
                        raise HierarchyError(f"negative count for label {lid}")
                    h.counts[lid] = n
                else:
                    raise HierarchyError(f"unknown record type {kind!r}")
            except ValueError as e:
                raise HierarchyError(f"{path}:{lineno}: {e}") from None
    for child, parent in edges:
        if child not in h.names or parent not in h.names:
            raise HierarchyError(f"edge {child}->{parent} references an undeclared label")
        h.parents[child].add(parent)
    for lid in h.counts:
        if lid not in h.names:
            raise HierarchyError(f"count record for undeclared label {lid}")
    _check_acyclic(h)
    return h


def _check_acyclic(h: LabelHierarchy) -> None:
    # Kahn's algorithm on child->parent edges; leftovers mean a cycle.
    out_deg = {lid: len(ps) for lid, ps in h.parents.items()}
    children = {lid: set() for lid in h.names}
    for child, ps in h.parents.items():
        for p in ps:
            children[p].add(child)
    ready = [lid for lid, d in out_deg.items() if d == 0]
    seen = 0
    while ready:
        node = ready.pop()
        seen += 1
        for ch in children[node]:
            out_deg[ch] -= 1
            if out_deg[ch] == 0:
                ready.append(ch)
    if seen != len(h.names):
        stuck = sorted(lid for lid, d in out_deg.items() if d > 0)
        raise HierarchyError(f"hierarchy contains a cycle through labels {stuck}")


def load_examples(path, h: LabelHierarchy) -> list[MultiLabelExample]:
    """Parse an example corpus; every referenced label must exist."""
    out = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] != "X" or len(parts) != 3:
                raise HierarchyError(f"{path}:{lineno}: malformed example record")
            try:
                eid = int(parts[1])
                labels = frozenset(int(tok) for tok in parts[2].split(","))
            except ValueError:
                raise HierarchyError(f"{path}:{lineno}: non-integer id") from None
            if not labels:
                raise HierarchyError(f"{path}:{lineno}: example {eid} has no labels")
            if eid in seen:
                raise HierarchyError(f"{path}:{lineno}: duplicate example id {eid}")
            for lid in labels:
                if lid not in h.names:
                    raise HierarchyError(f"{path}:{lineno}: example {eid} references unknown label {lid}")
            seen.add(eid)
            out.append(MultiLabelExample(eid, labels))
    return out


def ancestors(h: LabelHierarchy, label_id: int) -> set[int]:
    """All labels reachable from label_id via parent edges (excluding itself)."""
    if label_id not in h.names:
        raise HierarchyError(f"unknown label {label_id}")
    out: set[int] = set()
    stack = list(h.parents[label_id])
    while stack:
        p = stack.pop()
        if p not in out:
            out.add(p)
            stack.extend(h.parents[p])
    return out


def close_labels(example: MultiLabelExample, h: LabelHierarchy) -> set[int]:
    """Example labels plus every ancestor of each label."""
    closed = set(example.labels)
    for lid in example.labels:
        closed |= ancestors(h, lid)
    return closed


def closed_counts(examples, h: LabelHierarchy) -> dict[int, int]:
    """Per-label example counts after closing each example's label set.

    By construction a parent's count is at least any child's count, so the
    monotonicity expected of hierarchy counts holds without a separate check.
    """
    counts = {lid: 0 for lid in h.names}
    for ex in examples:
        for lid in close_labels(ex, h):
            counts[lid] += 1
    return counts


def select_domains(h: LabelHierarchy, *, min_images: int | None = None,
                   top_n: int | None = None) -> list[int]:
    """Pick expert root domains by image count.

    Exactly one of min_images / top_n must be given. Threshold mode keeps
    labels with count strictly greater than min_images; top_n keeps the n
    largest, ties going to the lower label id. Result is sorted by
    descending count, then ascending id.
    """
    if (min_images is None) == (top_n is None):
        raise HierarchyError("specify exactly one of min_images or top_n")
    ranked = sorted(h.names, key=lambda lid: (-h.count(lid), lid))
    if min_images is not None:
        out = [lid for lid in ranked if h.count(lid) > min_images]
    else:
        if top_n < 0:
            raise HierarchyError("top_n must be non-negative")
        out = ranked[:top_n]
    if not out:
        warnings.warn("domain selection produced no domains")
    return out


def build_slices(examples, domains, h: LabelHierarchy):
    """Assign every example to each domain present in its closed label set.

    Returns (slices, routing). Expert ids index the given domain list; a
    domain matching no example yields no slice (a warning is emitted).
    Slices may overlap.
    """
    for d in domains:
        if d not in h.names:
            raise HierarchyError(f"domain {d} is not in the hierarchy")
    members: list[set[int]] = [set() for _ in domains]
    routing: RoutingTable = {}
    dom_pos = {d: i for i, d in enumerate(domains)}
    closure_memo: dict[frozenset, set] = {}
    for ex in examples:
        closed = closure_memo.get(ex.labels)
        if closed is None:
            closed = close_labels(ex, h)
            closure_memo[ex.labels] = closed
        owners = sorted(dom_pos[d] for d in closed if d in dom_pos)
        if owners:
            routing[ex.example_id] = owners
            for e in owners:
                members[e].add(ex.example_id)
    slices = []
    for e, d in enumerate(domains):
        if members[e]:
            slices.append(ExpertSlice(expert_id=e, root_label=d, member_ids=members[e]))
        else:
            warnings.warn(f"domain {d} matched no examples; slice {e} dropped")
    return slices, routing


def balanced_resample(slices, total: int, seed: int) -> list[tuple[int, int]]:
    """Draw (example_id, expert_id) pairs so each expert is seen equally often.

    Sampling within a slice is uniform with replacement. Per-expert counts
    differ by at most one; which experts absorb the remainder is itself a
    seeded draw so no expert is systematically favored.
    """
    if not slices:
        raise HierarchyError("cannot resample from an empty slice list")
    if total < len(slices):
        raise HierarchyError("total must be at least the number of slices")
    rng = np.random.default_rng(seed)
    base, rem = divmod(total, len(slices))
    quota = [base] * len(slices)
    for pos in rng.choice(len(slices), size=rem, replace=False):
        quota[pos] += 1
    pairs = []
    for sl, n in zip(slices, quota):
        pool = sorted(sl.member_ids)
        picks = rng.choice(len(pool), size=n, replace=True)
        pairs.extend((pool[i], sl.expert_id) for i in picks)
    return pairs
