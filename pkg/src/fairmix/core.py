"""Domain types for grouped data, cluster assignments, matching maps and
group-fairness measures.

Conventions used throughout the package:

* instances are indexed 0-based internally; user-facing cluster labels are
  1-based consecutive integers,
* group 0 is always the smallest sensitive group (datasets are relabeled on
  construction, the permutation is kept so results can be mapped back),
* a matching map sends every index of a larger group onto the reference
  group 0 with near-uniform preimage sizes, which is what forces matched
  instances into the same cluster and drives the fairness level to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GroupedDataset",
    "Assignment",
    "MatchingState",
    "Partition",
    "MatchingViolation",
    "delta_fairness",
    "balance",
    "assignments_from",
    "validate_matching",
]


class DimensionError(ValueError):
    """Shapes of related arguments do not line up."""


def _as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionError("feature arrays must be 1- or 2-dimensional")
    return a


class GroupedDataset:
    """Feature matrices split by sensitive group.

    Parameters
    ----------
    groups : sequence of array-like
        One matrix of shape (n_b, d) per sensitive group value. All groups
        must share the same number of columns and be non-empty.
    feature_kind : str
        "continuous" or "binary". Binary data must contain only 0/1 values.

    After construction ``groups[0]`` is the smallest group; ``relabel_map[b]``
    gives the original position of internal group ``b``.
    """

    def __init__(self, groups, feature_kind: str = "continuous"):
        if feature_kind not in ("continuous", "binary"):
            raise ValueError(f"unknown feature_kind: {feature_kind!r}")
        mats = [_as_matrix(g) for g in groups]
        if len(mats) < 2:
            raise ValueError("need at least two sensitive groups")
        d = mats[0].shape[1]
        for b, m in enumerate(mats):
            if m.shape[1] != d:
                raise DimensionError(
                    f"group {b} has {m.shape[1]} features, expected {d}")
            if m.shape[0] < 1:
                raise ValueError(f"group {b} is empty")
        if feature_kind == "binary":
            for b, m in enumerate(mats):
                if not np.isin(m, (0.0, 1.0)).all():
                    raise ValueError(f"group {b} contains non-binary values")
        # stable sort by size so group 0 is (a) smallest group
        order = sorted(range(len(mats)), key=lambda b: mats[b].shape[0])
        self.groups = tuple(np.ascontiguousarray(mats[b]) for b in order)
        for g in self.groups:
            g.setflags(write=False)
        self.relabel_map = tuple(order)
        self.feature_kind = feature_kind

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def group_sizes(self) -> tuple[int, ...]:
        return tuple(g.shape[0] for g in self.groups)

    @property
    def n_features(self) -> int:
        return self.groups[0].shape[1]

    @property
    def n_total(self) -> int:
        return sum(self.group_sizes)

    def pooled(self) -> np.ndarray:
        """All instances stacked, internal group order."""
        return np.concatenate(self.groups, axis=0)

    def to_original_order(self, per_group):
        """Reorder a per-internal-group sequence back to the caller's group
        order."""
        out = [None] * self.n_groups
        for internal, orig in enumerate(self.relabel_map):
            out[orig] = per_group[internal]
        return out

    def __repr__(self):
        sizes = ", ".join(str(n) for n in self.group_sizes)
        return (f"GroupedDataset(sizes=({sizes}), d={self.n_features}, "
                f"kind={self.feature_kind})")


@dataclass(frozen=True)
class Assignment:
    """Per-group cluster labels.

    ``labels[b]`` holds 1-based cluster labels for group ``b``; every label
    in 1..n_clusters occurs in at least one group.
    """

    labels: tuple[tuple[int, ...], ...]
    n_clusters: int = field(default=0)

    def __post_init__(self):
        seen = set()
        for lab in self.labels:
            for v in lab:
                if v < 1:
                    raise ValueError("cluster labels must be positive")
                seen.add(v)
        k = max(seen) if seen else 0
        if seen != set(range(1, k + 1)):
            raise ValueError("cluster labels must be consecutive from 1")
        if self.n_clusters == 0:
            object.__setattr__(self, "n_clusters", k)
        elif self.n_clusters != k:
            raise ValueError(f"n_clusters={self.n_clusters} but labels use {k}")

    def group_cluster_counts(self) -> np.ndarray:
        """(n_groups, K) matrix of label counts per group."""
        out = np.zeros((len(self.labels), self.n_clusters), dtype=int)
        for b, lab in enumerate(self.labels):
            for v in lab:
                out[b, v - 1] += 1
        return out


@dataclass(frozen=True, eq=False)
class MatchingState:
    """Matching latent variables for all non-reference groups.

    For each group b in 1..B-1 (stored at list position b-1):

    * ``T[b-1]`` maps group-b indices onto group-0 indices with preimage
      sizes beta_b or beta_b+1,
    * ``T0[b-1]`` is an arbitrary map used for the masked indices,
    * ``E[b-1]`` is the masked subset of group-b indices (size m_b),
    * ``R[b-1]`` is the residual subset of group-0 indices receiving the
      oversized preimages (size r_b, empty when n_b is a multiple of n_0).
    """

    n0: int
    T: tuple[np.ndarray, ...]
    T0: tuple[np.ndarray, ...]
    E: tuple[frozenset, ...]
    R: tuple[frozenset, ...]

    def __post_init__(self):
        def freeze(arrays):
            out = []
            for a in arrays:
                a = np.array(a, dtype=np.intp)
                a.setflags(write=False)
                out.append(a)
            return tuple(out)

        object.__setattr__(self, "T", freeze(self.T))
        object.__setattr__(self, "T0", freeze(self.T0))
        object.__setattr__(self, "E", tuple(frozenset(int(j) for j in e)
                                            for e in self.E))
        object.__setattr__(self, "R", tuple(frozenset(int(i) for i in r)
                                            for r in self.R))
        if not (len(self.T) == len(self.T0) == len(self.E) == len(self.R)):
            raise DimensionError("T, T0, E, R must have one entry per "
                                 "matched group")

    def __eq__(self, other):
        if not isinstance(other, MatchingState):
            return NotImplemented
        return (self.n0 == other.n0
                and len(self.T) == len(other.T)
                and all(np.array_equal(a, b)
                        for a, b in zip(self.T, other.T))
                and all(np.array_equal(a, b)
                        for a, b in zip(self.T0, other.T0))
                and self.E == other.E
                and self.R == other.R)

    @property
    def n_matched_groups(self) -> int:
        return len(self.T)

    def beta(self, b: int) -> int:
        return len(self.T[b - 1]) // self.n0

    def r(self, b: int) -> int:
        return len(self.T[b - 1]) % self.n0

    def m(self, b: int) -> int:
        return len(self.E[b - 1])

    def routes(self, b: int) -> np.ndarray:
        """Effective group-0 target of every group-b index (T0 on the mask,
        T elsewhere)."""
        t = np.array(self.T[b - 1], copy=True)
        for j in self.E[b - 1]:
            t[j] = self.T0[b - 1][j]
        return t


@dataclass(frozen=True)
class Partition:
    """A partition of 0..n-1 into disjoint non-empty clusters."""

    clusters: tuple[tuple[int, ...], ...]

    @staticmethod
    def from_labels(labels) -> "Partition":
        groups: dict[int, list[int]] = {}
        for i, v in enumerate(labels):
            groups.setdefault(int(v), []).append(i)
        return Partition(tuple(tuple(g) for g in groups.values()))

    def __post_init__(self):
        seen: set[int] = set()
        for c in self.clusters:
            if len(c) == 0:
                raise ValueError("empty cluster")
            for i in c:
                if i in seen:
                    raise ValueError(f"index {i} appears in two clusters")
                seen.add(i)
        if seen != set(range(len(seen))):
            raise ValueError("clusters must cover 0..n-1 exactly")

    @property
    def n(self) -> int:
        return sum(len(c) for c in self.clusters)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def labels(self) -> np.ndarray:
        """0-based cluster index of every element, in element order."""
        out = np.empty(self.n, dtype=int)
        for k, c in enumerate(self.clusters):
            for i in c:
                out[i] = k
        return out

    def canonical_key(self) -> tuple:
        """Hashable form that ignores cluster order and within-cluster
        order; equal keys mean the same partition."""
        return tuple(sorted(tuple(sorted(c)) for c in self.clusters))


@dataclass(frozen=True)
class MatchingViolation:
    """First violated matching-map condition, for structured assertions."""

    group: int
    code: str
    detail: str

    def __str__(self):
        return f"group {self.group}: {self.code} ({self.detail})"


def _counts_matrix(dataset_sizes, assignment: Assignment) -> np.ndarray:
    sizes = tuple(int(n) for n in dataset_sizes)
    if len(sizes) != len(assignment.labels):
        raise DimensionError("group count mismatch between sizes and labels")
    for b, (n, lab) in enumerate(zip(sizes, assignment.labels)):
        if n != len(lab):
            raise DimensionError(
                f"group {b}: {len(lab)} labels for {n} instances")
    return assignment.group_cluster_counts()


def delta_fairness(dataset_sizes, assignment: Assignment) -> float:
    """Group-fairness level of an assignment, in [0, 1].

    Half the summed absolute differences between each non-reference group's
    cluster proportions and group 0's, averaged over the B-1 comparisons;
    0 means every cluster reproduces the dataset-wide group proportions.
    """
    counts = _counts_matrix(dataset_sizes, assignment)
    sizes = np.asarray(dataset_sizes, dtype=float)
    props = counts / sizes[:, None]
    b_groups = counts.shape[0]
    total = 0.0
    for b in range(1, b_groups):
        total += float(np.abs(props[0] - props[b]).sum())
    return total / (2.0 * (b_groups - 1))


def balance(dataset_sizes, assignment: Assignment) -> float:
    """Minimum over clusters of the worst pairwise group-count ratio.

    A cluster missing some group entirely contributes 0, so the result is 0
    unless every cluster contains every group.
    """
    counts = _counts_matrix(dataset_sizes, assignment)
    worst = 1.0
    for k in range(counts.shape[1]):
        col = counts[:, k]
        lo, hi = col.min(), col.max()
        worst = min(worst, 0.0 if lo == 0 else lo / hi)
    return worst


def assignments_from(partition: Partition, matching: MatchingState) -> Assignment:
    """Cluster labels induced by a group-0 partition and a matching state.

    Group-0 labels come straight from the partition; each group-b instance j
    inherits the label of its routed group-0 index (T0 on the mask set, T
    elsewhere). Labels are canonicalized by first appearance in group 0, so
    the result does not depend on the partition's internal cluster order.
    """
    if partition.n != matching.n0:
        raise DimensionError(
            f"partition covers {partition.n} elements, matching expects "
            f"{matching.n0}")
    raw = partition.labels()
    canon = np.full(partition.n_clusters, -1, dtype=int)
    nxt = 1
    z0 = np.empty(matching.n0, dtype=int)
    for i, c in enumerate(raw):
        if canon[c] < 0:
            canon[c] = nxt
            nxt += 1
        z0[i] = canon[c]
    labels = [tuple(int(v) for v in z0)]
    for b in range(1, matching.n_matched_groups + 1):
        routed = z0[matching.routes(b)]
        labels.append(tuple(int(v) for v in routed))
    return Assignment(labels=tuple(labels))


def validate_matching(matching: MatchingState, n0: int, n_b) -> MatchingViolation | None:
    """Check the structural conditions on a matching state.

    Returns None when the state is valid, otherwise a description of the
    first violated condition: onto-ness of each T_b, preimage sizes in
    {beta_b, beta_b+1}, the oversized-preimage set equal to R_b, the mask
    size, and index ranges of T0_b and E_b.
    """
    if matching.n0 != n0:
        return MatchingViolation(0, "n0-mismatch",
                                 f"state has n0={matching.n0}, expected {n0}")
    sizes = tuple(int(n) for n in n_b)
    if len(sizes) != matching.n_matched_groups:
        return MatchingViolation(0, "group-count",
                                 f"{matching.n_matched_groups} matched groups "
                                 f"for {len(sizes)} size entries")
    for b, nb in enumerate(sizes, start=1):
        t = np.asarray(matching.T[b - 1])
        t0 = np.asarray(matching.T0[b - 1])
        e = matching.E[b - 1]
        rset = matching.R[b - 1]
        beta, r = nb // n0, nb % n0
        if len(t) != nb:
            return MatchingViolation(b, "length",
                                     f"T has {len(t)} entries, expected {nb}")
        if len(t0) != nb:
            return MatchingViolation(b, "length",
                                     f"T0 has {len(t0)} entries, expected {nb}")
        if t.size and (t.min() < 0 or t.max() >= n0):
            return MatchingViolation(b, "range", "T target outside group 0")
        if t0.size and (t0.min() < 0 or t0.max() >= n0):
            return MatchingViolation(b, "range", "T0 target outside group 0")
        pre = np.bincount(t, minlength=n0)
        if (pre == 0).any():
            return MatchingViolation(b, "not-onto",
                                     f"{int((pre == 0).sum())} group-0 indices "
                                     "have empty preimage")
        bad = ~np.isin(pre, (beta, beta + 1))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            return MatchingViolation(b, "preimage-size",
                                     f"|T^-1({i})|={int(pre[i])}, expected "
                                     f"{beta} or {beta + 1}")
        oversized = frozenset(int(i) for i in np.flatnonzero(pre == beta + 1))
        if len(oversized) != r:
            return MatchingViolation(b, "residual-count",
                                     f"{len(oversized)} oversized preimages, "
                                     f"expected {r}")
        if oversized != rset:
            return MatchingViolation(b, "residual-set",
                                     "oversized preimages differ from R")
        if any(j < 0 or j >= nb for j in e):
            return MatchingViolation(b, "range", "mask index outside group")
    return None
