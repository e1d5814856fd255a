"""Clustering utility and fairness evaluation, chain diagnostics, and the
held-out negative log-likelihood procedure.

The fairness measures themselves live in :mod:`fairmix.core` and are
re-exported here so there is a single implementation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .core import Assignment, GroupedDataset, balance, delta_fairness
from .priors import BetaBernoulliFamily

__all__ = [
    "cost",
    "categorical_cost",
    "autocorrelation",
    "linear_assignment",
    "test_nll",
    "ChainSummary",
    "summarize_chain",
    "posterior_mode_k",
    "balance",
    "delta_fairness",
]

# beyond this many rows the exact assignment solver gives way to a greedy
# approximation
EXACT_ASSIGNMENT_LIMIT = 512


def cost(dataset: GroupedDataset, assignment: Assignment) -> float:
    """Pooled within-cluster mean squared distance to empirical centers.

    All groups are stacked; centers are the empirical means of each
    cluster's members, and the result is normalized by the total number of
    instances.
    """
    x = dataset.pooled()
    labels = np.concatenate([np.asarray(lab) for lab in assignment.labels]) - 1
    if len(labels) != x.shape[0]:
        raise ValueError("assignment does not cover the dataset")
    k = assignment.n_clusters
    centers = np.zeros((k, x.shape[1]))
    counts = np.zeros(k)
    np.add.at(centers, labels, x)
    np.add.at(counts, labels, 1.0)
    centers /= counts[:, None]
    return float(((x - centers[labels]) ** 2).sum() / x.shape[0])


def categorical_cost(dataset: GroupedDataset, assignment: Assignment,
                     family: BetaBernoulliFamily) -> float:
    """Total negative log-likelihood of binary data under each cluster's
    posterior-mean Bernoulli parameters."""
    if dataset.feature_kind != "binary":
        raise ValueError("categorical cost requires binary data")
    x = dataset.pooled()
    labels = np.concatenate([np.asarray(lab) for lab in assignment.labels]) - 1
    if len(labels) != x.shape[0]:
        raise ValueError("assignment does not cover the dataset")
    al = family.alpha
    total = 0.0
    for k in range(assignment.n_clusters):
        members = x[labels == k]
        n = members.shape[0]
        ones = members.sum(0)
        p = (al + ones) / (2 * al + n)
        total -= float((xlogy(ones, p) + xlogy(n - ones, 1.0 - p)).sum())
    return total


def autocorrelation(series, h_max: int) -> np.ndarray:
    """Sample autocorrelation rho(0..h_max) with overall-mean centering.

    The lag-h covariance is averaged over its n-h terms, the variance over
    all n, so a strictly alternating series scores exactly -1 at lag 1.
    A constant series returns (1, 0, ..., 0) rather than NaN.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n <= h_max + 1:
        raise ValueError(f"series of length {n} too short for h_max={h_max}")
    xc = x - x.mean()
    var = float((xc * xc).mean())
    out = np.zeros(h_max + 1)
    out[0] = 1.0
    if var == 0.0:
        return out
    for h in range(1, h_max + 1):
        out[h] = float((xc[:n - h] * xc[h:]).mean()) / var
    return out


# ---------------------------------------------------------------------------
# minimum-cost assignment


def linear_assignment(cost_matrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimum-cost assignment of rows to distinct columns (rows <= cols).

    Returns (cols, u, v): ``cols[i]`` is the column matched to row i and
    (u, v) are dual potentials with u[i] + v[j] <= cost[i, j] everywhere
    and equality on matched edges, so optimality can be certified by
    complementary slackness. Shortest-augmenting-path construction, cubic
    time. Above ``EXACT_ASSIGNMENT_LIMIT`` rows a greedy approximation is
    used (with a warning) and the potentials are returned as zeros.
    """
    c = np.asarray(cost_matrix, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost matrix must be 2-dimensional")
    n, m = c.shape
    if n > m:
        raise ValueError(f"need rows <= cols, got {n} x {m}")
    if n > EXACT_ASSIGNMENT_LIMIT:
        warnings.warn(
            f"assignment with {n} rows exceeds the exact-solver limit "
            f"({EXACT_ASSIGNMENT_LIMIT}); falling back to a greedy "
            "approximation", RuntimeWarning, stacklevel=2)
        return _greedy_assignment(c)

    # one-based arrays with column 0 as the virtual start of each
    # augmenting path
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    row_of = np.zeros(m + 1, dtype=int)      # matched row of each column
    for i in range(1, n + 1):
        row_of[0] = i
        j0 = 0
        minv = np.full(m + 1, inf)
        way = np.zeros(m + 1, dtype=int)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of[j0]
            cur = c[i0 - 1, :] - u[i0] - v[1:]
            better = ~used[1:] & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            free = np.flatnonzero(~used[1:]) + 1
            j1 = int(free[np.argmin(minv[free])])
            delta = minv[j1]
            u[row_of[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if row_of[j0] == 0:
                break
        while j0 != 0:
            row_of[j0] = row_of[way[j0]]
            j0 = way[j0]
    cols = np.empty(n, dtype=int)
    for j in range(1, m + 1):
        if row_of[j] > 0:
            cols[row_of[j] - 1] = j - 1
    return cols, u[1:], v[1:]


def _greedy_assignment(c: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, m = c.shape
    order = np.argsort(c, axis=None)
    cols = np.full(n, -1, dtype=int)
    col_used = np.zeros(m, dtype=bool)
    assigned = 0
    for flat in order:
        i, j = divmod(int(flat), m)
        if cols[i] >= 0 or col_used[j]:
            continue
        cols[i] = j
        col_used[j] = True
        assigned += 1
        if assigned == n:
            break
    return cols, np.zeros(n), np.zeros(m)


# ---------------------------------------------------------------------------
# held-out negative log-likelihood


def _sq_cost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)


def test_nll(train_assignment: Assignment, train: GroupedDataset,
             test0, test1, family) -> float:
    """Conditional negative log-likelihood of held-out data.

    Both test groups must have the same size. Test labels are constructed
    by two minimum-cost matchings under squared Euclidean cost: group-1
    test instances onto group-0 test instances, and group-0 test instances
    injectively into the group-0 training instances, whose labels they
    inherit. The returned value is the joint posterior-predictive negative
    log-likelihood of the test points given the training contents of their
    clusters.
    """
    x0t = np.atleast_2d(np.asarray(test0, dtype=float))
    x1t = np.atleast_2d(np.asarray(test1, dtype=float))
    if x0t.shape[0] != x1t.shape[0]:
        raise ValueError("test groups must have equal sizes")
    n_test = x0t.shape[0]
    n0 = train.group_sizes[0]
    if n_test > n0:
        raise ValueError("more test instances than reference training "
                         "instances")
    z0_train = np.asarray(train_assignment.labels[0])

    t_star, _, _ = linear_assignment(_sq_cost(x0t, train.groups[0]))
    z0_test = z0_train[t_star]
    t_test, _, _ = linear_assignment(_sq_cost(x1t, x0t))
    z1_test = z0_test[t_test]

    d = train.n_features
    train_x = train.pooled()
    train_lab = np.concatenate(
        [np.asarray(lab) for lab in train_assignment.labels])
    total = 0.0
    for k in range(1, train_assignment.n_clusters + 1):
        members = train_x[train_lab == k]
        new_pts = np.concatenate([x0t[z0_test == k], x1t[z1_test == k]])
        if new_pts.shape[0] == 0:
            continue
        base = family.stats_of(members) if members.shape[0] else \
            family.empty_stats(d)
        merged = base.copy()
        for row in new_pts:
            merged.add_point(row)
        total += (family.log_marginal(merged) - family.log_marginal(base))
    return -total


# ---------------------------------------------------------------------------
# chain summaries


@dataclass(frozen=True)
class ChainSummary:
    """Posterior summaries of one chain: a histogram of the cluster count,
    the per-sample metric table, the autocorrelation of K, and the
    negative log-likelihood trace."""

    k_values: tuple[int, ...]
    k_counts: tuple[int, ...]
    rho: np.ndarray
    nll_trace: np.ndarray
    per_sample: tuple[tuple, ...]     # (iteration, K, cost, delta, bal, nll)

    @property
    def mode_k(self) -> int:
        best = max(self.k_counts)
        return min(v for v, c in zip(self.k_values, self.k_counts)
                   if c == best)


def posterior_mode_k(samples) -> int:
    """Most frequent cluster count; ties resolved toward the smaller K."""
    ks = [s.k for s in samples]
    if not ks:
        raise ValueError("no samples")
    values, counts = np.unique(ks, return_counts=True)
    return int(values[counts == counts.max()].min())


def summarize_chain(samples, nll_trace=None, h_max: int = 50) -> ChainSummary:
    """Summaries over recorded samples; ``h_max`` is clipped to the
    available sample count."""
    if not samples:
        raise ValueError("no samples to summarize")
    ks = np.array([s.k for s in samples])
    values, counts = np.unique(ks, return_counts=True)
    h = min(h_max, len(ks) - 2) if len(ks) > 2 else 0
    rho = autocorrelation(ks, h) if h >= 0 else np.array([1.0])
    trace = (np.asarray(nll_trace, dtype=float) if nll_trace is not None
             else np.array([s.nll for s in samples]))
    table = tuple((s.iteration, s.k, s.cost, s.delta, s.bal, s.nll)
                  for s in samples)
    return ChainSummary(
        k_values=tuple(int(v) for v in values),
        k_counts=tuple(int(c) for c in counts),
        rho=rho,
        nll_trace=trace,
        per_sample=table,
    )
