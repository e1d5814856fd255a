"""Prior densities and conjugate likelihood families.

Three ingredients of the posterior live here:

* the partition-prior coefficients ``V_n(t)`` induced by a geometric prior
  on the number of mixture components, with the rising-factorial cluster
  weights that make the prior a proper distribution over set partitions,
* closed-form log marginal likelihoods for the Normal-Gamma (continuous)
  and Beta-Bernoulli (binary) families, backed by per-cluster sufficient
  statistics that support O(1) add/remove updates,
* the energy prior on matching maps, which favours maps that pair
  geometrically close instances.

Everything is computed in log space; factorial ratios go through
``gammaln`` so group sizes in the thousands are safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

__all__ = [
    "PriorConfig",
    "VCoefficients",
    "compute_log_v",
    "log_partition_prior",
    "energy",
    "MatchDistances",
    "NormalGammaFamily",
    "BetaBernoulliFamily",
    "NormalGammaStats",
    "BetaBernoulliStats",
]

_LOG_2PI = float(np.log(2.0 * np.pi))

# truncation of the infinite series behind V_n(t): stop once the newest
# term sits this many nats below the running sum (and at least 10 terms
# past the first nonzero one, to survive slowly rising starts)
_V_TAIL_NATS = 28.0
_V_MIN_EXTRA = 10


@dataclass(frozen=True)
class PriorConfig:
    """All scalar prior parameters.

    gamma   symmetric Dirichlet concentration for the mixture weights
    kappa   geometric parameter of the prior on the component count
    tau     temperature of the matching-map energy prior
    a, b    Gamma(shape, rate) prior on each feature precision; the prior
            mean of each cluster mean is fixed at 0 with unit pseudo-count
    alpha   symmetric Beta parameter for binary features
    """

    gamma: float = 1.0
    kappa: float = 0.1
    tau: float = 1.0
    a: float = 1.0
    b: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must be in (0, 1)")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class VCoefficients:
    """Table of log V_n(t) for t = 1..t_max."""

    n0: int
    gamma: float
    kappa: float
    log_v: np.ndarray

    def __post_init__(self):
        self.log_v.setflags(write=False)

    @property
    def t_max(self) -> int:
        return len(self.log_v)

    def log(self, t: int) -> float:
        if not 1 <= t <= self.t_max:
            raise ValueError(f"t={t} outside 1..{self.t_max}")
        return float(self.log_v[t - 1])

    def log_ratio(self, t: int) -> float:
        """log V_n(t+1) - log V_n(t), the new-cluster prior factor."""
        return self.log(t + 1) - self.log(t)


def compute_log_v(n0: int, t_max: int, gamma: float, kappa: float) -> VCoefficients:
    """Partition-prior coefficients V_n(t) in log space.

    V_n(t) sums, over component counts k >= t, the falling factorial
    k!/(k-t)! divided by the rising factorial of gamma*k of length n,
    weighted by the geometric prior mass at k. Terms below k = t vanish.
    """
    if not 1 <= t_max <= n0:
        raise ValueError(f"t_max must be in 1..n0={n0}, got {t_max}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if not 0 < kappa < 1:
        raise ValueError("kappa must be in (0, 1)")
    log_kappa = np.log(kappa)
    log_1mk = np.log1p(-kappa)
    out = np.empty(t_max)
    for t in range(1, t_max + 1):
        span = max(64, _V_MIN_EXTRA + 1)
        while True:
            k = np.arange(t, t + span, dtype=float)
            terms = (gammaln(k + 1.0) - gammaln(k - t + 1.0)
                     - gammaln(gamma * k + n0) + gammaln(gamma * k)
                     + log_kappa + (k - 1.0) * log_1mk)
            total = logsumexp(terms)
            if terms[-1] < total - _V_TAIL_NATS:
                break
            span *= 2
        out[t - 1] = total
    return VCoefficients(n0=n0, gamma=gamma, kappa=kappa, log_v=out)


def log_partition_prior(partition, v: VCoefficients) -> float:
    """log p(C) = log V_n(t) + sum_c log of the rising factorial
    gamma^(|c|)."""
    if partition.n != v.n0:
        raise ValueError(
            f"partition of {partition.n} elements, coefficients for {v.n0}")
    g = v.gamma
    total = v.log(partition.n_clusters)
    for c in partition.clusters:
        total += gammaln(g + len(c)) - gammaln(g)
    return float(total)


# ---------------------------------------------------------------------------
# distances and the energy prior on matching maps


def pairwise_distances(x0: np.ndarray, x1: np.ndarray, kind: str) -> np.ndarray:
    """(n0, n1) matrix of Euclidean (continuous) or Hamming (binary)
    distances."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if kind == "binary":
        # |a-b| = a + b - 2ab entrywise for 0/1 data
        return (x0.sum(1)[:, None] + x1.sum(1)[None, :]
                - 2.0 * (x0 @ x1.T))
    sq = (np.sum(x0 * x0, axis=1)[:, None]
          + np.sum(x1 * x1, axis=1)[None, :]
          - 2.0 * (x0 @ x1.T))
    np.maximum(sq, 0.0, out=sq)
    return np.sqrt(sq)


def point_distance(a: np.ndarray, b: np.ndarray, kind: str) -> float:
    if kind == "binary":
        return float(np.abs(a - b).sum())
    return float(np.linalg.norm(a - b))


class MatchDistances:
    """Distance accessor between a reference group and a matched group.

    Precomputes the full matrix when it fits in ``max_cells`` entries,
    otherwise computes single distances on demand.
    """

    def __init__(self, x0, x1, kind: str, max_cells: int = 10**7):
        self.x0 = np.asarray(x0, dtype=float)
        self.x1 = np.asarray(x1, dtype=float)
        self.kind = kind
        n0, n1 = self.x0.shape[0], self.x1.shape[0]
        self.matrix = (pairwise_distances(self.x0, self.x1, kind)
                       if n0 * n1 <= max_cells else None)

    def __call__(self, i: int, j: int) -> float:
        if self.matrix is not None:
            return float(self.matrix[i, j])
        return point_distance(self.x0[i], self.x1[j], self.kind)

    def matched_total(self, T) -> float:
        """Sum of D(x0[T(j)], x1[j]) over all j."""
        T = np.asarray(T)
        if self.matrix is not None:
            return float(self.matrix[T, np.arange(len(T))].sum())
        return float(sum(point_distance(self.x0[T[j]], self.x1[j], self.kind)
                         for j in range(len(T))))


def energy(T, dist, n1: int, tau: float) -> float:
    """Log energy of a matching map: minus the average matched distance
    over the temperature.

    ``dist`` is either a callable (i, j) -> D(x0_i, x1_j) or a
    :class:`MatchDistances`.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    if isinstance(dist, MatchDistances):
        total = dist.matched_total(T)
    else:
        total = float(sum(dist(int(T[j]), j) for j in range(n1)))
    return -total / (n1 * tau)


# ---------------------------------------------------------------------------
# compensated accumulation (Neumaier variant); removal is an add of -x


def kahan_add(total: np.ndarray, comp: np.ndarray, x: np.ndarray) -> None:
    t = total + x
    big = np.abs(total) >= np.abs(x)
    comp += np.where(big, (total - t) + x, (x - t) + total)
    total[...] = t


# ---------------------------------------------------------------------------
# Normal-Gamma family (diagonal Gaussian likelihood)


def _ng_log_marginal(n, b_n_logsum, d: int, a: float, b: float):
    """Assembles the marginal from the count and sum over features of
    log b_n; shapes broadcast over any leading axes."""
    a_n = a + 0.5 * np.asarray(n, dtype=float)
    return (d * (gammaln(a_n) - gammaln(a) + a * np.log(b)
                 - 0.5 * np.log1p(n))
            - a_n * b_n_logsum
            - 0.5 * np.asarray(n, dtype=float) * d * _LOG_2PI)


def _ng_bn(n, s, ss, b: float):
    """Posterior rate b_n per feature; s and ss carry the feature axis
    last."""
    n = np.asarray(n, dtype=float)[..., None] if np.ndim(n) else float(n)
    return b + 0.5 * (ss - s * s / (1.0 + n))


class NormalGammaStats:
    """Per-cluster sufficient statistics for the Normal-Gamma family:
    count, compensated feature sums and sums of squares."""

    __slots__ = ("n", "s", "s_c", "ss", "ss_c")

    def __init__(self, d: int):
        self.n = 0
        self.s = np.zeros(d)
        self.s_c = np.zeros(d)
        self.ss = np.zeros(d)
        self.ss_c = np.zeros(d)

    @property
    def d(self) -> int:
        return len(self.s)

    def add_point(self, x) -> None:
        x = np.asarray(x, dtype=float)
        kahan_add(self.s, self.s_c, x)
        kahan_add(self.ss, self.ss_c, x * x)
        self.n += 1

    def remove_point(self, x) -> None:
        x = np.asarray(x, dtype=float)
        kahan_add(self.s, self.s_c, -x)
        kahan_add(self.ss, self.ss_c, -(x * x))
        self.n -= 1

    def sum(self) -> np.ndarray:
        return self.s + self.s_c

    def sum_sq(self) -> np.ndarray:
        return self.ss + self.ss_c

    def copy(self) -> "NormalGammaStats":
        out = NormalGammaStats(self.d)
        out.n = self.n
        out.s = self.s.copy()
        out.s_c = self.s_c.copy()
        out.ss = self.ss.copy()
        out.ss_c = self.ss_c.copy()
        return out


class BetaBernoulliStats:
    """Per-cluster sufficient statistics for binary features: count and
    per-feature number of ones. Integer arithmetic, hence exact."""

    __slots__ = ("n", "ones")

    def __init__(self, d: int):
        self.n = 0
        self.ones = np.zeros(d, dtype=np.int64)

    @property
    def d(self) -> int:
        return len(self.ones)

    def _bits(self, x) -> np.ndarray:
        x = np.asarray(x)
        if not np.isin(x, (0, 1)).all():
            raise ValueError("Beta-Bernoulli statistics require 0/1 data")
        return x.astype(np.int64)

    def add_point(self, x) -> None:
        self.ones += self._bits(x)
        self.n += 1

    def remove_point(self, x) -> None:
        self.ones -= self._bits(x)
        self.n -= 1

    def copy(self) -> "BetaBernoulliStats":
        out = BetaBernoulliStats(self.d)
        out.n = self.n
        out.ones = self.ones.copy()
        return out


class NormalGammaFamily:
    """Diagonal Gaussian likelihood with a Normal-Gamma conjugate prior.

    Per feature j: precision lambda_j ~ Gamma(a, b) and, given it, the
    cluster mean mu_j ~ N(0, 1/lambda_j). The cluster marginal integrates
    both out and depends on the data only through count/sum/sum-of-squares.
    """

    name = "normal-gamma"
    feature_kind = "continuous"

    def __init__(self, a: float = 1.0, b: float = 1.0):
        if not (a > 0 and b > 0):
            raise ValueError("a and b must be positive")
        self.a = float(a)
        self.b = float(b)

    def empty_stats(self, d: int) -> NormalGammaStats:
        return NormalGammaStats(d)

    def stats_of(self, points) -> NormalGammaStats:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        st = NormalGammaStats(pts.shape[1])
        for row in pts:
            st.add_point(row)
        return st

    def log_marginal(self, stats: NormalGammaStats) -> float:
        if stats.n == 0:
            return 0.0
        b_n = _ng_bn(stats.n, stats.sum(), stats.sum_sq(), self.b)
        return float(_ng_log_marginal(stats.n, np.log(b_n).sum(),
                                      stats.d, self.a, self.b))

    def log_predictive(self, x, stats: NormalGammaStats) -> float:
        """Log posterior-predictive density of one point given a cluster."""
        merged = stats.copy()
        merged.add_point(x)
        return self.log_marginal(merged) - self.log_marginal(stats)

    def new_arena(self, d: int, n_max: int, capacity: int = 8) -> "NormalGammaArena":
        return NormalGammaArena(self, d, n_max, capacity)

    # parameter-space interface for the auxiliary-variable sampler

    def sample_params(self, stats: NormalGammaStats | None, d: int, rng):
        """Draw (mu, lambda) per feature from the posterior given ``stats``
        (the prior when stats is None or empty)."""
        if stats is None or stats.n == 0:
            n, s, ss = 0, np.zeros(d), np.zeros(d)
        else:
            n, s, ss = stats.n, stats.sum(), stats.sum_sq()
        a_n = self.a + 0.5 * n
        b_n = self.b + 0.5 * (ss - s * s / (1.0 + n))
        kappa_n = 1.0 + n
        mu_n = s / kappa_n
        lam = rng.gamma(shape=a_n, scale=1.0 / b_n, size=d)
        mu = rng.normal(mu_n, 1.0 / np.sqrt(kappa_n * lam))
        return np.stack([mu, lam])

    def log_density_sum(self, phi, n, s, ss) -> float:
        """Sum of log N(x | mu, 1/lambda) over a point set given through
        its sufficient statistics."""
        mu, lam = phi[0], phi[1]
        quad = ss - 2.0 * mu * s + n * mu * mu
        return float(np.sum(0.5 * n * (np.log(lam) - _LOG_2PI)
                            - 0.5 * lam * quad))


class BetaBernoulliFamily:
    """Independent Bernoulli likelihood with a symmetric Beta prior per
    feature."""

    name = "beta-bernoulli"
    feature_kind = "binary"

    def __init__(self, alpha: float = 1.0):
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        self.alpha = float(alpha)

    def empty_stats(self, d: int) -> BetaBernoulliStats:
        return BetaBernoulliStats(d)

    def stats_of(self, points) -> BetaBernoulliStats:
        pts = np.atleast_2d(np.asarray(points))
        st = BetaBernoulliStats(pts.shape[1])
        for row in pts:
            st.add_point(row)
        return st

    def log_marginal(self, stats: BetaBernoulliStats) -> float:
        if stats.n == 0:
            return 0.0
        al = self.alpha
        per_dim = (gammaln(al + stats.ones) + gammaln(al + stats.n - stats.ones)
                   - gammaln(2 * al + stats.n)
                   + gammaln(2 * al) - 2 * gammaln(al))
        return float(per_dim.sum())

    def log_predictive(self, x, stats: BetaBernoulliStats) -> float:
        merged = stats.copy()
        merged.add_point(x)
        return self.log_marginal(merged) - self.log_marginal(stats)

    def posterior_mean(self, stats: BetaBernoulliStats) -> np.ndarray:
        return (self.alpha + stats.ones) / (2 * self.alpha + stats.n)

    def new_arena(self, d: int, n_max: int, capacity: int = 8) -> "BetaBernoulliArena":
        return BetaBernoulliArena(self, d, n_max, capacity)

    def sample_params(self, stats: BetaBernoulliStats | None, d: int, rng):
        if stats is None or stats.n == 0:
            n, ones = 0, np.zeros(d, dtype=np.int64)
        else:
            n, ones = stats.n, stats.ones
        return rng.beta(self.alpha + ones, self.alpha + n - ones)

    def log_density_sum(self, phi, n, ones) -> float:
        return float(np.sum(ones * np.log(phi)
                            + (n - ones) * np.log1p(-phi)))


# ---------------------------------------------------------------------------
# slot arenas: flat per-cluster statistics with vectorized marginals,
# the hot path of the partition sampler


class NormalGammaArena:
    """Cluster statistics in preallocated arrays, one slot per cluster.

    Blocks are (count, sum, sum-of-squares) triples; adding or removing a
    block touches one slot and refreshes that slot's cached log marginal.
    """

    def __init__(self, family: NormalGammaFamily, d: int, n_max: int,
                 capacity: int = 8):
        self.family = family
        self.d = d
        a, b = family.a, family.b
        ns = np.arange(n_max + 2, dtype=float)
        # count-only part of the marginal, one entry per possible count
        self._count_part = (d * (gammaln(a + 0.5 * ns) - gammaln(a)
                                 + a * np.log(b) - 0.5 * np.log1p(ns))
                            - 0.5 * ns * d * _LOG_2PI)
        self._a_n = a + 0.5 * ns
        self.capacity = capacity
        self.count = np.zeros(capacity, dtype=np.int64)
        self.s = np.zeros((capacity, d))
        self.s_c = np.zeros((capacity, d))
        self.ss = np.zeros((capacity, d))
        self.ss_c = np.zeros((capacity, d))
        self.logm = np.zeros(capacity)
        self.phi = np.zeros((capacity, 2, d))

    def grow(self) -> None:
        new = self.capacity * 2
        for name in ("count", "s", "s_c", "ss", "ss_c", "logm", "phi"):
            arr = getattr(self, name)
            tmp = np.zeros((new,) + arr.shape[1:], dtype=arr.dtype)
            tmp[:self.capacity] = arr
            setattr(self, name, tmp)
        self.capacity = new

    def clear_slot(self, c: int) -> None:
        self.count[c] = 0
        for name in ("s", "s_c", "ss", "ss_c"):
            getattr(self, name)[c] = 0.0
        self.logm[c] = 0.0

    def block_of(self, points) -> tuple:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts.shape[0], pts.sum(0), (pts * pts).sum(0))

    def add_block(self, c: int, blk) -> None:
        n, s, ss = blk
        kahan_add(self.s[c], self.s_c[c], s)
        kahan_add(self.ss[c], self.ss_c[c], ss)
        self.count[c] += n
        self._refresh(c)

    def sub_block(self, c: int, blk) -> None:
        n, s, ss = blk
        kahan_add(self.s[c], self.s_c[c], -s)
        kahan_add(self.ss[c], self.ss_c[c], -ss)
        self.count[c] -= n
        self._refresh(c)

    def _refresh(self, c: int) -> None:
        n = self.count[c]
        if n == 0:
            self.logm[c] = 0.0
            return
        s = self.s[c] + self.s_c[c]
        ss = self.ss[c] + self.ss_c[c]
        b_n = self.family.b + 0.5 * (ss - s * s / (1.0 + n))
        self.logm[c] = (self._count_part[n]
                        - self._a_n[n] * np.log(b_n).sum())

    def log_marginal_merged(self, slots: np.ndarray, blk) -> np.ndarray:
        """Log marginal of each listed slot with the block merged in."""
        n, s, ss = blk
        nm = self.count[slots] + n
        sm = (self.s[slots] + self.s_c[slots]) + s
        ssm = (self.ss[slots] + self.ss_c[slots]) + ss
        b_n = self.family.b + 0.5 * (ssm - sm * sm / (1.0 + nm[:, None]))
        return self._count_part[nm] - self._a_n[nm] * np.log(b_n).sum(1)

    def log_marginal_block(self, blk) -> float:
        n, s, ss = blk
        if n == 0:
            return 0.0
        b_n = self.family.b + 0.5 * (ss - s * s / (1.0 + n))
        return float(self._count_part[n] - self._a_n[n] * np.log(b_n).sum())

    def snapshot(self, c: int) -> tuple:
        return (int(self.count[c]), self.s[c].copy(), self.s_c[c].copy(),
                self.ss[c].copy(), self.ss_c[c].copy(), float(self.logm[c]))

    def restore(self, c: int, snap) -> None:
        self.count[c], s, s_c, ss, ss_c, lm = snap
        self.s[c] = s
        self.s_c[c] = s_c
        self.ss[c] = ss
        self.ss_c[c] = ss_c
        self.logm[c] = lm

    # parameter-space path

    def refresh_phi(self, c: int, rng) -> None:
        n = int(self.count[c])
        s = self.s[c] + self.s_c[c]
        ss = self.ss[c] + self.ss_c[c]
        a_n = self.family.a + 0.5 * n
        b_n = self.family.b + 0.5 * (ss - s * s / (1.0 + n))
        kappa_n = 1.0 + n
        lam = rng.gamma(shape=a_n, scale=1.0 / b_n, size=self.d)
        mu = rng.normal(s / kappa_n, 1.0 / np.sqrt(kappa_n * lam))
        self.phi[c, 0] = mu
        self.phi[c, 1] = lam

    def sample_phi_prior(self, m: int, rng) -> np.ndarray:
        lam = rng.gamma(shape=self.family.a, scale=1.0 / self.family.b,
                        size=(m, self.d))
        mu = rng.normal(0.0, 1.0 / np.sqrt(lam))
        return np.stack([mu, lam], axis=1)

    def log_density_slots(self, slots: np.ndarray, blk) -> np.ndarray:
        n, s, ss = blk
        mu = self.phi[slots, 0]
        lam = self.phi[slots, 1]
        quad = ss - 2.0 * mu * s + n * mu * mu
        return (0.5 * n * (np.log(lam) - _LOG_2PI)
                - 0.5 * lam * quad).sum(1)

    def log_density_phi(self, phi: np.ndarray, blk) -> np.ndarray:
        n, s, ss = blk
        mu, lam = phi[:, 0], phi[:, 1]
        quad = ss - 2.0 * mu * s + n * mu * mu
        return (0.5 * n * (np.log(lam) - _LOG_2PI)
                - 0.5 * lam * quad).sum(1)

    def log_density_self(self, slots: np.ndarray) -> np.ndarray:
        """Log density of each slot's own members at its current phi."""
        n = self.count[slots].astype(float)[:, None]
        s = self.s[slots] + self.s_c[slots]
        ss = self.ss[slots] + self.ss_c[slots]
        mu = self.phi[slots, 0]
        lam = self.phi[slots, 1]
        quad = ss - 2.0 * mu * s + n * mu * mu
        return (0.5 * n * (np.log(lam) - _LOG_2PI)
                - 0.5 * lam * quad).sum(1)


class BetaBernoulliArena:
    """Cluster statistics for binary features; integer counts, exact."""

    def __init__(self, family: BetaBernoulliFamily, d: int, n_max: int,
                 capacity: int = 8):
        self.family = family
        self.d = d
        al = family.alpha
        ks = np.arange(n_max + 2, dtype=float)
        self._lg_count = gammaln(al + ks)          # lgamma(alpha + k)
        self._lg_total = gammaln(2 * al + ks)      # lgamma(2 alpha + n)
        self._const = gammaln(2 * al) - 2 * gammaln(al)
        self.capacity = capacity
        self.count = np.zeros(capacity, dtype=np.int64)
        self.ones = np.zeros((capacity, d), dtype=np.int64)
        self.logm = np.zeros(capacity)
        self.phi = np.zeros((capacity, d))

    def grow(self) -> None:
        new = self.capacity * 2
        for name in ("count", "ones", "logm", "phi"):
            arr = getattr(self, name)
            tmp = np.zeros((new,) + arr.shape[1:], dtype=arr.dtype)
            tmp[:self.capacity] = arr
            setattr(self, name, tmp)
        self.capacity = new

    def clear_slot(self, c: int) -> None:
        self.count[c] = 0
        self.ones[c] = 0
        self.logm[c] = 0.0

    def block_of(self, points) -> tuple:
        pts = np.atleast_2d(np.asarray(points))
        if not np.isin(pts, (0, 1)).all():
            raise ValueError("Beta-Bernoulli blocks require 0/1 data")
        return (pts.shape[0], pts.sum(0).astype(np.int64))

    def add_block(self, c: int, blk) -> None:
        n, ones = blk
        self.count[c] += n
        self.ones[c] += ones
        self._refresh(c)

    def sub_block(self, c: int, blk) -> None:
        n, ones = blk
        self.count[c] -= n
        self.ones[c] -= ones
        self._refresh(c)

    def _refresh(self, c: int) -> None:
        n = self.count[c]
        if n == 0:
            self.logm[c] = 0.0
            return
        ones = self.ones[c]
        self.logm[c] = ((self._lg_count[ones] + self._lg_count[n - ones]).sum()
                        + self.d * (self._const - self._lg_total[n]))

    def log_marginal_merged(self, slots: np.ndarray, blk) -> np.ndarray:
        n, ones = blk
        nm = self.count[slots] + n
        om = self.ones[slots] + ones
        return ((self._lg_count[om]
                 + self._lg_count[nm[:, None] - om]).sum(1)
                + self.d * (self._const - self._lg_total[nm]))

    def log_marginal_block(self, blk) -> float:
        n, ones = blk
        if n == 0:
            return 0.0
        return float((self._lg_count[ones] + self._lg_count[n - ones]).sum()
                     + self.d * (self._const - self._lg_total[n]))

    def snapshot(self, c: int) -> tuple:
        return (int(self.count[c]), self.ones[c].copy(), float(self.logm[c]))

    def restore(self, c: int, snap) -> None:
        self.count[c], ones, lm = snap
        self.ones[c] = ones
        self.logm[c] = lm

    def refresh_phi(self, c: int, rng) -> None:
        al = self.family.alpha
        n, ones = int(self.count[c]), self.ones[c]
        self.phi[c] = rng.beta(al + ones, al + n - ones)

    def sample_phi_prior(self, m: int, rng) -> np.ndarray:
        al = self.family.alpha
        return rng.beta(al, al, size=(m, self.d))

    def log_density_slots(self, slots: np.ndarray, blk) -> np.ndarray:
        n, ones = blk
        p = self.phi[slots]
        return (ones * np.log(p) + (n - ones) * np.log1p(-p)).sum(1)

    def log_density_phi(self, phi: np.ndarray, blk) -> np.ndarray:
        n, ones = blk
        return (ones * np.log(phi) + (n - ones) * np.log1p(-phi)).sum(1)

    def log_density_self(self, slots: np.ndarray) -> np.ndarray:
        """Log density of each slot's own members at its current phi."""
        n = self.count[slots][:, None]
        ones = self.ones[slots]
        p = self.phi[slots]
        return (ones * np.log(p) + (n - ones) * np.log1p(-p)).sum(1)
