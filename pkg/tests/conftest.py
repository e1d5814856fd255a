"""Shared test helpers: set-partition enumeration and slow but
independent oracles."""

from fractions import Fraction

import numpy as np
from scipy import integrate
from scipy.special import gammaln


def set_partitions(n):
    """All set partitions of range(n), as lists of lists."""
    if n == 0:
        yield []
        return
    for part in set_partitions(n - 1):
        for i in range(len(part)):
            yield part[:i] + [part[i] + [n - 1]] + part[i + 1:]
        yield part + [[n - 1]]


def quad_log_marginal_1d(xs, a=1.0, b=1.0) -> float:
    """Independent 2-D quadrature oracle for the one-feature Normal-Gamma
    marginal: integrates the Gaussian likelihood against the prior
    N(mu | 0, 1/lam) Gamma(lam | a, b), in (mu, log lam) coordinates with
    lambda-dependent mu bounds so narrow posteriors are resolved."""
    xs = np.asarray(xs, dtype=float).ravel()
    lo0, hi0 = min(xs.min(), 0.0), max(xs.max(), 0.0)

    def integrand(mu, u):
        lam = np.exp(u)
        logd = a * np.log(b) - gammaln(a) + a * u - b * lam
        logd += 0.5 * (u - np.log(2 * np.pi)) - 0.5 * lam * mu * mu
        logd += np.sum(0.5 * (u - np.log(2 * np.pi))
                       - 0.5 * lam * (xs - mu) ** 2)
        return np.exp(logd)

    val, _ = integrate.dblquad(
        integrand, -20, 10,
        lambda u: lo0 - 12.0 / np.sqrt(np.exp(u)),
        lambda u: hi0 + 12.0 / np.sqrt(np.exp(u)),
        epsabs=1e-13, epsrel=1e-11)
    return float(np.log(val))


def polya_urn_log_marginal(bits, alpha=1) -> float:
    """Exact sequential Beta-Bernoulli marginal of one binary feature,
    computed in rational arithmetic."""
    alpha = Fraction(alpha)
    prob = Fraction(1)
    ones = 0
    for i, x in enumerate(bits):
        p_one = (alpha + ones) / (2 * alpha + i)
        prob *= p_one if x else (1 - p_one)
        ones += int(x)
    return float(np.log(float(prob)))


def brute_force_assignment(cost):
    """Minimum-cost row->column assignment by enumeration (rows <= cols)."""
    import itertools

    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    best, best_cols = np.inf, None
    for cols in itertools.permutations(range(m), n):
        total = cost[np.arange(n), cols].sum()
        if total < best:
            best, best_cols = total, cols
    return best, np.asarray(best_cols)
