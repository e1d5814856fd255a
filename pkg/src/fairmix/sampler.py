"""MCMC engine for fairness-constrained mixture clustering.

Each outer iteration alternates two moves:

* STEP 1: a Metropolis-Hastings update of the matching latents
  (T, T0, E) for every matched group, repeated several times. Proposals
  swap two T entries, redraw one T0 entry and swap one masked index; the
  acceptance ratio multiplies the energy-prior ratio with a likelihood
  ratio that is evaluated incrementally, touching only the few matched
  instances whose routed cluster changes.
* STEP 2: one Gibbs sweep over the reference-group partition. Element i
  moves together with every matched instance routed to it (its block);
  reassignment weights follow the restaurant-style rule with the
  V_n(t+1)/V_n(t) factor for opening a new cluster. The collapsed sweep
  uses closed-form cluster marginals; the auxiliary-variable sweep keeps
  explicit cluster parameters for the non-conjugate case.

With fairness off the same machinery runs on the pooled data with
single-point blocks and no STEP 1, which is a plain mixture-of-finite-
mixtures sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (Assignment, GroupedDataset, MatchingState, balance,
                   delta_fairness)
from .priors import (BetaBernoulliFamily, MatchDistances, NormalGammaFamily,
                     PriorConfig, compute_log_v, pairwise_distances)

__all__ = [
    "SamplerConfig",
    "ChainSample",
    "ChainState",
    "FbcRun",
    "select_R",
    "init_state",
    "propose_T_swap",
    "propose_T0",
    "propose_E",
    "mh_step_matching",
    "gibbs_partition_conjugate",
    "gibbs_partition_nonconjugate",
    "run_fbc",
]


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs of one chain. Defaults follow the reference experimental
    protocol: 1200 iterations, 1000 burn-in, 10 matching updates per
    iteration."""

    max_iter: int = 1200
    burn_in: int = 1000
    mh_repeats: int = 10
    m: int | tuple[int, ...] = 0
    r_strategy: str = "random"          # "random" | "medoids"
    m_aux: int = 3
    seed: int | None = None
    family: str = "normal-gamma"        # "normal-gamma" | "beta-bernoulli"
    fairness: bool = True
    sampler_kind: str = "collapsed"     # "collapsed" | "aux"
    scan: str = "sequential"            # "sequential" | "random"
    debug_checks: bool = False
    distance_max_cells: int = 10**7

    def __post_init__(self):
        if not 0 <= self.burn_in < self.max_iter:
            raise ValueError("need 0 <= burn_in < max_iter")
        if self.mh_repeats < 1:
            raise ValueError("mh_repeats must be >= 1")
        if self.r_strategy not in ("random", "medoids"):
            raise ValueError(f"unknown r_strategy: {self.r_strategy!r}")
        if self.family not in ("normal-gamma", "beta-bernoulli"):
            raise ValueError(f"unknown family: {self.family!r}")
        if self.sampler_kind not in ("collapsed", "aux"):
            raise ValueError(f"unknown sampler_kind: {self.sampler_kind!r}")
        if self.scan not in ("sequential", "random"):
            raise ValueError(f"unknown scan: {self.scan!r}")
        if self.m_aux < 1:
            raise ValueError("m_aux must be >= 1")

    def mask_sizes(self, n_b: tuple[int, ...]) -> tuple[int, ...]:
        """Mask size per matched group, validated against group sizes."""
        if isinstance(self.m, int):
            ms = (self.m,) * len(n_b)
        else:
            ms = tuple(int(v) for v in self.m)
            if len(ms) != len(n_b):
                raise ValueError(
                    f"{len(ms)} mask sizes for {len(n_b)} matched groups")
        for mv, nb in zip(ms, n_b):
            if not 0 <= mv <= nb:
                raise ValueError(f"mask size {mv} outside 0..{nb}")
        return ms


@dataclass(frozen=True)
class ChainSample:
    """One recorded posterior draw with its derived summaries. ``labels``
    holds 1-based canonical cluster labels per (internal-order) group."""

    iteration: int
    k: int
    labels: tuple[tuple[int, ...], ...]
    delta: float
    bal: float
    cost: float
    nll: float
    matching: MatchingState | None = None

    def assignment(self) -> Assignment:
        return Assignment(labels=self.labels)


@dataclass(frozen=True)
class FbcRun:
    """Post-burn-in samples plus whole-chain diagnostics."""

    samples: tuple[ChainSample, ...]
    k_trace: np.ndarray
    nll_trace: np.ndarray
    accept_rate: float
    burn_in: int


def select_R(group0: np.ndarray, r: int, strategy: str, rng,
             feature_kind: str = "continuous") -> np.ndarray:
    """Residual subset of the reference group, size r.

    "random" draws uniformly without replacement; "medoids" runs a
    PAM-style swap heuristic with r medoids (squared Euclidean for
    continuous data, Hamming for binary) and returns the medoid indices.
    """
    x = np.atleast_2d(np.asarray(group0, dtype=float))
    n0 = x.shape[0]
    if not 0 <= r < n0:
        raise ValueError(f"need 0 <= r < n0={n0}, got r={r}")
    if r == 0:
        return np.empty(0, dtype=np.intp)
    if strategy == "random":
        return np.sort(rng.choice(n0, size=r, replace=False)).astype(np.intp)
    if strategy != "medoids":
        raise ValueError(f"unknown R strategy: {strategy!r}")
    return _k_medoids(x, r, rng, feature_kind)


def _k_medoids(x: np.ndarray, r: int, rng, feature_kind: str,
               max_rounds: int = 50) -> np.ndarray:
    if feature_kind == "binary":
        d = pairwise_distances(x, x, "binary")
    else:
        d = pairwise_distances(x, x, "continuous")
        d *= d
    n = x.shape[0]
    med = np.sort(rng.choice(n, size=r, replace=False))
    for _ in range(max_rounds):
        dm = d[:, med]                       # (n, r)
        nearest = np.argmin(dm, axis=1)
        d1 = dm[np.arange(n), nearest]
        if r > 1:
            dm2 = dm.copy()
            dm2[np.arange(n), nearest] = np.inf
            d2 = dm2.min(axis=1)
        else:
            d2 = np.full(n, np.inf)
        current = d1.sum()
        in_med = np.zeros(n, dtype=bool)
        in_med[med] = True
        best_gain, best_swap = 1e-12, None
        for mi in range(r):
            base = np.where(nearest == mi, d2, d1)             # (n,)
            totals = np.minimum(base[None, :], d).sum(axis=1)  # rows: new medoid j
            totals[in_med] = np.inf
            j = int(np.argmin(totals))
            gain = current - totals[j]
            if gain > best_gain:
                best_gain, best_swap = gain, (mi, j)
        if best_swap is None:
            break
        med[best_swap[0]] = best_swap[1]
    return np.sort(med).astype(np.intp)


def propose_T_swap(T: np.ndarray, rng) -> np.ndarray:
    """Swap the targets of two random positions; the preimage multiset is
    unchanged, so validity of T is preserved. Identity when len(T) < 2."""
    T2 = np.array(T, copy=True)
    n1 = len(T2)
    if n1 >= 2:
        j1, j2 = rng.choice(n1, size=2, replace=False)
        T2[j1], T2[j2] = T2[j2], T2[j1]
    return T2


def propose_T0(T0: np.ndarray, n0: int, rng) -> np.ndarray:
    """Redraw one position uniformly over the reference group."""
    T2 = np.array(T0, copy=True)
    if len(T2):
        j = int(rng.integers(len(T2)))
        T2[j] = int(rng.integers(n0))
    return T2


def propose_E(E: frozenset, n1: int, rng) -> frozenset:
    """Swap one masked index with one unmasked index; identity unless
    0 < |E| < n1."""
    m = len(E)
    if m == 0 or m == n1:
        return frozenset(E)
    inside = sorted(E)
    j_out = inside[int(rng.integers(m))]
    j_in = _draw_outside(E, n1, rng)
    return frozenset((set(E) - {j_out}) | {j_in})


def _draw_outside(E, n1: int, rng) -> int:
    """Uniform index outside E (requires |E| < n1)."""
    if 2 * len(E) < n1:
        while True:
            j = int(rng.integers(n1))
            if j not in E:
                return j
    outside = np.setdiff1d(np.arange(n1, dtype=np.intp),
                           np.fromiter(sorted(E), dtype=np.intp, count=len(E)),
                           assume_unique=True)
    return int(outside[rng.integers(len(outside))])


class ChainState:
    """Mutable state of one chain: the reference-group partition with
    cached cluster statistics, and the matching latents per matched group.

    Cluster statistics live in a slot arena; ``z0[i]`` is the slot of
    reference element i and ``counts0`` tracks per-slot reference counts
    (the cluster sizes entering the partition prior). Matched instances
    contribute to slot statistics through their routed reference index, so
    every cached membership is derivable from (z0, T, T0, E).
    """

    def __init__(self, x0, xb, feature_kind, family, prior: PriorConfig,
                 config: SamplerConfig, rng):
        self.x0 = np.ascontiguousarray(np.atleast_2d(x0), dtype=float)
        self.xb = [np.ascontiguousarray(np.atleast_2d(g), dtype=float)
                   for g in xb]
        self.feature_kind = feature_kind
        self.family = family
        self.prior = prior
        self.config = config
        self.n0, self.d = self.x0.shape
        self.n_b = tuple(g.shape[0] for g in self.xb)
        n_total = self.n0 + sum(self.n_b)
        self.v = compute_log_v(self.n0, self.n0, prior.gamma, prior.kappa)
        self.arena = family.new_arena(self.d, n_total)
        cap = self.arena.capacity
        self.counts0 = np.zeros(cap, dtype=np.int64)
        self.z0 = np.zeros(self.n0, dtype=np.intp)
        self.active: list[int] = []
        self._active_arr: np.ndarray | None = None
        self.free: list[int] = list(range(cap - 1, -1, -1))
        self._log_count_gamma = np.log(
            np.arange(n_total + 1, dtype=float) + prior.gamma)

        # matching latents, one entry per matched group
        self.T: list[np.ndarray] = []
        self.T0: list[np.ndarray] = []
        self.E: list[set] = []
        self.R: list[np.ndarray] = []
        self.route: list[np.ndarray] = []
        self.dists: list[MatchDistances] = []
        self.matched_dist: list[float] = []

        self.accepted = 0
        self.proposed = 0

    # -- slot management ---------------------------------------------------

    def active_array(self) -> np.ndarray:
        if self._active_arr is None:
            self._active_arr = np.array(self.active, dtype=np.intp)
        return self._active_arr

    def _alloc_slot(self) -> int:
        if not self.free:
            old_cap = self.arena.capacity
            self.arena.grow()
            new_cap = self.arena.capacity
            grown = np.zeros(new_cap, dtype=np.int64)
            grown[:old_cap] = self.counts0
            self.counts0 = grown
            self.free = list(range(new_cap - 1, old_cap - 1, -1))
        c = self.free.pop()
        self.active.append(c)
        self._active_arr = None
        return c

    def _drop_slot(self, c: int) -> None:
        self.arena.clear_slot(c)
        self.active.remove(c)
        self._active_arr = None
        self.free.append(c)

    # -- matching management -----------------------------------------------

    def set_matching(self, matching: MatchingState) -> None:
        """Install explicit matching latents (used to condition the
        partition sweep on a fixed matching) and rebuild cluster
        statistics."""
        if matching.n0 != self.n0 or matching.n_matched_groups != len(self.xb):
            raise ValueError("matching does not fit this state")
        self.T = [np.array(t, dtype=np.intp) for t in matching.T]
        self.T0 = [np.array(t, dtype=np.intp) for t in matching.T0]
        self.E = [set(e) for e in matching.E]
        self.R = [np.sort(np.fromiter(r, dtype=np.intp, count=len(r)))
                  for r in matching.R]
        self.route = [matching.routes(b) for b in
                      range(1, len(self.xb) + 1)]
        if not self.dists:
            self.dists = [MatchDistances(self.x0, g, self.feature_kind,
                                         self.config.distance_max_cells)
                          for g in self.xb]
        self.matched_dist = [self.dists[g].matched_total(self.T[g])
                             for g in range(len(self.xb))]
        self.rebuild_clusters()

    def rebuild_clusters(self) -> None:
        """Recompute every cluster statistic from scratch for the current
        (z0, routes)."""
        blocks = self.rebuild_blocks()
        for c in self.active:
            self.arena.clear_slot(c)
            members = np.flatnonzero(self.z0 == c)
            self.counts0[c] = len(members)
            if self.family.feature_kind == "binary":
                bn, bs = blocks
                self.arena.add_block(c, (int(bn[members].sum()),
                                         bs[members].sum(0)))
            else:
                bn, bs, bss = blocks
                self.arena.add_block(c, (int(bn[members].sum()),
                                         bs[members].sum(0),
                                         bss[members].sum(0)))

    # -- derived quantities --------------------------------------------

    @property
    def n_clusters(self) -> int:
        return len(self.active)

    def log_likelihood(self) -> float:
        """Sum of per-cluster log marginals (collapsed) or log densities
        at the current cluster parameters (aux path)."""
        act = self.active_array()
        if self.config.sampler_kind == "aux":
            return float(self.arena.log_density_self(act).sum())
        return float(self.arena.logm[act].sum())

    def log_energy(self) -> float:
        tau = self.prior.tau
        return float(sum(-self.matched_dist[g] / (len(self.T[g]) * tau)
                         for g in range(len(self.T))))

    def canonical_labels(self) -> list[np.ndarray]:
        """1-based labels per group, clusters numbered by first appearance
        in the reference group."""
        canon: dict[int, int] = {}
        z = np.empty(self.n0, dtype=np.intp)
        for i, c in enumerate(self.z0):
            c = int(c)
            if c not in canon:
                canon[c] = len(canon) + 1
            z[i] = canon[c]
        out = [z]
        for g in range(len(self.xb)):
            out.append(z[self.route[g]])
        return out

    def matching_state(self) -> MatchingState | None:
        if not self.T:
            return None
        return MatchingState(
            n0=self.n0,
            T=tuple(t.copy() for t in self.T),
            T0=tuple(t.copy() for t in self.T0),
            E=tuple(frozenset(e) for e in self.E),
            R=tuple(frozenset(int(i) for i in r) for r in self.R),
        )

    # -- coherence checks ----------------------------------------------

    def rebuild_blocks(self) -> tuple:
        """Per-reference-element block statistics: the element itself plus
        every matched instance currently routed to it."""
        if self.family.feature_kind == "binary":
            bn = np.ones(self.n0, dtype=np.int64)
            bs = self.x0.astype(np.int64).copy()
            for g, xg in enumerate(self.xb):
                np.add.at(bs, self.route[g], xg.astype(np.int64))
                np.add.at(bn, self.route[g], 1)
            return bn, bs
        bn = np.ones(self.n0, dtype=np.int64)
        bs = self.x0.copy()
        bss = self.x0 * self.x0
        for g, xg in enumerate(self.xb):
            np.add.at(bs, self.route[g], xg)
            np.add.at(bss, self.route[g], xg * xg)
            np.add.at(bn, self.route[g], 1)
        return bn, bs, bss

    def recompute_error(self) -> float:
        """Largest absolute deviation between cached cluster statistics
        (and their log marginals) and a from-scratch rebuild."""
        blocks = self.rebuild_blocks()
        err = 0.0
        for c in self.active:
            members = np.flatnonzero(self.z0 == c)
            if len(members) != int(self.counts0[c]):
                return float("inf")
            if self.family.feature_kind == "binary":
                bn, bs = blocks
                n = int(bn[members].sum())
                ones = bs[members].sum(0)
                err = max(err, abs(n - int(self.arena.count[c])),
                          float(np.abs(ones - self.arena.ones[c]).max()))
                fresh = self.arena.log_marginal_block((n, ones))
            else:
                bn, bs, bss = blocks
                n = int(bn[members].sum())
                s = bs[members].sum(0)
                ss = bss[members].sum(0)
                err = max(
                    err, abs(n - int(self.arena.count[c])),
                    float(np.abs(s - (self.arena.s[c] + self.arena.s_c[c])).max()),
                    float(np.abs(ss - (self.arena.ss[c] + self.arena.ss_c[c])).max()))
                fresh = self.arena.log_marginal_block((n, s, ss))
            err = max(err, abs(fresh - float(self.arena.logm[c])))
        return err


def _build_matching(state: ChainState, config: SamplerConfig, rng) -> None:
    masks = config.mask_sizes(state.n_b)
    for g, xg in enumerate(state.xb):
        nb = xg.shape[0]
        beta, r = nb // state.n0, nb % state.n0
        R = select_R(state.x0, r, config.r_strategy, rng, state.feature_kind)
        pool = np.concatenate([
            np.repeat(np.arange(state.n0, dtype=np.intp), beta), R])
        rng.shuffle(pool)
        T = pool
        T0 = rng.integers(0, state.n0, size=nb).astype(np.intp)
        E = set(int(j) for j in rng.choice(nb, size=masks[g], replace=False))
        route = T.copy()
        for j in E:
            route[j] = T0[j]
        dist = MatchDistances(state.x0, xg, state.feature_kind,
                              max_cells=config.distance_max_cells)
        state.T.append(T)
        state.T0.append(T0)
        state.E.append(E)
        state.R.append(R)
        state.route.append(route)
        state.dists.append(dist)
        state.matched_dist.append(dist.matched_total(T))


def init_state(dataset: GroupedDataset, prior: PriorConfig,
               config: SamplerConfig, rng) -> ChainState:
    """Fresh chain state: a single all-covering cluster, a shuffled valid
    matching map per matched group, uniform T0, and a random mask.

    With ``config.fairness`` false the state covers the pooled data with
    no matching latents (plain mixture sampling).
    """
    if config.family == "beta-bernoulli":
        family = BetaBernoulliFamily(alpha=prior.alpha)
    else:
        family = NormalGammaFamily(a=prior.a, b=prior.b)
    if config.fairness:
        x0, xb = dataset.groups[0], list(dataset.groups[1:])
    else:
        x0, xb = dataset.pooled(), []
    kind = dataset.feature_kind
    if family.feature_kind == "binary" and kind != "binary":
        raise ValueError("beta-bernoulli family requires binary data")
    state = ChainState(x0, xb, kind, family, prior, config, rng)
    if state.xb:
        _build_matching(state, config, rng)
    c = state._alloc_slot()
    state.z0[:] = c
    state.counts0[c] = state.n0
    if state.family.feature_kind == "binary":
        bn, bs = state.rebuild_blocks()
        state.arena.add_block(c, (int(bn.sum()), bs.sum(0)))
    else:
        bn, bs, bss = state.rebuild_blocks()
        state.arena.add_block(c, (int(bn.sum()), bs.sum(0), bss.sum(0)))
    if config.sampler_kind == "aux":
        state.arena.refresh_phi(c, rng)
    return state


def _point_block(state: ChainState, x_row: np.ndarray) -> tuple:
    if state.family.feature_kind == "binary":
        return (1, x_row.astype(np.int64))
    return (1, x_row, x_row * x_row)


def mh_step_matching(state: ChainState, rng) -> bool:
    """One joint Metropolis-Hastings proposal on (T, T0, E) across all
    matched groups; returns True on acceptance.

    The proposal is symmetric, so the acceptance ratio is the energy-prior
    ratio times the likelihood ratio. The latter is evaluated
    incrementally: only instances whose routed cluster changes (at most
    two from the T swap, one from T0, two from the mask swap, per group)
    are moved between cluster statistics, and mutations are reverted
    exactly on rejection.
    """
    if not state.T:
        return False
    state.proposed += 1
    tau = state.prior.tau
    aux_kind = state.config.sampler_kind == "aux"
    log_alpha = 0.0
    swaps = []       # (g, j1, j2)
    t0_moves = []    # (g, j, new target)
    e_moves = []     # (g, j_in, j_out)
    dist_deltas = []  # (g, total matched-distance change)
    moves = []       # (g, j, old route, new route)

    for g in range(len(state.T)):
        T, T0, E = state.T[g], state.T0[g], state.E[g]
        dist = state.dists[g]
        nb, n0, m = len(T), state.n0, len(E)
        new_t: dict[int, int] = {}
        t0_change = None
        e_change = None

        if nb >= 2:
            j1, j2 = (int(v) for v in rng.choice(nb, size=2, replace=False))
            swaps.append((g, j1, j2))
            new_t[j1] = int(T[j2])
            new_t[j2] = int(T[j1])
            dd = (dist(int(T[j2]), j1) + dist(int(T[j1]), j2)
                  - dist(int(T[j1]), j1) - dist(int(T[j2]), j2))
            dist_deltas.append((g, dd))
            log_alpha += -dd / (nb * tau)

        if m > 0:
            jp = int(rng.integers(nb))
            tgt = int(rng.integers(n0))
            t0_change = (jp, tgt)
            t0_moves.append((g, jp, tgt))
        if 0 < m < nb:
            inside = sorted(E)
            j_out = inside[int(rng.integers(m))]
            j_in = _draw_outside(E, nb, rng)
            e_change = (j_in, j_out)
            e_moves.append((g, j_in, j_out))

        candidates = set(new_t)
        if t0_change is not None:
            candidates.add(t0_change[0])
        if e_change is not None:
            candidates.update(e_change)
        for j in sorted(candidates):
            if e_change is not None and j == e_change[0]:
                masked = True
            elif e_change is not None and j == e_change[1]:
                masked = False
            else:
                masked = j in E
            if masked:
                if t0_change is not None and t0_change[0] == j:
                    tgt = t0_change[1]
                else:
                    tgt = int(T0[j])
            else:
                tgt = new_t.get(j, int(T[j]))
            old = int(state.route[g][j])
            if tgt != old:
                moves.append((g, j, old, tgt))

    # stat mutations for instances changing cluster, apply-then-revert
    snaps: dict[int, tuple] = {}
    affected: list[int] = []
    stat_moves = []
    for g, j, old_i, new_i in moves:
        c_old, c_new = int(state.z0[old_i]), int(state.z0[new_i])
        if c_old == c_new:
            continue
        stat_moves.append((g, j, c_old, c_new))
        for c in (c_old, c_new):
            if c not in snaps:
                snaps[c] = state.arena.snapshot(c)
                affected.append(c)
    if stat_moves:
        aff = np.array(affected, dtype=np.intp)
        if aux_kind:
            before = float(state.arena.log_density_self(aff).sum())
        else:
            before = float(state.arena.logm[aff].sum())
        for g, j, c_old, c_new in stat_moves:
            blk = _point_block(state, state.xb[g][j])
            state.arena.sub_block(c_old, blk)
            state.arena.add_block(c_new, blk)
        if aux_kind:
            after = float(state.arena.log_density_self(aff).sum())
        else:
            after = float(state.arena.logm[aff].sum())
        log_alpha += after - before

    if math.log(rng.random()) < log_alpha:
        for g, j1, j2 in swaps:
            T = state.T[g]
            T[j1], T[j2] = int(T[j2]), int(T[j1])
        for g, jp, tgt in t0_moves:
            state.T0[g][jp] = tgt
        for g, j_in, j_out in e_moves:
            state.E[g].discard(j_out)
            state.E[g].add(j_in)
        for g, dd in dist_deltas:
            state.matched_dist[g] += dd
        for g, j, _old, new_i in moves:
            state.route[g][j] = new_i
        state.accepted += 1
        if state.config.debug_checks:
            err = state.recompute_error()
            if err > 1e-8:
                raise AssertionError(
                    f"incremental statistics drifted by {err:.3g}")
        return True

    for c, snap in snaps.items():
        state.arena.restore(c, snap)
    return False


def _sample_log_weights(w: np.ndarray, rng) -> int:
    w = w - w.max()
    cum = np.cumsum(np.exp(w))
    u = rng.random() * cum[-1]
    return min(int(np.searchsorted(cum, u, side="right")), len(w) - 1)


def gibbs_partition_conjugate(state: ChainState, rng) -> None:
    """One collapsed Gibbs sweep over the reference-group partition.

    Each element moves as a block with its routed matched instances. A
    cluster emptied by the removal is deleted before weights are formed,
    so the new-cluster factor references the correct cluster count.
    """
    blocks = state.rebuild_blocks()
    binary = state.family.feature_kind == "binary"
    arena = state.arena
    log_cg = state._log_count_gamma
    log_gamma = float(np.log(state.prior.gamma))
    log_v = state.v.log_v
    order = (rng.permutation(state.n0) if state.config.scan == "random"
             else range(state.n0))
    for i in order:
        if binary:
            blk = (int(blocks[0][i]), blocks[1][i])
        else:
            blk = (int(blocks[0][i]), blocks[1][i], blocks[2][i])
        c_old = int(state.z0[i])
        arena.sub_block(c_old, blk)
        state.counts0[c_old] -= 1
        if state.counts0[c_old] == 0:
            state._drop_slot(c_old)
        act = state.active_array()
        t = len(act)
        if t == 0:
            c_new = state._alloc_slot()
        else:
            w = np.empty(t + 1)
            w[:t] = (log_cg[state.counts0[act]]
                     + arena.log_marginal_merged(act, blk)
                     - arena.logm[act])
            w[t] = (log_gamma + log_v[t] - log_v[t - 1]
                    + arena.log_marginal_block(blk))
            pick = _sample_log_weights(w, rng)
            c_new = state._alloc_slot() if pick == t else int(act[pick])
        arena.add_block(c_new, blk)
        state.counts0[c_new] += 1
        state.z0[i] = c_new


def gibbs_partition_nonconjugate(state: ChainState, rng) -> None:
    """Auxiliary-variable Gibbs sweep with explicit cluster parameters.

    Fresh parameter draws from the prior stand in for prospective new
    clusters; unchosen auxiliaries are discarded. Cluster parameters are
    refreshed from their conditional posterior once per sweep.
    """
    blocks = state.rebuild_blocks()
    binary = state.family.feature_kind == "binary"
    arena = state.arena
    log_cg = state._log_count_gamma
    m_aux = state.config.m_aux
    log_gm = float(np.log(state.prior.gamma) - np.log(m_aux))
    log_v = state.v.log_v
    order = (rng.permutation(state.n0) if state.config.scan == "random"
             else range(state.n0))
    for i in order:
        if binary:
            blk = (int(blocks[0][i]), blocks[1][i])
        else:
            blk = (int(blocks[0][i]), blocks[1][i], blocks[2][i])
        c_old = int(state.z0[i])
        arena.sub_block(c_old, blk)
        state.counts0[c_old] -= 1
        if state.counts0[c_old] == 0:
            state._drop_slot(c_old)
        act = state.active_array()
        t = len(act)
        aux_phi = arena.sample_phi_prior(m_aux, rng)
        if t == 0:
            pick = t + _sample_log_weights(
                arena.log_density_phi(aux_phi, blk), rng)
        else:
            w = np.empty(t + m_aux)
            w[:t] = log_cg[state.counts0[act]] + arena.log_density_slots(act, blk)
            w[t:] = (log_gm + log_v[t] - log_v[t - 1]
                     + arena.log_density_phi(aux_phi, blk))
            pick = _sample_log_weights(w, rng)
        if pick >= t:
            c_new = state._alloc_slot()
            arena.phi[c_new] = aux_phi[pick - t]
        else:
            c_new = int(act[pick])
        arena.add_block(c_new, blk)
        state.counts0[c_new] += 1
        state.z0[i] = c_new
    for c in state.active:
        arena.refresh_phi(c, rng)


def _record_sample(state: ChainState, iteration: int, group_slices,
                   keep_matching: bool) -> ChainSample:
    internal = state.canonical_labels()
    if group_slices is not None:
        z = internal[0]
        per_group = [z[a:b] for a, b in group_slices]
    else:
        per_group = internal
    label_tuples = tuple(tuple(int(v) for v in lab) for lab in per_group)
    sizes = tuple(len(lab) for lab in label_tuples)
    assignment = Assignment(labels=label_tuples)

    pooled_x = np.concatenate([state.x0] + state.xb, axis=0)
    pooled_lab = np.concatenate(internal) - 1
    k = int(pooled_lab.max()) + 1
    centers = np.zeros((k, state.d))
    counts = np.zeros(k)
    np.add.at(centers, pooled_lab, pooled_x)
    np.add.at(counts, pooled_lab, 1.0)
    centers /= counts[:, None]
    cost = float(((pooled_x - centers[pooled_lab]) ** 2).sum()
                 / pooled_x.shape[0])
    return ChainSample(
        iteration=iteration,
        k=int(assignment.n_clusters),
        labels=label_tuples,
        delta=delta_fairness(sizes, assignment),
        bal=balance(sizes, assignment),
        cost=cost,
        nll=-state.log_likelihood(),
        matching=state.matching_state() if keep_matching else None,
    )


def run_fbc(dataset: GroupedDataset, prior: PriorConfig,
            config: SamplerConfig, rng=None, keep_matching: bool = True,
            record_all: bool = False) -> FbcRun:
    """Run one chain and return post-burn-in samples plus K and negative
    log-likelihood traces over every iteration.

    With ``config.fairness`` false the matching step is skipped and the
    pooled data is clustered directly; recorded per-group labels still
    refer to the original sensitive groups so fairness summaries stay
    comparable. Two runs with the same seed produce identical output.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    state = init_state(dataset, prior, config, rng)
    group_slices = None
    if not state.xb:
        bounds = np.cumsum((0,) + dataset.group_sizes)
        group_slices = [(int(a), int(b))
                        for a, b in zip(bounds[:-1], bounds[1:])]
    sweep = (gibbs_partition_nonconjugate if config.sampler_kind == "aux"
             else gibbs_partition_conjugate)
    samples = []
    k_trace = np.zeros(config.max_iter, dtype=np.int64)
    nll_trace = np.zeros(config.max_iter)
    for it in range(1, config.max_iter + 1):
        if state.T:
            for _ in range(config.mh_repeats):
                mh_step_matching(state, rng)
        sweep(state, rng)
        k_trace[it - 1] = state.n_clusters
        nll_trace[it - 1] = -state.log_likelihood()
        if record_all or it > config.burn_in:
            samples.append(_record_sample(state, it, group_slices,
                                          keep_matching))
    if config.debug_checks:
        err = state.recompute_error()
        if err > 1e-8:
            raise AssertionError(f"final statistics drifted by {err:.3g}")
    accept = state.accepted / state.proposed if state.proposed else 0.0
    return FbcRun(samples=tuple(samples), k_trace=k_trace,
                  nll_trace=nll_trace, accept_rate=accept,
                  burn_in=config.burn_in)
