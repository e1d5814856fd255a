"""Domain types, fairness measures, matching maps and their structural
guarantees."""

import itertools

import numpy as np
import pytest

from fairmix.core import (Assignment, DimensionError, GroupedDataset,
                          MatchingState, Partition, assignments_from,
                          balance, delta_fairness, validate_matching)


def make_matching(n0, T, T0=None, E=(), R=()):
    T = np.asarray(T)
    T0 = np.asarray(T0 if T0 is not None else T)
    return MatchingState(n0=n0, T=(T,), T0=(T0,),
                         E=(frozenset(E),), R=(frozenset(R),))


class TestGroupedDataset:
    def test_relabels_smallest_group_first(self):
        big = np.zeros((5, 2))
        small = np.ones((3, 2))
        ds = GroupedDataset([big, small])
        assert ds.group_sizes == (3, 5)
        assert ds.relabel_map == (1, 0)
        restored = ds.to_original_order(list(ds.groups))
        assert restored[0] is ds.groups[1]

    def test_equal_sizes_keep_order(self):
        ds = GroupedDataset([np.zeros((3, 1)), np.ones((3, 1))])
        assert ds.relabel_map == (0, 1)

    def test_feature_count_mismatch(self):
        with pytest.raises(DimensionError):
            GroupedDataset([np.zeros((3, 2)), np.zeros((3, 3))])

    def test_needs_two_groups(self):
        with pytest.raises(ValueError):
            GroupedDataset([np.zeros((3, 2))])

    def test_empty_group(self):
        with pytest.raises(ValueError):
            GroupedDataset([np.zeros((0, 2)), np.zeros((3, 2))])

    def test_binary_validation(self):
        with pytest.raises(ValueError):
            GroupedDataset([np.full((2, 2), 0.5), np.ones((2, 2))],
                           feature_kind="binary")
        ds = GroupedDataset([np.ones((2, 2)), np.zeros((3, 2))],
                            feature_kind="binary")
        assert ds.feature_kind == "binary"

    def test_groups_read_only(self):
        ds = GroupedDataset([np.zeros((2, 1)), np.ones((2, 1))])
        with pytest.raises(ValueError):
            ds.groups[0][0, 0] = 5.0


class TestAssignment:
    def test_consecutive_labels_required(self):
        with pytest.raises(ValueError):
            Assignment(labels=((1, 3), (1, 1)))
        with pytest.raises(ValueError):
            Assignment(labels=((0, 1), (1, 1)))

    def test_counts(self):
        a = Assignment(labels=((1, 1, 2), (2, 2, 1)))
        assert a.n_clusters == 2
        np.testing.assert_array_equal(a.group_cluster_counts(),
                                      [[2, 1], [1, 2]])


class TestPartition:
    def test_round_trip(self):
        p = Partition.from_labels([0, 1, 0, 2])
        assert p.n == 4 and p.n_clusters == 3
        np.testing.assert_array_equal(p.labels(), [0, 1, 0, 2])

    def test_coverage_required(self):
        with pytest.raises(ValueError):
            Partition(clusters=((0, 1), (3,)))
        with pytest.raises(ValueError):
            Partition(clusters=((0, 1), (1, 2)))


class TestDelta:
    def test_identical_proportions(self):
        a = Assignment(labels=((1, 1, 2), (1, 1, 2)))
        assert delta_fairness((3, 3), a) == 0.0

    def test_disjoint_clusters_are_maximally_unfair(self):
        a = Assignment(labels=((1, 1), (2, 2)))
        assert delta_fairness((2, 2), a) == 1.0

    def test_hand_computed_quarter(self):
        a = Assignment(labels=((1, 1, 2, 2), (1, 2, 2, 2)))
        assert delta_fairness((4, 4), a) == pytest.approx(0.25, abs=1e-15)

    def test_length_mismatch(self):
        a = Assignment(labels=((1, 2), (1, 2)))
        with pytest.raises(DimensionError):
            delta_fairness((2, 3), a)
        with pytest.raises(DimensionError):
            delta_fairness((2, 2, 2), a)

    def test_two_group_formula_agreement(self):
        # the general form with B=2 must equal the direct binary formula
        rng = np.random.default_rng(7)
        for _ in range(50):
            n0, n1 = rng.integers(2, 9, size=2)
            k = int(rng.integers(1, 4))
            z0 = rng.integers(1, k + 1, size=n0)
            z1 = rng.integers(1, k + 1, size=n1)
            used = sorted(set(z0) | set(z1))
            relab = {v: i + 1 for i, v in enumerate(used)}
            z0 = [relab[v] for v in z0]
            z1 = [relab[v] for v in z1]
            a = Assignment(labels=(tuple(z0), tuple(z1)))
            direct = 0.5 * sum(
                abs(z0.count(kk) / n0 - z1.count(kk) / n1)
                for kk in range(1, len(used) + 1))
            assert delta_fairness((n0, n1), a) == pytest.approx(direct,
                                                                abs=1e-12)

    def test_multinary_range(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            sizes = rng.integers(2, 7, size=3)
            labs = [rng.integers(1, 3, size=n) for n in sizes]
            flat = sorted({v for lab in labs for v in lab})
            relab = {v: i + 1 for i, v in enumerate(flat)}
            a = Assignment(labels=tuple(
                tuple(relab[v] for v in lab) for lab in labs))
            d = delta_fairness(tuple(sizes), a)
            assert 0.0 <= d <= 1.0


class TestBalance:
    def test_equal_counts(self):
        a = Assignment(labels=((1, 2), (1, 2)))
        assert balance((2, 2), a) == 1.0

    def test_one_to_four(self):
        a = Assignment(labels=((1,), (1, 1, 1, 1)))
        assert balance((1, 4), a) == 0.25

    def test_absent_group(self):
        a = Assignment(labels=((1, 2), (1, 1, 1)))
        assert balance((2, 3), a) == 0.0


class TestAssignmentsFrom:
    def test_reference_matching_map(self):
        # map (3,4,1,2) in one-based notation, partition {1,2},{3,4}
        part = Partition(clusters=((0, 1), (2, 3)))
        matching = make_matching(4, [2, 3, 0, 1])
        a = assignments_from(part, matching)
        assert a.labels[0] == (1, 1, 2, 2)
        assert a.labels[1] == (2, 2, 1, 1)

    def test_full_mask_with_same_map_is_identity(self):
        part = Partition(clusters=((0, 1), (2, 3)))
        t = [2, 3, 0, 1]
        plain = assignments_from(part, make_matching(4, t))
        masked = assignments_from(part, make_matching(4, t, T0=t,
                                                      E=range(4)))
        assert plain == masked

    def test_identity_two_singletons(self):
        part = Partition(clusters=((0,), (1,)))
        a = assignments_from(part, make_matching(2, [0, 1]))
        assert a.labels[1] == (1, 2)
        assert delta_fairness((2, 2), a) == 0.0

    def test_canonicalization_is_relabel_invariant(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n0 = int(rng.integers(3, 7))
            labels = rng.integers(0, 3, size=n0)
            part = Partition.from_labels(labels)
            shuffled = Partition(tuple(
                part.clusters[i]
                for i in rng.permutation(part.n_clusters)))
            t = rng.permutation(n0)
            m = make_matching(n0, t)
            assert assignments_from(part, m) == assignments_from(shuffled, m)

    def test_size_mismatch(self):
        part = Partition(clusters=((0, 1),))
        with pytest.raises(DimensionError):
            assignments_from(part, make_matching(3, [0, 1, 2]))


class TestValidateMatching:
    def test_permutation_ok(self):
        m = make_matching(4, [2, 3, 0, 1])
        assert validate_matching(m, 4, (4,)) is None

    def test_uneven_preimages_ok(self):
        # n0=2, n1=5: beta=2, r=1, index 0 carries the extra preimage
        m = make_matching(2, [0, 0, 0, 1, 1], R=[0])
        assert validate_matching(m, 2, (5,)) is None

    def test_not_onto(self):
        m = make_matching(2, [0, 0, 0, 0])
        v = validate_matching(m, 2, (4,))
        assert v is not None and v.code == "not-onto"

    def test_bad_preimage_sizes(self):
        m = make_matching(3, [0, 0, 0, 0, 1, 1, 1, 2], R=[0, 1])
        v = validate_matching(m, 3, (8,))
        assert v is not None and v.code == "preimage-size"

    def test_residual_set_mismatch(self):
        m = make_matching(2, [0, 0, 0, 1, 1], R=[1])
        v = validate_matching(m, 2, (5,))
        assert v is not None and v.code == "residual-set"

    def test_mask_range(self):
        m = make_matching(2, [0, 1], E=[5])
        v = validate_matching(m, 2, (2,))
        assert v is not None and v.code == "range"


class TestFairnessGuarantees:
    def test_perfect_fairness_forward(self):
        # any valid matching with empty mask and no residuals gives
        # exactly zero unfairness, for every partition
        rng = np.random.default_rng(11)
        for _ in range(100):
            n0 = int(rng.integers(1, 7))
            beta = int(rng.integers(1, 4))
            pool = np.repeat(np.arange(n0), beta)
            rng.shuffle(pool)
            m = make_matching(n0, pool)
            assert validate_matching(m, n0, (n0 * beta,)) is None
            labels = rng.integers(0, max(1, n0 // 2) + 1, size=n0)
            part = Partition.from_labels(labels)
            a = assignments_from(part, m)
            assert delta_fairness((n0, n0 * beta), a) == 0.0

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_perfect_fairness_reverse(self, n):
        # every equal-size zero-unfairness labeling is realized by some
        # permutation matching map
        perms = list(itertools.permutations(range(n)))
        for part in _set_partitions(n):
            z0 = np.empty(n, dtype=int)
            for k, c in enumerate(part):
                for i in c:
                    z0[i] = k
            k = len(part)
            for z1 in itertools.product(range(k), repeat=n):
                z1 = np.asarray(z1)
                counts0 = np.bincount(z0, minlength=k)
                counts1 = np.bincount(z1, minlength=k)
                if not np.array_equal(counts0, counts1):
                    continue
                assert any((z0[np.asarray(p)] == z1).all() for p in perms), \
                    (z0, z1)

    def test_mask_bound(self):
        # with no residuals the unfairness is at most m / n1
        rng = np.random.default_rng(13)
        for _ in range(200):
            n0 = int(rng.integers(2, 7))
            beta = int(rng.integers(1, 3))
            n1 = n0 * beta
            mask = int(rng.integers(0, n1 + 1))
            pool = np.repeat(np.arange(n0), beta)
            rng.shuffle(pool)
            t0 = rng.integers(0, n0, size=n1)
            e = rng.choice(n1, size=mask, replace=False)
            m = make_matching(n0, pool, T0=t0, E=e)
            part = Partition.from_labels(rng.integers(0, 2, size=n0))
            a = assignments_from(part, m)
            assert delta_fairness((n0, n1), a) <= mask / n1 + 1e-12

    def test_three_group_bound(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n0 = int(rng.integers(2, 6))
            b1, b2 = rng.integers(1, 3, size=2)
            n1, n2 = n0 * int(b1), n0 * int(b2)
            m1 = int(rng.integers(0, n1 + 1))
            m2 = int(rng.integers(0, n2 + 1))
            ts, t0s, es = [], [], []
            for nb, beta, mask in ((n1, b1, m1), (n2, b2, m2)):
                pool = np.repeat(np.arange(n0), beta)
                rng.shuffle(pool)
                ts.append(pool)
                t0s.append(rng.integers(0, n0, size=nb))
                es.append(frozenset(
                    int(j) for j in rng.choice(nb, size=mask, replace=False)))
            matching = MatchingState(
                n0=n0, T=tuple(ts), T0=tuple(t0s), E=tuple(es),
                R=(frozenset(), frozenset()))
            part = Partition.from_labels(rng.integers(0, 2, size=n0))
            a = assignments_from(part, matching)
            bound = 0.5 * (m1 / n1 + m2 / n2)
            assert delta_fairness((n0, n1, n2), a) <= bound + 1e-12

    def test_proportional_residuals_stay_fair(self):
        # r > 0: when every cluster's share of the residual set matches its
        # share of the reference group, unfairness is exactly zero
        n0, r, beta = 4, 2, 2
        n1 = beta * n0 + r
        residual = (0, 2)
        part = Partition(clusters=((0, 1), (2, 3)))
        t = []
        for i in range(n0):
            t.extend([i] * (beta + (1 if i in residual else 0)))
        m = make_matching(n0, np.asarray(t), R=residual)
        assert validate_matching(m, n0, (n1,)) is None
        a = assignments_from(part, m)
        assert delta_fairness((n0, n1), a) == 0.0


def _set_partitions(n):
    if n == 0:
        return [[]]
    out = []
    for part in _set_partitions(n - 1):
        for i in range(len(part)):
            out.append(part[:i] + [part[i] + [n - 1]] + part[i + 1:])
        out.append(part + [[n - 1]])
    return out
