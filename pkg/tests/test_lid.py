"""LID estimator tests: exact kNN selection, MLE closed forms, consistency."""

import math

import numpy as np
import pytest
from helpers import brute_force_knn, unit_ball

from d2l import PointSet, batch_lid_mean, batch_lid_values, knn_profile, lid_mle
from d2l.errors import (
    AllDegenerate,
    ConfigError,
    InsufficientPoints,
    NonFiniteInput,
)
from d2l.lid import NeighborProfile


class TestKnnProfile:
    def test_two_nearest_of_three(self):
        prof = knn_profile((0.0, 0.0), [(1.0, 0.0), (0.0, 2.0), (3.0, 0.0)], k=2)
        np.testing.assert_array_equal(prof.distances, [1.0, 2.0])

    def test_exclude_self_drops_one_zero(self):
        prof = knn_profile(
            (0.0, 0.0), [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], k=2, exclude_self=True
        )
        np.testing.assert_array_equal(prof.distances, [1.0, 2.0])

    def test_exclude_self_drops_only_one_of_duplicates(self):
        refs = [(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]
        prof = knn_profile((0.0, 0.0), refs, k=2, exclude_self=True)
        np.testing.assert_array_equal(prof.distances, [0.0, 1.0])

    def test_exclude_self_without_zero_is_noop(self):
        refs = [(1.0, 0.0), (0.0, 2.0), (3.0, 0.0)]
        a = knn_profile((0.0, 0.0), refs, k=2, exclude_self=True)
        b = knn_profile((0.0, 0.0), refs, k=2, exclude_self=False)
        np.testing.assert_array_equal(a.distances, b.distances)

    def test_matches_exhaustive_scan_on_unit_square(self):
        rng = np.random.default_rng(7)
        refs = rng.random((1000, 2))
        for _ in range(20):
            q = rng.random(2)
            got = knn_profile(q, refs, k=10).distances
            np.testing.assert_array_equal(got, brute_force_knn(q, refs, 10))

    def test_matches_exhaustive_scan_across_shapes(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n = int(rng.integers(30, 2000))
            d = int(rng.integers(1, 40))
            k = int(rng.integers(2, 25))
            refs = rng.standard_normal((n, d))
            q = refs[int(rng.integers(n))] if rng.random() < 0.5 else rng.standard_normal(d)
            excl = bool(rng.random() < 0.5)
            got = knn_profile(q, refs, k=k, exclude_self=excl).distances
            np.testing.assert_array_equal(got, brute_force_knn(q, refs, k, excl))

    def test_insufficient_points(self):
        with pytest.raises(InsufficientPoints):
            knn_profile((0.0, 0.0), [(1.0, 0.0), (2.0, 0.0)], k=3)
        # self-exclusion eats one of the k available references
        with pytest.raises(InsufficientPoints):
            knn_profile((0.0, 0.0), [(0.0, 0.0), (1.0, 0.0)], k=2, exclude_self=True)

    def test_non_finite_input(self):
        with pytest.raises(NonFiniteInput):
            knn_profile((0.0, np.nan), [(1.0, 0.0), (0.0, 2.0)], k=2)
        with pytest.raises(NonFiniteInput):
            knn_profile((0.0, 0.0), [(np.inf, 0.0), (0.0, 2.0), (1.0, 1.0)], k=2)

    def test_k_below_two_rejected(self):
        with pytest.raises(ConfigError):
            knn_profile((0.0, 0.0), [(1.0, 0.0), (0.0, 2.0)], k=1)


class TestLidMle:
    def test_closed_form_k2(self):
        r_max = 3.7
        est = lid_mle(NeighborProfile([r_max / math.e, r_max]))
        assert est.valid
        np.testing.assert_allclose(est.value, 2.0, rtol=1e-12)

    def test_closed_form_k3(self):
        r_max = 0.42
        est = lid_mle(NeighborProfile([r_max / math.e, r_max / math.e, r_max]))
        assert est.valid
        np.testing.assert_allclose(est.value, 1.5, rtol=1e-12)

    def test_all_equal_profile_is_degenerate(self):
        est = lid_mle(NeighborProfile([2.0, 2.0, 2.0]))
        assert not est.valid

    def test_zero_radius_profile_is_degenerate(self):
        est = lid_mle(NeighborProfile([0.0, 0.0, 0.0]))
        assert not est.valid

    def test_zero_distance_is_floored_not_fatal(self):
        est = lid_mle(NeighborProfile([0.0, 1.0, 2.0]))
        assert est.valid
        assert 0.0 < est.value < 1.0

    def test_consistent_on_known_distance_cdf(self):
        # Distances drawn directly from F(r) = r^dim; conditioned on the
        # k-th distance the log-ratio sum is Gamma(k-1, 1/dim), so the
        # estimator's mean is k*dim/(k-2).  2000 profiles pin the sample
        # mean to well under 3% of that.
        rng = np.random.default_rng(2024)
        k = 20
        for dim in (2, 5, 8):
            r = np.sort(rng.random((2000, 1279)) ** (1.0 / dim), axis=1)[:, :k]
            ests = [lid_mle(NeighborProfile(row)).value for row in r]
            expected = k * dim / (k - 2)
            np.testing.assert_allclose(np.mean(ests), expected, rtol=0.03)


class TestBatchLid:
    def test_identical_points_all_degenerate(self):
        pts = np.ones((128, 4))
        with pytest.raises(AllDegenerate):
            batch_lid_mean(pts, 20)

    def test_disc_estimates_near_two(self):
        rng = np.random.default_rng(0)
        pts = unit_ball(1280, 2, rng)
        assert 1.6 <= batch_lid_mean(pts, 20) <= 2.4

    def test_five_ball_estimates_near_five(self):
        rng = np.random.default_rng(1)
        pts = unit_ball(1280, 5, rng)
        assert 4.0 <= batch_lid_mean(pts, 20) <= 6.0

    def test_equals_per_point_composition(self):
        # batched scoring must agree exactly with composing the public
        # per-point operations
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((200, 6))
        k = 15
        per_point = np.array(
            [lid_mle(knn_profile(p, pts, k, exclude_self=True)).value for p in pts]
        )
        assert np.all(np.isfinite(per_point))
        np.testing.assert_array_equal(batch_lid_values(pts, k), per_point)
        assert batch_lid_mean(pts, k) == np.mean(np.sort(per_point))

    def test_duplicated_point_is_skipped_not_propagated(self):
        rng = np.random.default_rng(4)
        pts = rng.standard_normal((60, 3))
        k = 5
        stack = np.vstack([pts, np.tile(pts[0], (k + 1, 1))])
        values = batch_lid_values(stack, k)
        assert np.isnan(values[-1])  # a fully duplicated point carries no signal
        assert np.isfinite(batch_lid_mean(stack, k))

    def test_requires_more_points_than_k(self):
        pts = np.random.default_rng(5).standard_normal((20, 3))
        with pytest.raises(InsufficientPoints):
            batch_lid_mean(pts, 20)


class TestInvariantProperties:
    def test_scale_invariance(self):
        rng = np.random.default_rng(8)
        pts = rng.standard_normal((300, 7))
        base = batch_lid_values(pts, 20)
        for scale in (1e-6, 0.037, 3.0, 1e6):
            scaled = batch_lid_values(pts * scale, 20)
            np.testing.assert_allclose(scaled, base, rtol=1e-9)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(9)
        pts = rng.standard_normal((257, 5))
        base = batch_lid_mean(pts, 12)
        for _ in range(5):
            perm = rng.permutation(len(pts))
            assert batch_lid_mean(pts[perm], 12) == base

    def test_ball_dimension_ordering(self):
        # estimates for lower-dimensional balls sit below higher ones in
        # at least 9 of 10 seeded trials
        dims = (2, 5, 8, 10)
        wins = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            means = [batch_lid_mean(unit_ball(1280, d, rng), 20) for d in dims]
            wins += all(a < b for a, b in zip(means, means[1:]))
        assert wins >= 9

    def test_point_set_validation(self):
        with pytest.raises(NonFiniteInput):
            PointSet(np.array([[1.0, np.nan], [0.0, 1.0]]))
        with pytest.raises(ConfigError):
            PointSet(np.zeros((1, 3)))
