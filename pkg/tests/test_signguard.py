"""Tests for the sign-statistics defense pipeline: norm filter, feature
construction, cluster filter, clipping, and their ablation combinations."""

import numpy as np
import pytest

from byzsim import attacks, gradients, signguard
from byzsim.attacks import AttackContext
from byzsim.signguard import (
    EmptyTrustedError,
    FilterOutcome,
    SignGuardConfig,
)

import oracles


def ones_block(count, d, value=1.0):
    return np.full((count, d), value)


class TestSignGuardConfig:
    def test_defaults(self):
        cfg = SignGuardConfig()
        assert cfg.norm_lower == 0.1
        assert cfg.norm_upper == 3.0
        assert cfg.coord_ratio == 0.1
        assert cfg.variant == "plain"
        assert cfg.enable_thresholding and cfg.enable_clustering and cfg.enable_clipping

    def test_bound_invariants(self):
        with pytest.raises(ValueError):
            SignGuardConfig(norm_lower=0.0)
        with pytest.raises(ValueError):
            SignGuardConfig(norm_lower=1.5)
        with pytest.raises(ValueError):
            SignGuardConfig(norm_upper=0.9)
        with pytest.raises(ValueError):
            SignGuardConfig(coord_ratio=0.0)
        with pytest.raises(ValueError):
            SignGuardConfig(coord_ratio=1.2)

    def test_enum_fields(self):
        with pytest.raises(ValueError):
            SignGuardConfig(variant="cosine")
        with pytest.raises(ValueError):
            SignGuardConfig(clusterer="dbscan")
        with pytest.raises(ValueError):
            SignGuardConfig(reference="oracle")

    def test_to_dict_skips_defaults(self):
        assert SignGuardConfig().to_dict() == {}
        assert SignGuardConfig(variant="sim").to_dict() == {"variant": "sim"}


class TestNormFilter:
    def test_outlier_excluded(self):
        s1, m = signguard.norm_filter([[1.0], [1.0], [-1.0], [100.0]], 0.1, 3.0)
        assert m == 1.0
        assert s1 == {0, 1, 2}

    def test_all_equal_all_pass(self):
        s1, m = signguard.norm_filter([[2.0], [2.0], [-2.0]], 0.1, 3.0)
        assert s1 == {0, 1, 2}
        assert m == 2.0

    def test_small_norm_excluded(self):
        s1, m = signguard.norm_filter([[0.05], [1.0], [1.0]], 0.1, 3.0)
        assert m == 1.0
        assert s1 == {1, 2}

    def test_even_count_median_is_midpoint(self):
        s1, m = signguard.norm_filter([[1.0], [3.0]], 0.1, 3.0)
        assert m == 2.0
        assert s1 == {0, 1}

    def test_degenerate_zero_median(self):
        s1, m = signguard.norm_filter([[0.0], [0.0], [1.0]], 0.1, 3.0)
        assert m == 0.0
        assert s1 == {0, 1}

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            signguard.norm_filter([], 0.1, 3.0)


class TestBuildFeatures:
    def full_subset(self, d, seed=0):
        return gradients.sample_coordinates(d, 1.0, seed)

    def test_plain_fractions(self):
        rows = signguard.build_features([[1.0, -1.0, 0.0, 2.0]], self.full_subset(4))
        assert np.allclose(rows[0].values, [0.5, 0.25, 0.25])
        assert rows[0].client_index == 0

    def test_sim_self_reference(self):
        g = [1.0, -1.0, 0.0, 2.0]
        rows = signguard.build_features([g], self.full_subset(4), variant="sim",
                                        prev_global=g)
        assert rows[0].values[3] == pytest.approx(1.0)

    def test_sim_zero_norm_gets_zero(self):
        rows = signguard.build_features([[0.0, 0.0], [1.0, 1.0]],
                                        self.full_subset(2), variant="sim",
                                        prev_global=[1.0, 0.0])
        assert rows[0].values[3] == 0.0

    def test_dist_scaled_by_median_norm(self):
        rows = signguard.build_features([[2.0, 0.0]], self.full_subset(2),
                                        variant="dist", prev_global=[1.0, 0.0],
                                        median_norm=4.0)
        assert rows[0].values[3] == pytest.approx(1.0 / 4.0)

    def test_round_zero_reference_is_coordwise_median(self):
        gs = [[1.0, 0.0], [3.0, 0.0], [5.0, 0.0]]
        # median reference [3, 0]; distances 2, 0, 2; median norm = 3
        rows = signguard.build_features(gs, self.full_subset(2), variant="dist")
        assert rows[0].values[3] == pytest.approx(2.0 / 3.0)
        assert rows[1].values[3] == pytest.approx(0.0)

    def test_subset_restriction(self):
        subset = gradients.CoordinateSubset(indices=(0, 1), dimension=4, seed=0)
        rows = signguard.build_features([[1.0, -1.0, 5.0, 5.0]], subset)
        assert np.allclose(rows[0].values, [0.5, 0.0, 0.5])

    def test_lie_separation_monte_carlo(self):
        # shifted-Gaussian honest gradients vs one strongly biased crafted
        # vector: the crafted positive fraction sits far outside the honest
        # spread, across several sampling seeds
        for seed in range(5):
            r = np.random.default_rng(seed)
            honest = r.normal(1.0, 1.0, size=(40, 200))
            ctx = AttackContext(honest=honest, n=50, m=10)
            g_m = attacks.craft_lie(ctx, z=2.0)
            mat = np.vstack([honest, np.tile(g_m, (10, 1))])
            rows = signguard.build_features(mat, self.full_subset(200, seed))
            feats = np.stack([row.values for row in rows])
            honest_pos = feats[:40, 0]
            mal_pos = feats[40:, 0]
            gap = abs(float(mal_pos.mean()) - float(honest_pos.mean()))
            assert gap > 3.0 * float(honest_pos.std()), seed

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError):
            signguard.build_features([[1.0]], self.full_subset(1), variant="norm")


class TestPairwiseMedianReference:
    def test_majority_direction(self):
        gs = [[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [-1.0, 0.0]]
        assert np.allclose(signguard.pairwise_median_reference(gs), [1.0, 0.0])

    def test_all_identical_lowest_index(self):
        gs = [[2.0, 2.0]] * 4
        assert np.allclose(signguard.pairwise_median_reference(gs), [2.0, 2.0])

    def test_reversed_copy_never_wins(self, rng):
        base = rng.normal(size=(9, 5))
        mat = np.vstack([base, -base[0]])
        ref = signguard.pairwise_median_reference(mat)
        assert not np.allclose(ref, -base[0])

    def test_matches_oracle(self, rng):
        for _ in range(10):
            mat = rng.normal(size=(int(rng.integers(3, 10)), 4))
            ref = signguard.pairwise_median_reference(mat)
            want = oracles.pairwise_median_similarity_argmax(mat)
            assert np.array_equal(ref, mat[want])

    def test_too_few_rejected(self):
        with pytest.raises(ValueError):
            signguard.pairwise_median_reference([[1.0], [2.0]])


class TestSignGuardAggregate:
    def test_identical_gradients_fixed_point(self):
        mat = ones_block(6, 8)
        out, outcome = signguard.signguard_aggregate(mat, SignGuardConfig())
        assert np.allclose(out, np.ones(8))
        assert outcome.trusted == frozenset(range(6))

    def test_sign_flip_cohort_filtered(self):
        mat = np.vstack([ones_block(40, 10), ones_block(10, 10, -1.0)])
        out, outcome = signguard.signguard_aggregate(mat, SignGuardConfig())
        assert outcome.trusted == frozenset(range(40))
        assert np.allclose(out, np.ones(10))
        assert outcome.s2 == frozenset(range(40))

    def test_clip_factor_on_surviving_outlier(self):
        mat = np.vstack([ones_block(5, 4), ones_block(1, 4, 100.0)])
        cfg = SignGuardConfig(enable_thresholding=False)
        out, outcome = signguard.signguard_aggregate(mat, cfg)
        # all-positive signs cluster together; M = 2, the 100x client is
        # clipped by M / ||g|| = 0.01 down to the unit row
        assert outcome.trusted == frozenset(range(6))
        assert outcome.median_norm == pytest.approx(2.0)
        assert np.allclose(out, np.ones(4))

    def test_scale_invariance_of_filters(self, rng):
        honest = rng.normal(1.0, 1.0, size=(9, 40))
        mat = np.vstack([honest, -3.0 * honest[:3]])
        cfg = SignGuardConfig(seed=7)
        _, base = signguard.signguard_aggregate(mat, cfg)
        for alpha in (0.5, 2.0, 10.0):
            _, scaled = signguard.signguard_aggregate(alpha * mat, cfg)
            assert scaled.s1 == base.s1, alpha
            assert scaled.s2 == base.s2, alpha
            assert scaled.trusted == base.trusted, alpha

    def test_output_norm_bounded_by_median(self, rng):
        for _ in range(10):
            mat = rng.normal(size=(11, 20))
            mat[0] *= 50.0  # large survivor candidate
            out, outcome = signguard.signguard_aggregate(
                mat, SignGuardConfig(enable_thresholding=False, seed=3))
            assert gradients.l2_norm(out) <= outcome.median_norm * (1 + 1e-12)

    def test_all_stages_off_is_plain_mean(self, rng):
        mat = rng.normal(size=(8, 6))
        cfg = SignGuardConfig(enable_thresholding=False,
                              enable_clustering=False,
                              enable_clipping=False)
        out, outcome = signguard.signguard_aggregate(mat, cfg)
        assert np.array_equal(out, mat.mean(axis=0))
        assert outcome.trusted == frozenset(range(8))

    def test_clustering_only_is_largest_cluster_mean(self):
        mat = np.vstack([ones_block(7, 5), ones_block(3, 5, -1.0)])
        cfg = SignGuardConfig(enable_thresholding=False,
                              enable_clipping=False)
        out, outcome = signguard.signguard_aggregate(mat, cfg)
        assert outcome.trusted == frozenset(range(7))
        assert np.array_equal(out, mat[:7].mean(axis=0))

    def test_thresholding_only_keeps_norm_band(self, rng):
        base = rng.normal(size=(7, 12))
        big = 100.0 * base[0]
        mat = np.vstack([base, big[None, :]])
        cfg = SignGuardConfig(enable_clustering=False, enable_clipping=False)
        out, outcome = signguard.signguard_aggregate(mat, cfg)
        assert 7 not in outcome.s1
        assert np.array_equal(out, mat[sorted(outcome.trusted)].mean(axis=0))

    def test_empty_trusted_raises(self):
        # norms [1, 1, 100, 100]: the median 50.5 pushes the unit-norm pair
        # below the lower band, so s1 = {2, 3}.  In sign space the best
        # 2-partition is {0, 1} vs {2, 3} and the size tie (both activity
        # 1.0) breaks toward cluster id 0 = {0, 1}, leaving s1 and s2
        # disjoint.
        mat = np.array([
            [0.5, 0.5, 0.5, 0.5],
            [0.5, 0.5, 0.5, 0.5],
            [-50.0, -50.0, -50.0, -50.0],
            [50.0, -50.0, -50.0, -50.0],
        ])
        cfg = SignGuardConfig(coord_ratio=1.0, clusterer="kmeans2")
        with pytest.raises(EmptyTrustedError, match="all clients filtered"):
            signguard.signguard_aggregate(mat, cfg)

    def test_deterministic(self, rng):
        mat = rng.normal(size=(10, 30))
        cfg = SignGuardConfig(seed=11)
        out_a, oc_a = signguard.signguard_aggregate(mat, cfg)
        out_b, oc_b = signguard.signguard_aggregate(mat, cfg)
        assert np.array_equal(out_a, out_b)
        assert oc_a.s1 == oc_b.s1 and oc_a.s2 == oc_b.s2
        assert oc_a.trusted == oc_b.trusted
        assert oc_a.median_norm == oc_b.median_norm
        feats_a = np.stack([f.values for f in oc_a.features])
        feats_b = np.stack([f.values for f in oc_b.features])
        assert np.array_equal(feats_a, feats_b)

    def test_subset_seed_controls_sampling(self, rng):
        mat = rng.normal(size=(6, 100))
        cfg = SignGuardConfig(coord_ratio=0.2, seed=1)
        _, a = signguard.signguard_aggregate(mat, cfg, subset_seed=5)
        _, b = signguard.signguard_aggregate(mat, cfg, subset_seed=5)
        feats_a = np.stack([f.values for f in a.features])
        feats_b = np.stack([f.values for f in b.features])
        assert np.array_equal(feats_a, feats_b)

    def test_sim_variant_excludes_reversed(self):
        mat = np.vstack([ones_block(8, 6), ones_block(2, 6, -1.0)])
        cfg = SignGuardConfig(variant="sim")
        out, outcome = signguard.signguard_aggregate(mat, cfg,
                                                     prev_global=np.ones(6))
        assert outcome.trusted == frozenset(range(8))

    def test_dist_variant_runs(self, rng):
        mat = rng.normal(size=(9, 15))
        cfg = SignGuardConfig(variant="dist")
        out, outcome = signguard.signguard_aggregate(mat, cfg,
                                                     prev_global=mat.mean(axis=0))
        assert out.shape == (15,)
        assert len(outcome.features[0].values) == 4

    def test_kmeans_fallback_clusterer(self):
        mat = np.vstack([ones_block(7, 5), ones_block(3, 5, -1.0)])
        cfg = SignGuardConfig(clusterer="kmeans2")
        out, outcome = signguard.signguard_aggregate(mat, cfg)
        assert outcome.trusted == frozenset(range(7))


class TestFilterOutcome:
    def test_trusted_must_be_subset(self):
        with pytest.raises(ValueError):
            FilterOutcome(s1=frozenset({0}), s2=frozenset({1}),
                          trusted=frozenset({2}), median_norm=1.0,
                          features=())
