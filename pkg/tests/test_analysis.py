"""Tests for the claim verifiers and the sign-trace extractor."""

import math

import numpy as np
import pytest

from byzsim import analysis, attacks, gradients
from byzsim.analysis import (
    Lemma1Report,
    Prop1Report,
    sign_flip_threshold_check,
    sign_trace,
    theorem1_constants,
    verify_lemma1,
    verify_prop1,
    window_means,
)
from byzsim.attacks import AttackContext, AttackSpec
from byzsim.datasets import make_synthetic_dataset
from byzsim.simulation import ExperimentConfig, run_experiment


class TestSignFlipThresholdCheck:
    def test_median_flips_before_mean(self):
        # mu/sigma = 0.5 < z = 0.6 < n*mu/(m*sigma) = 2.5
        median_flips, mean_flips = sign_flip_threshold_check(
            1.0, 2.0, 0.6, n=50, m=10)
        assert median_flips is True
        assert mean_flips is False

    def test_confirmation_instances_agree(self):
        check = sign_flip_threshold_check(1.0, 2.0, 0.6, n=50, m=10)
        assert check.median_confirmed and check.mean_confirmed
        assert check.median_aggregate < 0.0
        assert check.mean_aggregate > 0.0

    def test_thresholds_are_strict(self):
        # exactly at the boundary nothing flips
        at_median = sign_flip_threshold_check(1.0, 2.0, 0.5, n=9, m=3)
        assert at_median.median_flips is False
        assert at_median.median_aggregate == 0.0
        at_mean = sign_flip_threshold_check(1.0, 1.0, 3.0, n=9, m=3)
        assert at_mean.mean_flips is False
        assert at_mean.mean_aggregate == pytest.approx(0.0, abs=1e-12)

    def test_mean_instance_matches_closed_form(self):
        for n, m in [(50, 10), (7, 3), (12, 1), (9, 4)]:
            z = 1.7
            check = sign_flip_threshold_check(2.0, 0.5, z, n=n, m=m)
            expected = 2.0 - z * (m / n) * 0.5
            assert check.mean_aggregate == pytest.approx(expected, abs=1e-12)

    def test_median_instance_lands_on_crafted_value(self):
        for n, m in [(50, 10), (7, 3), (12, 1), (10, 2), (9, 1)]:
            check = sign_flip_threshold_check(1.0, 1.0, 1.25, n=n, m=m)
            assert check.median_aggregate == pytest.approx(1.0 - 1.25,
                                                           abs=1e-12)

    def test_mean_flip_verdict_and_instance(self):
        check = sign_flip_threshold_check(1.0, 1.0, 6.0, n=10, m=2)
        # threshold n*mu/(m*sigma) = 5 < 6
        assert check.mean_flips is True
        assert check.mean_aggregate == pytest.approx(1.0 - 6.0 * 0.2)
        assert check.mean_confirmed

    def test_confirmations_hold_across_random_parameters(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 40))
            m = int(rng.integers(1, n))
            mu = float(rng.uniform(0.1, 5.0))
            sigma = float(rng.uniform(0.1, 5.0))
            z = float(rng.uniform(0.0, 4.0) * mu / sigma)
            check = sign_flip_threshold_check(mu, sigma, z, n=n, m=m)
            assert check.median_confirmed, (n, m, mu, sigma, z)
            assert check.mean_confirmed, (n, m, mu, sigma, z)

    @pytest.mark.parametrize("kwargs", [
        dict(mu_j=0.0, sigma_j=1.0, z=1.0, n=5, m=1),
        dict(mu_j=1.0, sigma_j=0.0, z=1.0, n=5, m=1),
        dict(mu_j=1.0, sigma_j=1.0, z=-0.1, n=5, m=1),
        dict(mu_j=1.0, sigma_j=1.0, z=1.0, n=5, m=0),
        dict(mu_j=1.0, sigma_j=1.0, z=1.0, n=5, m=5),
    ])
    def test_rejects_degenerate_inputs(self, kwargs):
        with pytest.raises(ValueError):
            sign_flip_threshold_check(**kwargs)


@pytest.fixture(scope="module")
def gaussian_ctx():
    rng = np.random.default_rng(99)
    honest = 1.0 + 0.5 * rng.standard_normal((40, 100))
    return AttackContext(honest=honest, n=50, m=10)


class TestVerifyProp1:
    def test_small_z_blends_in(self, gaussian_ctx):
        report = verify_prop1(gaussian_ctx, z=0.1, trials=100, seed=5)
        assert report.exists_closer
        assert report.exists_less_similar
        assert report.closer_fraction >= 0.95
        assert report.less_similar_fraction >= 0.95
        assert report.dist_malicious <= report.bound_dist
        assert report.identity_max_rel_err <= 1e-10
        assert report.xi_condition_violations == 0

    def test_per_client_lists_cover_honest_cohort(self, gaussian_ctx):
        report = verify_prop1(gaussian_ctx, z=0.1, trials=5, seed=5)
        assert len(report.dist_honest) == 40
        assert len(report.cos_honest) == 40
        assert len(report.xi_honest) == 40
        assert all(d >= 0.0 for d in report.dist_honest)
        assert all(-1.0 <= c <= 1.0 for c in report.cos_honest)

    def test_zero_z_sits_at_the_average(self, gaussian_ctx):
        report = verify_prop1(gaussian_ctx, z=0.0, trials=20, seed=5)
        # crafted vector equals the honest mean, hence the all-client mean
        assert report.dist_malicious == pytest.approx(0.0, abs=1e-18)
        assert report.dist_attacker_identity == 0.0
        assert report.cos_malicious == pytest.approx(1.0, abs=1e-12)
        assert report.closer_fraction == 1.0

    def test_attacker_identity_scales_quadratically(self, gaussian_ctx):
        one = verify_prop1(gaussian_ctx, z=0.1, trials=10, seed=5)
        two = verify_prop1(gaussian_ctx, z=0.2, trials=10, seed=5)
        # same seed resamples the same populations, so the identity
        # z^2 * sum(var) must scale exactly with z^2
        assert two.dist_attacker_identity == pytest.approx(
            4.0 * one.dist_attacker_identity, rel=1e-12)

    def test_identity_convention_exceeds_all_client_convention(
            self, gaussian_ctx):
        # against the all-client average the crafted offset shrinks by
        # (n - m) / n, so the attacker-side identity is always larger
        report = verify_prop1(gaussian_ctx, z=0.5, trials=20, seed=5)
        assert report.dist_malicious < report.dist_attacker_identity
        assert report.dist_attacker_identity <= report.bound_dist

    def test_deterministic_given_seed(self, gaussian_ctx):
        a = verify_prop1(gaussian_ctx, z=0.3, trials=8, seed=2)
        b = verify_prop1(gaussian_ctx, z=0.3, trials=8, seed=2)
        assert a == b

    def test_norm_ratio_near_one_for_small_z(self, gaussian_ctx):
        report = verify_prop1(gaussian_ctx, z=0.1, trials=50, seed=5)
        assert report.xi_m == pytest.approx(1.0, abs=0.05)
        assert all(abs(x - 1.0) < 0.5 for x in report.xi_honest)

    def test_rejects_bad_arguments(self, gaussian_ctx):
        with pytest.raises(ValueError):
            verify_prop1(gaussian_ctx, z=-0.1)
        with pytest.raises(ValueError):
            verify_prop1(gaussian_ctx, z=0.1, trials=0)
        single = AttackContext(honest=np.ones((1, 3)), n=1, m=0)
        with pytest.raises(ValueError):
            verify_prop1(single, z=0.1)

    def test_report_validation(self):
        with pytest.raises(ValueError):
            Prop1Report(
                z=0.1, trials=1, dist_malicious=1.0,
                dist_attacker_identity=1.0, identity_max_rel_err=0.0,
                dist_honest=(1.0, 2.0),
                cos_malicious=0.5, cos_honest=(0.5,), bound_dist=1.0,
                xi_m=1.0, xi_honest=(1.0, 1.0), exists_closer=True,
                exists_less_similar=True, closer_fraction=1.0,
                less_similar_fraction=1.0, xi_condition_violations=0)
        with pytest.raises(ValueError):
            Prop1Report(
                z=0.1, trials=1, dist_malicious=1.0,
                dist_attacker_identity=1.0, identity_max_rel_err=0.0,
                dist_honest=(1.0,),
                cos_malicious=0.5, cos_honest=(0.5,), bound_dist=1.0,
                xi_m=1.0, xi_honest=(1.0,), exists_closer=True,
                exists_less_similar=True, closer_fraction=1.5,
                less_similar_fraction=1.0, xi_condition_violations=0)


class TestVerifyLemma1:
    def test_no_exclusion_matches_noise_floor(self):
        report = verify_lemma1(n=10, beta=0.0, sigma=1.0, kappa=0.0,
                               trials=1000, seed=0)
        nominal = 1.0 / 10
        assert report.empirical_dev == pytest.approx(nominal, rel=0.1)
        assert report.bound == pytest.approx(
            report.sigma_hat ** 2 / 10, rel=1e-12)

    def test_pure_noise_sits_at_the_bound(self):
        # with kappa = 0 and random subsets the bound is tight, so the
        # measurement must straddle it closely
        report = verify_lemma1(n=8, beta=0.25, sigma=1.0, kappa=0.0,
                               trials=1500, seed=3)
        assert report.empirical_dev == pytest.approx(report.bound, rel=0.08)

    def test_adversarial_heterogeneity_stays_below_bound(self):
        report = verify_lemma1(n=10, beta=0.2, sigma=0.0, kappa=1.0,
                               trials=1, seed=1, subset="adversarial")
        assert report.empirical_dev > 0.0
        assert report.empirical_dev <= report.bound + 1e-12
        assert report.kappa_hat == pytest.approx(1.0, abs=1e-12)
        assert report.sigma_hat == 0.0

    def test_adversarial_never_below_random(self):
        # same seed regenerates the same noise, and the worst subset
        # dominates any sampled one trial by trial
        kwargs = dict(n=8, beta=0.25, sigma=0.5, kappa=1.0, trials=50,
                      seed=7)
        adv = verify_lemma1(subset="adversarial", **kwargs)
        rand = verify_lemma1(subset="random", **kwargs)
        assert adv.empirical_dev >= rand.empirical_dev

    def test_centering_is_exact(self):
        # no noise, nothing excluded: the kept average is the global
        # gradient itself
        report = verify_lemma1(n=6, beta=0.0, sigma=0.0, kappa=2.0,
                               trials=1, seed=4)
        # deviations cancel down to float roundoff
        assert report.empirical_dev < 1e-30
        assert report.kappa_hat == pytest.approx(2.0, abs=1e-12)

    def test_deviation_magnitude_hits_kappa(self):
        report = verify_lemma1(n=12, beta=0.25, sigma=0.0, kappa=3.5,
                               trials=2, seed=0)
        assert report.kappa_hat == pytest.approx(3.5, abs=1e-12)

    @pytest.mark.parametrize("kwargs", [
        dict(n=0, beta=0.0, sigma=1.0, kappa=1.0),
        dict(n=10, beta=0.5, sigma=1.0, kappa=1.0),
        dict(n=10, beta=-0.1, sigma=1.0, kappa=1.0),
        dict(n=10, beta=0.15, sigma=1.0, kappa=1.0),
        dict(n=10, beta=0.2, sigma=-1.0, kappa=1.0),
        dict(n=10, beta=0.2, sigma=1.0, kappa=-1.0),
        dict(n=10, beta=0.2, sigma=1.0, kappa=1.0, trials=0),
        dict(n=10, beta=0.2, sigma=1.0, kappa=1.0, d=0),
        dict(n=10, beta=0.2, sigma=1.0, kappa=1.0, subset="worst"),
        dict(n=14, beta=0.5 - 1e-9, sigma=1.0, kappa=1.0,
             subset="adversarial"),
    ])
    def test_rejects_bad_arguments(self, kwargs):
        with pytest.raises(ValueError):
            verify_lemma1(**kwargs)

    def test_adversarial_needs_small_cohorts(self):
        with pytest.raises(ValueError):
            verify_lemma1(n=16, beta=0.25, sigma=1.0, kappa=1.0,
                          subset="adversarial")

    def test_report_validation(self):
        with pytest.raises(ValueError):
            Lemma1Report(beta=0.2, kappa_hat=1.0, sigma_hat=1.0,
                         empirical_dev=-0.1, bound=1.0, subset="random",
                         trials=10)
        with pytest.raises(ValueError):
            Lemma1Report(beta=0.2, kappa_hat=1.0, sigma_hat=1.0,
                         empirical_dev=0.1, bound=1.0, subset="worst",
                         trials=10)


class TestTheoremConstants:
    def test_clean_setting_collapses_to_sampling_noise(self):
        tc = theorem1_constants(c=3.0, b=0.0, delta=0.0, beta=0.0,
                                sigma=0.7, kappa=2.0, n=10)
        assert tc.delta2 == 0.0
        assert tc.delta1 == pytest.approx(2.0 * 0.7 ** 2 / 10, rel=1e-15)

    def test_all_zero_population_has_zero_error(self):
        tc = theorem1_constants()
        assert tc.delta1 == 0.0 and tc.delta2 == 0.0

    def test_hand_evaluated_point(self):
        tc = theorem1_constants(c=1.0, b=0.1, delta=0.01, beta=0.2,
                                sigma=1.0, kappa=1.0, n=50)
        # 4*0.01*2 + 2*0.01 + 2*0.04/0.64 + 2/(0.8*50)
        assert tc.delta1 == pytest.approx(0.275, abs=1e-12)
        # 4*0.1*2 + 0.2/0.64
        assert tc.delta2 == pytest.approx(1.1125, abs=1e-12)

    def test_learning_rate_ceiling(self):
        tc = theorem1_constants(smoothness=0.5)
        assert tc.max_learning_rate == pytest.approx(1.0)
        ok = theorem1_constants(smoothness=0.5, learning_rate=0.9)
        assert ok.learning_rate_ok is True
        too_big = theorem1_constants(smoothness=0.5, learning_rate=1.1)
        assert too_big.learning_rate_ok is False

    def test_ceiling_shrinks_with_adversaries(self):
        clean = theorem1_constants(smoothness=1.0)
        dirty = theorem1_constants(smoothness=1.0, beta=0.3, delta=0.09)
        assert clean.max_learning_rate == pytest.approx(0.5)
        expected = (2.0 - 0.3 - 0.6) / 4.0
        assert dirty.max_learning_rate == pytest.approx(expected)

    def test_zero_smoothness_means_no_ceiling(self):
        tc = theorem1_constants(smoothness=0.0)
        assert tc.max_learning_rate == math.inf

    def test_without_smoothness_no_ceiling_reported(self):
        tc = theorem1_constants(beta=0.1)
        assert tc.max_learning_rate is None
        assert tc.learning_rate_ok is None

    def test_mean_grad_sq_bound_formula(self):
        tc = theorem1_constants(c=1.0, b=0.1, delta=0.01, beta=0.2,
                                sigma=1.0, kappa=1.0, n=50,
                                smoothness=2.0, learning_rate=0.05)
        got = tc.mean_grad_sq_bound(loss_gap=3.0, rounds=100)
        expected = 2.0 * 3.0 / (0.05 * 100) \
            + 2.0 * 2.0 * 0.05 * tc.delta1 + tc.delta2
        assert got == pytest.approx(expected, rel=1e-15)

    def test_mean_grad_sq_bound_requires_rate_and_smoothness(self):
        tc = theorem1_constants(n=10)
        with pytest.raises(ValueError):
            tc.mean_grad_sq_bound(loss_gap=1.0, rounds=10)
        with_rate = theorem1_constants(n=10, smoothness=1.0,
                                       learning_rate=0.1)
        with pytest.raises(ValueError):
            with_rate.mean_grad_sq_bound(loss_gap=-1.0, rounds=10)
        with pytest.raises(ValueError):
            with_rate.mean_grad_sq_bound(loss_gap=1.0, rounds=0)

    def test_error_terms_monotone_in_every_constant(self, rng):
        for _ in range(100):
            beta = float(rng.uniform(0.05, 0.45))
            base = dict(
                c=float(rng.uniform(0.0, 2.0)),
                b=float(rng.uniform(0.0, 2.0)),
                delta=float(rng.uniform(0.0, beta)),
                beta=beta,
                sigma=float(rng.uniform(0.0, 2.0)),
                kappa=float(rng.uniform(0.0, 2.0)),
                n=int(rng.integers(1, 100)),
            )
            ref = theorem1_constants(**base)
            bumps = {
                "c": base["c"] + 0.5,
                "b": base["b"] + 0.5,
                "delta": base["delta"] + 0.5 * (beta - base["delta"]),
                "beta": beta + 0.5 * (0.499 - beta),
                "sigma": base["sigma"] + 0.5,
                "kappa": base["kappa"] + 0.5,
            }
            for key, value in bumps.items():
                bumped = theorem1_constants(**{**base, key: value})
                assert bumped.delta1 >= ref.delta1 - 1e-12, key
                assert bumped.delta2 >= ref.delta2 - 1e-12, key

    @pytest.mark.parametrize("kwargs", [
        dict(beta=0.5),
        dict(beta=0.2, delta=0.3),
        dict(c=-0.1),
        dict(sigma=-1.0),
        dict(n=0),
        dict(smoothness=-1.0),
        dict(smoothness=1.0, learning_rate=0.0),
        dict(learning_rate=0.1),
    ])
    def test_rejects_bad_arguments(self, kwargs):
        with pytest.raises(ValueError):
            theorem1_constants(**kwargs)


@pytest.fixture(scope="module")
def tiny_run():
    ds = make_synthetic_dataset(4, 60, 2, 4.0, seed=7, scale=0.3)
    cfg = ExperimentConfig(ds, n_clients=5, byz_fraction=0.2,
                           attack=AttackSpec(kind="signflip"), rounds=3,
                           momentum=0.0, batch_size=4, weight_decay=0.0,
                           seed=3)
    return run_experiment(cfg, compute_baseline=False)


class TestSignTrace:
    def test_rows_align_with_reports(self, tiny_run):
        rows = sign_trace(tiny_run.reports)
        assert [r.round_index for r in rows] == [0, 1, 2]
        for row, report in zip(rows, tiny_run.reports):
            assert row.honest == report.honest_sign
            assert row.malicious == report.malicious_sign

    def test_sign_flip_swaps_positive_and_negative(self, tiny_run):
        for row in sign_trace(tiny_run.reports):
            assert row.malicious is not None
            assert row.malicious.pos_frac == pytest.approx(
                row.honest.neg_frac, abs=1e-12)
            assert row.malicious.neg_frac == pytest.approx(
                row.honest.pos_frac, abs=1e-12)

    def test_attack_free_rounds_have_no_malicious_entry(self):
        ds = make_synthetic_dataset(4, 60, 2, 4.0, seed=7, scale=0.3)
        cfg = ExperimentConfig(ds, n_clients=5, byz_fraction=0.2,
                               rounds=2, momentum=0.0, batch_size=4,
                               weight_decay=0.0, seed=3)
        result = run_experiment(cfg, compute_baseline=False)
        assert all(r.malicious is None
                   for r in sign_trace(result.reports))

    def test_strong_lie_skews_negative(self, rng):
        # crafted coordinates sit two standard deviations below means
        # that are only one deviation above zero, so the crafted vector
        # turns mostly negative while the honest mean stays positive
        honest = 0.5 + 0.5 * rng.standard_normal((40, 200))
        ctx = AttackContext(honest=honest, n=50, m=10)
        crafted = attacks.craft_lie(ctx, 2.0)
        honest_sign = gradients.sign_stats(honest.mean(axis=0))
        mal_sign = gradients.sign_stats(crafted)
        assert mal_sign.neg_frac - honest_sign.neg_frac > 0.3
        assert mal_sign.neg_frac > 0.9
        assert honest_sign.neg_frac < 0.05


class TestWindowMeans:
    def test_fixed_windows(self):
        assert window_means([1, 2, 3, 4, 5, 6, 7], 2) == [1.5, 3.5, 5.5]

    def test_window_one_is_identity(self):
        assert window_means([3.0, 1.0], 1) == [3.0, 1.0]

    def test_oversized_window_yields_nothing(self):
        assert window_means([1.0, 2.0], 5) == []

    def test_rejects_bad_window(self):
        with pytest.raises(ValueError):
            window_means([1.0], 0)
