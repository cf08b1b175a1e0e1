"""Distribution primitives against independent oracles: per-dimension
decomposition, central finite differences, Monte Carlo moments, and 1-D
quadrature."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from mcsa.distributions import (
    DefensiveMixture,
    FullGaussian,
    HeavyTail,
    VariationalParams,
    chi2_gaussian,
    kl_gaussian,
    log_density_diag,
    log_w_star_gaussian,
    mixture_log_density,
    sample_diag,
    sample_mixture,
    sample_wishart_target,
    score_diag,
    w_star_gaussian,
)

STD_NORMAL_AT_MODE = -0.5 * math.log(2 * math.pi)  # -0.9189385...


def random_params(rng, d, mean_scale=2.0, log_scale_range=1.0):
    return VariationalParams(mean_scale * rng.standard_normal(d),
                             rng.uniform(-log_scale_range, log_scale_range, d))


class TestLogDensityDiag:
    def test_standard_normal_at_mode(self):
        p = VariationalParams(np.zeros(1), np.zeros(1))
        assert math.isclose(log_density_diag(p, np.zeros(1)), STD_NORMAL_AT_MODE, rel_tol=1e-12)

    def test_unit_quadratic_term(self):
        p = VariationalParams(np.zeros(1), np.zeros(1))
        assert math.isclose(log_density_diag(p, np.ones(1)), STD_NORMAL_AT_MODE - 0.5,
                            rel_tol=1e-12)

    def test_decomposes_over_dimensions(self):
        rng = np.random.default_rng(101)
        p = random_params(rng, 3)
        z = rng.standard_normal(3)
        per_dim = sum(
            log_density_diag(VariationalParams(p.mean[i:i + 1], p.log_scale[i:i + 1]),
                             z[i:i + 1])
            for i in range(3)
        )
        assert math.isclose(log_density_diag(p, z), per_dim, rel_tol=1e-12)

    def test_dimension_mismatch(self):
        p = VariationalParams(np.zeros(2), np.zeros(2))
        with pytest.raises(ValueError):
            log_density_diag(p, np.zeros(3))


class TestScoreDiag:
    def test_at_mode(self):
        p = VariationalParams(np.zeros(1), np.zeros(1))
        np.testing.assert_allclose(score_diag(p, np.zeros(1)), [0.0, -1.0], atol=1e-15)

    def test_unit_residual_zeroes_scale_score(self):
        p = VariationalParams(np.zeros(1), np.zeros(1))
        np.testing.assert_allclose(score_diag(p, np.ones(1)), [1.0, 0.0], atol=1e-15)

    def test_matches_finite_differences(self):
        # central differences of log_density_diag in each parameter, step 1e-5
        rng = np.random.default_rng(7)
        h = 1e-5
        for _ in range(50):
            d = rng.integers(1, 6)
            p = random_params(rng, d)
            z = p.mean + p.scale * rng.standard_normal(d) * 2
            analytic = score_diag(p, z)
            vec = p.as_vector()
            fd = np.empty(2 * d)
            for i in range(2 * d):
                up, dn = vec.copy(), vec.copy()
                up[i] += h
                dn[i] -= h
                fd[i] = (log_density_diag(VariationalParams.from_vector(up), z)
                         - log_density_diag(VariationalParams.from_vector(dn), z)) / (2 * h)
            denom = np.maximum(np.abs(fd), 1e-8)
            assert np.max(np.abs(analytic - fd) / denom) < 1e-6


class TestSampleDiag:
    def test_degenerate_scale_collapses_to_mean(self):
        rng = np.random.default_rng(0)
        p = VariationalParams(np.full(4, 1.5), np.full(4, -20.0))
        z = sample_diag(p, rng)
        assert np.max(np.abs(z - 1.5)) < 1e-8

    def test_clt_mean(self):
        rng = np.random.default_rng(1)
        p = VariationalParams(np.array([0.7]), np.array([0.3]))
        draws = sample_diag(p, rng, size=10**6)
        se = p.scale[0] / math.sqrt(10**6)
        assert abs(draws.mean() - 0.7) < 4 * se

    def test_seed_determinism(self):
        p = VariationalParams(np.zeros(3), np.zeros(3))
        a = sample_diag(p, np.random.default_rng(42), size=10)
        b = sample_diag(p, np.random.default_rng(42), size=10)
        np.testing.assert_array_equal(a, b)


class TestMixture:
    def setup_method(self):
        self.params = VariationalParams(np.array([0.5, -0.2]), np.array([0.1, -0.3]))

    def test_alpha_near_one_recovers_variational(self):
        mix = DefensiveMixture(1 - 1e-12, self.params,
                               HeavyTail(5.0, self.params.mean, self.params.scale))
        z = np.array([0.3, 0.1])
        assert abs(mixture_log_density(mix, z) - log_density_diag(self.params, z)) < 1e-9

    def test_equal_components_give_common_value(self):
        # find a point where the two component densities cross (bisection oracle)
        p = VariationalParams(np.zeros(1), np.zeros(1))
        tail = HeavyTail(5.0, np.zeros(1), np.ones(1))
        gap = lambda z: log_density_diag(p, np.array([z])) - tail.log_density(np.array([z]))
        lo, hi = 0.0, 5.0
        assert gap(lo) > 0 > gap(hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if gap(mid) > 0 else (lo, mid)
        z_star = np.array([0.5 * (lo + hi)])
        common = log_density_diag(p, z_star)
        mix = DefensiveMixture(0.37, p, tail)
        assert abs(mixture_log_density(mix, z_star) - common) < 1e-9

    def test_matches_direct_evaluation(self):
        rng = np.random.default_rng(3)
        mix = DefensiveMixture.from_variational(self.params, alpha=0.9)
        for _ in range(20):
            z = rng.standard_normal(2)
            direct = math.log(0.9 * math.exp(log_density_diag(self.params, z))
                              + 0.1 * math.exp(mix.tail.log_density(z)))
            assert math.isclose(mixture_log_density(mix, z), direct, rel_tol=1e-12)

    def test_tail_lower_bound(self):
        rng = np.random.default_rng(4)
        mix = DefensiveMixture.from_variational(self.params, alpha=0.95)
        z = rng.standard_normal((1000, 2)) * 5
        lower = math.log(0.05) + mix.tail.log_density(z)
        assert np.all(mixture_log_density(mix, z) >= lower - 1e-12)

    def test_alpha_domain(self):
        tail = HeavyTail(5.0, np.zeros(2), np.ones(2))
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                DefensiveMixture(bad, self.params, tail)

    def test_sampling_moments(self):
        rng = np.random.default_rng(5)
        mix = DefensiveMixture.from_variational(self.params, alpha=0.8, tail_df=5.0)
        draws = sample_mixture(mix, rng, size=200_000)
        # both components share the location, so the mean is the location
        np.testing.assert_allclose(draws.mean(axis=0), self.params.mean, atol=0.02)


class TestWishartTarget:
    def test_one_dimensional_chi_square_moment(self):
        rng = np.random.default_rng(11)
        n = 10**4
        draws = np.array([sample_wishart_target(1, 500.0, rng).cov[0, 0] for _ in range(n)])
        # variance of chi2_nu / nu is 2 / nu
        se = math.sqrt(2.0 / 500.0 / n)
        assert abs(draws.mean() - 1.0) < 4 * se

    def test_factor_validity(self):
        rng = np.random.default_rng(12)
        g = sample_wishart_target(6, 10.0, rng)
        assert np.all(np.diag(g.cov_factor) > 0)
        cov = g.cov
        np.testing.assert_allclose(cov, cov.T, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(cov) > 0)

    def test_seed_reproducibility(self):
        a = sample_wishart_target(4, 9.0, np.random.default_rng(13))
        b = sample_wishart_target(4, 9.0, np.random.default_rng(13))
        np.testing.assert_array_equal(a.cov_factor, b.cov_factor)

    def test_rank_deficient_rejected(self):
        with pytest.raises(ValueError):
            sample_wishart_target(5, 3.0, np.random.default_rng(0))


class TestKlGaussian:
    def test_identical_is_zero(self):
        p = VariationalParams(np.array([1.0, 2.0]), np.array([0.2, -0.1]))
        assert abs(kl_gaussian(p, p)) < 1e-14

    def test_unit_mean_shift(self):
        p = VariationalParams(np.zeros(1), np.zeros(1))
        q = VariationalParams(np.ones(1), np.zeros(1))
        assert math.isclose(kl_gaussian(p, q), 0.5, rel_tol=1e-12)

    def test_against_monte_carlo(self):
        rng = np.random.default_rng(21)
        n = 10**6
        p = FullGaussian(rng.standard_normal(5),
                         np.linalg.cholesky(_random_spd(rng, 5)))
        q = FullGaussian(rng.standard_normal(5),
                         np.linalg.cholesky(_random_spd(rng, 5)))
        z = p.sample(rng, size=n)
        diffs = p.log_density(z) - q.log_density(z)
        se = diffs.std(ddof=1) / math.sqrt(n)
        assert abs(kl_gaussian(p, q) - diffs.mean()) < 3 * se

    def test_nonnegative_with_equality_iff_equal(self):
        rng = np.random.default_rng(22)
        for _ in range(10):
            p = random_params(rng, 3)
            q = random_params(rng, 3)
            assert kl_gaussian(p, q) > 0
        p = random_params(rng, 3)
        assert kl_gaussian(p, p) == pytest.approx(0.0, abs=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kl_gaussian(VariationalParams(np.zeros(2), np.zeros(2)),
                        VariationalParams(np.zeros(3), np.zeros(3)))


def _random_spd(rng, d):
    a = rng.standard_normal((d, d))
    return a @ a.T + d * np.eye(d)


class TestChi2Gaussian:
    def test_identical_is_zero(self):
        p = VariationalParams(np.array([0.3]), np.array([0.1]))
        assert abs(chi2_gaussian(p, p)) < 1e-12

    def test_divergence_condition(self):
        p = VariationalParams(np.zeros(1), np.zeros(1))
        q = VariationalParams(np.zeros(1), np.array([0.5 * math.log(0.4)]))
        assert chi2_gaussian(p, q) == math.inf
        # just either side of the sigma_q^2 = sigma_p^2 / 2 boundary
        below = VariationalParams(np.zeros(1), np.array([0.5 * math.log(0.49)]))
        above = VariationalParams(np.zeros(1), np.array([0.5 * math.log(0.51)]))
        assert chi2_gaussian(p, below) == math.inf
        assert math.isfinite(chi2_gaussian(p, above))

    def test_against_quadrature(self):
        # numerical integral of (p/q - 1)^2 q over [-40, 40]
        cases = [
            (0.0, 1.0, 0.0, 2.0),
            (0.0, 1.0, 0.5, 1.8),
            (1.0, 0.5, 0.8, 1.1),
            (-0.4, 1.2, 0.0, 3.0),
            (2.0, 1.0, 2.5, 2.2),
        ]
        for mp, vp, mq, vq in cases:
            def integrand(z):
                lp = -0.5 * (z - mp) ** 2 / vp - 0.5 * math.log(2 * math.pi * vp)
                lq = -0.5 * (z - mq) ** 2 / vq - 0.5 * math.log(2 * math.pi * vq)
                return (math.exp(lp - lq) - 1.0) ** 2 * math.exp(lq)

            expected, _ = quad(integrand, -40, 40, epsabs=1e-12, limit=400)
            p = VariationalParams(np.array([mp]), np.array([0.5 * math.log(vp)]))
            q = VariationalParams(np.array([mq]), np.array([0.5 * math.log(vq)]))
            assert abs(chi2_gaussian(p, q) - expected) < 1e-8

    def test_equals_weight_variance(self):
        # chi2(p||q) = Var_q[p/q], Monte Carlo within 3 SE
        rng = np.random.default_rng(31)
        n = 10**6
        p = VariationalParams(np.array([0.2, -0.1]), np.array([0.0, 0.1]))
        q = VariationalParams(np.array([0.0, 0.0]), np.array([0.4, 0.5]))
        z = sample_diag(q, rng, size=n)
        w = np.exp(log_density_diag(p, z) - log_density_diag(q, z))
        x = (w - w.mean()) ** 2
        var_w = x.mean() * n / (n - 1)
        se_var = x.std(ddof=1) / math.sqrt(n)
        assert abs(chi2_gaussian(p, q) - var_w) < 3 * se_var

    def test_full_rank_against_mc(self):
        rng = np.random.default_rng(32)
        p = FullGaussian(np.array([0.1, -0.2]), np.linalg.cholesky(_random_spd(rng, 2)))
        q = FullGaussian(np.zeros(2), np.linalg.cholesky(4 * _random_spd(rng, 2)))
        n = 10**6
        z = q.sample(rng, size=n)
        w = np.exp(p.log_density(z) - q.log_density(z))
        x = (w - w.mean()) ** 2
        se_var = x.std(ddof=1) / math.sqrt(n)
        assert abs(chi2_gaussian(p, q) - x.mean()) < 4 * se_var


class TestWStar:
    def test_identical_is_one(self):
        p = VariationalParams(np.array([0.3, 1.0]), np.array([0.2, -0.5]))
        assert math.isclose(w_star_gaussian(p, p), 1.0, rel_tol=1e-12)

    def test_variance_two_envelope(self):
        p = VariationalParams(np.zeros(1), np.zeros(1))
        q = VariationalParams(np.zeros(1), np.array([0.5 * math.log(2.0)]))
        assert math.isclose(w_star_gaussian(p, q), math.sqrt(2.0), rel_tol=1e-12)

    def test_narrower_q_is_infinite(self):
        p = VariationalParams(np.zeros(3), np.zeros(3))
        q = VariationalParams(np.zeros(3), np.array([0.1, -0.2, 0.1]))
        assert w_star_gaussian(p, q) == math.inf

    def test_supremum_dominates_sampled_ratios(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            d = rng.integers(1, 4)
            p = random_params(rng, d, log_scale_range=0.5)
            q = VariationalParams(p.mean + rng.standard_normal(d) * 0.5,
                                  p.log_scale + rng.uniform(0.1, 0.8, d))
            log_w = log_w_star_gaussian(p, q)
            z = sample_diag(p, rng, size=2000)
            ratios = log_density_diag(p, z) - log_density_diag(q, z)
            assert np.all(ratios <= log_w + 1e-12)

    def test_exp_kl_below_w_star(self):
        # strict lower bound over 100 random finite-w* non-identical pairs
        rng = np.random.default_rng(42)
        for _ in range(100):
            d = rng.integers(1, 5)
            p = random_params(rng, d, log_scale_range=0.5)
            q = VariationalParams(p.mean + rng.standard_normal(d),
                                  p.log_scale + rng.uniform(0.05, 1.0, d))
            assert kl_gaussian(p, q) < log_w_star_gaussian(p, q)
