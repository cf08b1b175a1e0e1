"""Engine backends against each other and against the reference-lane
estimators: same streams, same math, interchangeable results."""

import importlib
import math

import numpy as np
import pytest

import mcsa.engine as engine
from mcsa.distributions import (
    DefensiveMixture,
    FullGaussian,
    TargetModel,
    VariationalParams,
    kl_gaussian,
    sample_wishart_target,
)
from mcsa.engine import (
    GaussianSetup,
    conditional_gradient_replicates,
    recording_points,
    replicated_variance_trace,
    run_optimization,
)
from mcsa.engine import _numba as numba_backend
from mcsa.engine import _numpy as numpy_backend
from mcsa.rng import substream


def small_setup(d=3, offset=1.0, alpha=0.95):
    target = FullGaussian.isotropic(np.full(d, offset), 1.0)
    lam0 = VariationalParams(np.zeros(d), np.zeros(d))
    mix = DefensiveMixture.from_variational(lam0, alpha=alpha)
    return GaussianSetup.create(target, mix), lam0


def run_backend(impl, method_code, seed, d=3, n_budget=4, iters=200, opt=3, sched=0):
    setup, lam0 = small_setup(d)
    rng = substream(seed, 1)
    rec = recording_points(iters, 20)
    return impl.run_chain(
        rng, method_code, n_budget, rec,
        setup.p_mean, setup.p_chol, setup.p_cov_diag, setup.p_logdet,
        lam0.mean.copy(), lam0.log_scale.copy(),
        setup.t_loc, setup.t_scale, setup.t_df, setup.alpha,
        opt, sched, 0.05, 0.9, 0.9, 0.999, 1e-8, 1e12, True)


@pytest.mark.parametrize("method_code", [0, 1, 2, 3, 4])
def test_backend_parity_run_chain(method_code):
    kls_a, accs_a, lams_a, div_a = run_backend(numpy_backend, method_code, 77)
    kls_b, accs_b, lams_b, div_b = run_backend(numba_backend, method_code, 77)
    assert div_a == div_b
    np.testing.assert_allclose(kls_a, kls_b, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(lams_a, lams_b, rtol=1e-9, atol=1e-12)
    if method_code != 4:
        np.testing.assert_allclose(accs_a[1:], accs_b[1:], atol=1e-12)


@pytest.mark.parametrize("method", ["CIS", "CISRB", "JSA", "PIMH"])
def test_backend_parity_gradient_replicates(method):
    target = FullGaussian.isotropic(np.zeros(1), 1.0)
    setup = GaussianSetup.create(target, alpha=1.0)
    q = VariationalParams(np.array([2.0]), np.array([0.5 * math.log(2.0)]))
    z_with_prev = np.zeros(1)
    grads = {}
    for impl_name, impl in (("numpy", numpy_backend), ("numba", numba_backend)):
        rng = substream(5, 2)
        grads[impl_name] = impl.gradient_replicates(
            rng, engine._codes.METHOD_CODES[method], 8, 256, z_with_prev,
            setup.p_mean, setup.p_chol, setup.p_cov_diag, setup.p_logdet,
            q.mean, q.log_scale, setup.t_loc, setup.t_scale, setup.t_df,
            setup.alpha)
    np.testing.assert_allclose(grads["numpy"], grads["numba"], rtol=1e-9, atol=1e-12)


def test_backend_parity_replicated_variance():
    setup, lam0 = small_setup(d=2)
    trace = np.stack([np.concatenate([lam0.mean, lam0.log_scale]),
                      np.array([0.1, 0.2, -0.05, 0.0])])
    outs = []
    for impl in (numpy_backend, numba_backend):
        rng = substream(9, 3)
        outs.append(impl.replicated_variance(
            rng, 3, 4, trace, 32,
            setup.p_mean, setup.p_chol, setup.p_cov_diag, setup.p_logdet,
            setup.t_loc, setup.t_scale, setup.t_df, setup.alpha))
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-9)


def test_engine_matches_reference_lane_stationary_mean():
    """Engine PIMH replicates agree statistically with the estimators module."""
    from mcsa.diagnostics import conditional_variance
    from mcsa.kernels import KernelContext

    d = 1
    target = FullGaussian.isotropic(np.zeros(d), 1.0)
    q = VariationalParams(np.array([1.0]), np.array([0.3]))
    mix = DefensiveMixture.from_variational(q, alpha=0.9)
    setup = GaussianSetup.create(target, mix)

    reps = 2**13
    grads = conditional_gradient_replicates(substream(11, 0), "PIMH", 8, reps,
                                            np.zeros(d), setup, q)
    engine_var = float(np.sum(grads.var(axis=0, ddof=1)))
    ctx = KernelContext(TargetModel.from_gaussian(target), mix, substream(11, 1))
    ref = conditional_variance("PIMH", ctx, np.zeros(d), 8, reps)
    assert engine_var == pytest.approx(ref.variance, rel=0.15)
    np.testing.assert_allclose(grads.mean(axis=0), ref.mean_grad, atol=0.05)


def test_run_optimization_descends_and_records():
    setup, lam0 = small_setup(d=5, offset=2.0)
    rec = recording_points(800, 100)
    kls, accs, lams, diverged = run_optimization(
        substream(13, 0), "PMCSA", 16, setup, lam0, "adam", "constant", 0.05, rec,
        record_lambda=True)
    assert diverged == -1
    assert kls[0] == pytest.approx(kl_gaussian(setup_target(setup), lam0), rel=1e-12)
    assert kls[-1] < 0.2 * kls[0]
    assert lams.shape == (len(rec), 10)
    assert np.all((accs[1:] >= 0) & (accs[1:] <= 1))


def setup_target(setup):
    return FullGaussian(setup.p_mean, setup.p_chol)


def test_kl_formula_against_distributions_module():
    rng = np.random.default_rng(17)
    target = sample_wishart_target(6, 30.0, rng)
    q = VariationalParams(rng.standard_normal(6), rng.uniform(-0.4, 0.4, 6))
    setup = GaussianSetup.create(target, alpha=1.0)
    got = numpy_backend._kl_to_diag(setup.p_mean, setup.p_cov_diag, setup.p_logdet,
                                    q.mean, q.log_scale)
    assert got == pytest.approx(kl_gaussian(target, q), rel=1e-12)


def test_divergence_flag_and_partial_trace():
    # SGD with an absurd stepsize must blow up and be flagged, not NaN-crash
    setup, lam0 = small_setup(d=4, offset=5.0)
    rec = recording_points(500, 50)
    kls, accs, lams, diverged = run_optimization(
        substream(19, 0), "MSC", 8, setup, lam0, "sgd", "constant", 50.0, rec)
    assert diverged > 0
    recorded = kls[~np.isnan(kls)]
    assert len(recorded) >= 1


def test_elbo_engine_reaches_optimum():
    setup, lam0 = small_setup(d=3, offset=1.0)
    rec = recording_points(2000, 500)
    kls, _, _, diverged = run_optimization(
        substream(23, 0), "ELBO", 8, setup, lam0, "adam", "constant", 0.05, rec)
    assert diverged == -1
    assert kls[-1] < 1e-3


def test_recording_points_shapes():
    np.testing.assert_array_equal(recording_points(10, 3), [0, 3, 6, 9, 10])
    np.testing.assert_array_equal(recording_points(0, 1), [0])
    np.testing.assert_array_equal(recording_points(4, 10), [0, 4])


@pytest.mark.parametrize("method_code,n_state", [(0, 1), (1, 1), (2, 1), (3, 6)])
def test_backend_parity_chain_gradients(method_code, n_state):
    setup, lam0 = small_setup(d=2)
    init = np.tile(np.array([0.2, -0.1]), (n_state, 1))
    outs = []
    for impl in (numpy_backend, numba_backend):
        rng = substream(31, 4)
        outs.append(impl.chain_gradients(
            rng, method_code, 6, 50, init.copy(),
            setup.p_mean, setup.p_chol, setup.p_cov_diag, setup.p_logdet,
            lam0.mean, lam0.log_scale, setup.t_loc, setup.t_scale,
            setup.t_df, setup.alpha))
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-9, atol=1e-12)


def test_same_seed_same_backend_bitwise():
    for impl in (numpy_backend, numba_backend):
        a = run_backend(impl, 3, 99)
        b = run_backend(impl, 3, 99)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[2], b[2])
