#!/usr/bin/env python3
"""Benchmark the numba engine backend against the pure-numpy fallback.

Runs the same workloads through both backends (identical seeds, identical
random streams) and prints per-workload wall times plus the speedup. The
numba timings exclude JIT compilation (one warmup call per function).

Usage: python benchmarks/backend_benchmark.py [--quick]
"""

import argparse
import time

import numpy as np

from mcsa.distributions import DefensiveMixture, FullGaussian, VariationalParams
from mcsa.engine import GaussianSetup, recording_points
from mcsa.engine import _numba as numba_backend
from mcsa.engine import _numpy as numpy_backend
from mcsa.engine._codes import METHOD_CODES
from mcsa.rng import substream


def make_problem(d, offset=6.0, alpha=0.95):
    target = FullGaussian.isotropic(np.full(d, offset), 1.0)
    lam0 = VariationalParams(np.zeros(d), np.zeros(d))
    mix = DefensiveMixture.from_variational(lam0, alpha=alpha)
    return GaussianSetup.create(target, mix), lam0


def bench_run_chain(impl, seed, method, d, n_budget, iters):
    setup, lam0 = make_problem(d)
    rec = recording_points(iters, max(1, iters // 50))
    rng = substream(seed, 0)
    return impl.run_chain(
        rng, METHOD_CODES[method], n_budget, rec,
        setup.p_mean, setup.p_chol, setup.p_cov_diag, setup.p_logdet,
        lam0.mean.copy(), lam0.log_scale.copy(),
        setup.t_loc, setup.t_scale, setup.t_df, setup.alpha,
        3, 0, 0.01, 0.9, 0.9, 0.999, 1e-8, 1e12, False)


def bench_gradient_replicates(impl, seed, method, n_budget, n_reps):
    target = FullGaussian.isotropic(np.zeros(1), 1.0)
    setup = GaussianSetup.create(target, alpha=1.0)
    q = VariationalParams(np.array([-4.0]), np.array([0.5 * np.log(2.0)]))
    rng = substream(seed, 1)
    return impl.gradient_replicates(
        rng, METHOD_CODES[method], n_budget, n_reps, np.zeros(1),
        setup.p_mean, setup.p_chol, setup.p_cov_diag, setup.p_logdet,
        q.mean, q.log_scale, setup.t_loc, setup.t_scale, setup.t_df, setup.alpha)


def bench_replicated_variance(impl, seed, method, d, n_budget, n_chains, k_len):
    setup, lam0 = make_problem(d)
    trace = np.tile(np.concatenate([lam0.mean, lam0.log_scale]), (k_len, 1))
    trace += 0.01 * np.arange(k_len)[:, None]
    rng = substream(seed, 2)
    return impl.replicated_variance(
        rng, METHOD_CODES[method], n_budget, trace, n_chains,
        setup.p_mean, setup.p_chol, setup.p_cov_diag, setup.p_logdet,
        setup.t_loc, setup.t_scale, setup.t_df, setup.alpha)


def timeit(fn, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true",
                        help="smaller workloads, one timing repeat")
    args = parser.parse_args()
    repeats = 1 if args.quick else 3
    scale = 4 if args.quick else 1

    workloads = [
        ("MSC optimization, d=20, N=64, T=5000",
         lambda impl: bench_run_chain(impl, 11, "MSC", 20, 64, 5000 // scale)),
        ("PMCSA optimization, d=20, N=64, T=5000",
         lambda impl: bench_run_chain(impl, 12, "PMCSA", 20, 64, 5000 // scale)),
        ("JSA optimization, d=20, N=64, T=5000",
         lambda impl: bench_run_chain(impl, 13, "JSA", 20, 64, 5000 // scale)),
        ("CISRB 1-D variance cell, N=64, 2^14 reps",
         lambda impl: bench_gradient_replicates(impl, 14, "CISRB", 64,
                                                16384 // scale)),
        ("PIMH 1-D variance cell, N=64, 2^14 reps",
         lambda impl: bench_gradient_replicates(impl, 15, "PIMH", 64,
                                                16384 // scale)),
        ("PMCSA replicated variance, d=10, N=32, 128 chains, 10 entries",
         lambda impl: bench_replicated_variance(impl, 16, "PMCSA", 10, 32, 128,
                                                10 // min(scale, 2))),
    ]

    print(f"{'workload':<58} {'numpy':>9} {'numba':>9} {'speedup':>8}")
    print("-" * 88)
    for label, fn in workloads:
        fn(numba_backend)  # warm the JIT so compile time is excluded
        t_np, out_np = timeit(lambda: fn(numpy_backend), repeats)
        t_nb, out_nb = timeit(lambda: fn(numba_backend), repeats)
        a = out_np[0] if isinstance(out_np, tuple) else out_np
        b = out_nb[0] if isinstance(out_nb, tuple) else out_nb
        agree = np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float),
                            rtol=1e-8, atol=1e-10, equal_nan=True)
        mark = "" if agree else "  [MISMATCH]"
        print(f"{label:<58} {t_np:>8.3f}s {t_nb:>8.3f}s {t_np / t_nb:>7.1f}x{mark}")


if __name__ == "__main__":
    main()
