"""Hot loops behind the experiment harness, specialized to Gaussian targets
with defensive-mixture (or, at alpha >= 1, plain Gaussian) proposals.

Two interchangeable backends implement the same functions with the same
random-draw protocol: a numba ``@njit`` backend (default) and a vectorized
pure-numpy fallback. Selection is by the ``MCSA_BACKEND`` environment
variable ("numba" or "numpy", read at import time); the numpy fallback is
also used automatically when numba is unavailable. Within a backend results
are bit-reproducible; across backends they agree to floating-point
accumulation order (numpy reduces pairwise/BLAS, numba linearly).
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..distributions import DefensiveMixture, FullGaussian, VariationalParams
from ._codes import METHOD_CODES, OPT_CODES, SCHED_CODES

_requested = os.environ.get("MCSA_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"MCSA_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba":
    try:
        from . import _numba as _impl
        _backend = "numba"
    except ImportError:  # pragma: no cover
        warnings.warn("numba unavailable; falling back to the numpy engine backend")
        from . import _numpy as _impl
        _backend = "numpy"
else:
    from . import _numpy as _impl
    _backend = "numpy"


def backend_name() -> str:
    return _backend


@dataclass(frozen=True)
class GaussianSetup:
    """Arrays describing one Gaussian target plus the frozen proposal tail."""

    p_mean: np.ndarray
    p_chol: np.ndarray
    t_loc: np.ndarray
    t_scale: np.ndarray
    t_df: float
    alpha: float

    @property
    def dim(self) -> int:
        return self.p_mean.size

    @property
    def p_cov_diag(self) -> np.ndarray:
        return np.sum(self.p_chol**2, axis=1)

    @property
    def p_logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.p_chol))))

    @classmethod
    def create(cls, target: FullGaussian, mixture: Optional[DefensiveMixture] = None,
               alpha: Optional[float] = None) -> "GaussianSetup":
        """Pack a target and proposal-tail description.

        With ``mixture`` None the proposal is the plain diagonal Gaussian
        (alpha forced to 1, tail unused)."""
        d = target.dim
        if mixture is None:
            return cls(target.mean, target.cov_factor, np.zeros(d), np.ones(d),
                       5.0, 1.0 if alpha is None else alpha)
        return cls(target.mean, target.cov_factor, mixture.tail.location,
                   mixture.tail.scale, mixture.tail.df,
                   mixture.alpha if alpha is None else alpha)


def _method_code(method: str) -> int:
    try:
        return METHOD_CODES[method.upper()]
    except KeyError:
        raise ValueError(f"unknown method {method!r}") from None


def recording_points(iterations: int, stride: int) -> np.ndarray:
    """0, stride, 2*stride, ..., always ending exactly at ``iterations``."""
    if iterations < 0 or stride < 1:
        raise ValueError("iterations >= 0 and stride >= 1 required")
    pts = list(range(0, iterations + 1, stride))
    if pts[-1] != iterations:
        pts.append(iterations)
    return np.asarray(pts, dtype=np.int64)


def run_optimization(rng: np.random.Generator, method: str, n_budget: int,
                     setup: GaussianSetup, lambda0: VariationalParams,
                     optimizer: str, schedule: str, gamma: float,
                     rec_points: np.ndarray, diverge_kl: float = 1e12,
                     record_lambda: bool = False, beta: float = 0.9,
                     beta1: float = 0.9, beta2: float = 0.999,
                     adam_eps: float = 1e-8):
    """Run one optimization; returns (kls, accept_rates, lambdas, diverged_at)."""
    return _impl.run_chain(
        rng, _method_code(method), int(n_budget),
        np.ascontiguousarray(rec_points, dtype=np.int64),
        setup.p_mean, setup.p_chol, setup.p_cov_diag, setup.p_logdet,
        lambda0.mean.copy(), lambda0.log_scale.copy(),
        setup.t_loc, setup.t_scale, float(setup.t_df), float(setup.alpha),
        OPT_CODES[optimizer], SCHED_CODES[schedule], float(gamma),
        float(beta), float(beta1), float(beta2), float(adam_eps),
        float(diverge_kl), bool(record_lambda))


def conditional_gradient_replicates(rng: np.random.Generator, method: str,
                                    n_budget: int, n_reps: int,
                                    z_prev: np.ndarray, setup: GaussianSetup,
                                    q: VariationalParams) -> np.ndarray:
    """(n_reps, 2d) one-step gradient estimates at a frozen proposal."""
    return _impl.gradient_replicates(
        rng, _method_code(method), int(n_budget), int(n_reps),
        np.ascontiguousarray(z_prev, dtype=np.float64),
        setup.p_mean, setup.p_chol, setup.p_cov_diag, setup.p_logdet,
        q.mean, q.log_scale, setup.t_loc, setup.t_scale,
        float(setup.t_df), float(setup.alpha))


def stationary_chain_gradients(rng: np.random.Generator, method: str,
                               n_budget: int, n_steps: int,
                               init_states: np.ndarray, setup: GaussianSetup,
                               q: VariationalParams) -> np.ndarray:
    """(n_steps, 2d) gradient estimates along one chain at frozen parameters.

    ``init_states`` is (1, d) for MSC/MSC-RB/JSA and (N, d) for PMCSA; start
    it from exact target draws to probe stationarity."""
    return _impl.chain_gradients(
        rng, _method_code(method), int(n_budget), int(n_steps),
        np.ascontiguousarray(np.atleast_2d(init_states), dtype=np.float64),
        setup.p_mean, setup.p_chol, setup.p_cov_diag, setup.p_logdet,
        q.mean, q.log_scale, setup.t_loc, setup.t_scale,
        float(setup.t_df), float(setup.alpha))


def replicated_variance_trace(rng: np.random.Generator, method: str,
                              n_budget: int, lambda_trace: np.ndarray,
                              n_chains: int, setup: GaussianSetup) -> np.ndarray:
    """Per-trace-entry gradient trace variance across replicate chains."""
    return _impl.replicated_variance(
        rng, _method_code(method), int(n_budget),
        np.ascontiguousarray(lambda_trace, dtype=np.float64), int(n_chains),
        setup.p_mean, setup.p_chol, setup.p_cov_diag, setup.p_logdet,
        setup.t_loc, setup.t_scale, float(setup.t_df), float(setup.alpha))
