"""Target-invariant Markov transition kernels driven by the current
variational fit: conditional importance sampling (CIS) and independent
Metropolis-Hastings (IMH), plus closed-form mixing-rate evaluators and an
exact discrete-state oracle used to test invariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distributions import (
    DefensiveMixture,
    TargetModel,
    mixture_log_density,
    sample_mixture,
)

__all__ = [
    "KernelContext",
    "CisOutcome",
    "ImhOutcome",
    "cis_step",
    "imh_step",
    "discrete_transition_matrix",
    "cis_mixing_rate",
    "imh_mixing_rate",
    "mscrb_gamma",
    "log_sum_exp",
    "wilson_halfwidth",
]


def log_sum_exp(logs: np.ndarray, axis=-1) -> np.ndarray:
    """Stable log(sum(exp(logs))) that tolerates -inf entries."""
    logs = np.asarray(logs, dtype=np.float64)
    m = np.max(logs, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(logs - m), axis=axis))
    return out


@dataclass
class KernelContext:
    """Target, proposal, and the random stream a chain draws from.

    One context per chain; the rng handle must never be shared between
    concurrently running chains.
    """

    target: TargetModel
    proposal: DefensiveMixture
    rng: np.random.Generator

    def __post_init__(self):
        if self.target.dim != self.proposal.dim:
            raise ValueError("proposal dimension does not match target dimension")

    def log_weight(self, z: np.ndarray) -> np.ndarray:
        """Unnormalized log importance weight log(pi / q_def)."""
        return self.target.log_density(z) - mixture_log_density(self.proposal, z)


@dataclass(frozen=True)
class CisOutcome:
    """One CIS transition. Candidate 0 is the retained previous state, and
    log_weights are the normalized log resampling weights over candidates
    (kept so a reweighted estimator can reuse them)."""

    next_state: np.ndarray
    candidates: np.ndarray
    log_weights: np.ndarray
    selected_index: int


@dataclass(frozen=True)
class ImhOutcome:
    """One IMH transition. On rejection next_state is the previous state,
    preserved bit-exactly."""

    next_state: np.ndarray
    accepted: bool
    log_weight_prev: float
    log_weight_prop: float


def cis_step(ctx: KernelContext, z_prev: np.ndarray, num_proposals: int) -> CisOutcome:
    """One conditional importance sampling transition.

    Draws ``num_proposals`` fresh candidates from the defensive proposal,
    retains the previous state as candidate 0, and resamples one candidate in
    proportion to the importance weight pi/q_def. Costs exactly
    ``num_proposals`` proposal draws and ``num_proposals + 1`` target
    evaluations.
    """
    if num_proposals < 1:
        raise ValueError("num_proposals must be >= 1")
    z_prev = np.asarray(z_prev, dtype=np.float64)
    if not np.all(np.isfinite(z_prev)):
        raise ValueError("previous state must be finite")

    proposals = sample_mixture(ctx.proposal, ctx.rng, size=num_proposals)
    candidates = np.concatenate([z_prev[None, :], proposals], axis=0)
    log_w = ctx.log_weight(candidates)
    if np.any(np.isnan(log_w)):
        raise ValueError("target log-density returned NaN")
    if not np.isfinite(log_w[0]):
        raise ValueError("previous state has zero importance weight under the current proposal")
    norm = log_sum_exp(log_w)
    log_w_norm = log_w - norm

    # single-uniform inverse-CDF resampling keeps the draw count predictable
    u = ctx.rng.random()
    cdf = np.cumsum(np.exp(log_w_norm))
    idx = int(np.searchsorted(cdf, u, side="right"))
    idx = min(idx, num_proposals)
    return CisOutcome(next_state=candidates[idx].copy(),
                      candidates=candidates,
                      log_weights=log_w_norm,
                      selected_index=idx)


def imh_step(ctx: KernelContext, z_prev: np.ndarray) -> ImhOutcome:
    """One independent Metropolis-Hastings transition.

    Acceptance probability min(w(z*) / w(z_prev), 1), evaluated in log space.
    A proposal outside the target support has zero weight and is always
    rejected.
    """
    z_prev = np.asarray(z_prev, dtype=np.float64)
    log_w_prev = float(np.asarray(ctx.log_weight(z_prev[None, :])).reshape(-1)[0])
    if not np.isfinite(log_w_prev):
        raise ValueError("previous state must have finite target log-density")

    proposal = sample_mixture(ctx.proposal, ctx.rng)
    log_w_prop = float(np.asarray(ctx.log_weight(proposal[None, :])).reshape(-1)[0])
    if math.isnan(log_w_prop):
        raise ValueError("target log-density returned NaN")

    log_alpha = min(0.0, log_w_prop - log_w_prev)
    accepted = ctx.rng.random() < math.exp(log_alpha)
    next_state = proposal if accepted else z_prev.copy()
    return ImhOutcome(next_state=next_state, accepted=bool(accepted),
                      log_weight_prev=log_w_prev, log_weight_prop=log_w_prop)


# ---------------------------------------------------------------------------
# discrete brute-force oracle
# ---------------------------------------------------------------------------

_MAX_GRID = 64
_MAX_EXACT_PROPOSALS = 3


def _validate_pmfs(grid, target_pmf, proposal_pmf):
    grid = np.asarray(grid, dtype=np.float64)
    p = np.asarray(target_pmf, dtype=np.float64)
    q = np.asarray(proposal_pmf, dtype=np.float64)
    g = grid.size
    if p.shape != (g,) or q.shape != (g,):
        raise ValueError("grid and pmfs must have equal length")
    if g > _MAX_GRID:
        raise ValueError(f"grid too large for the discrete oracle (max {_MAX_GRID})")
    if np.any(p <= 0) or np.any(q <= 0):
        raise ValueError("pmfs must be strictly positive")
    if abs(p.sum() - 1.0) > 1e-9 or abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("pmfs must be normalized")
    return p, q


def discrete_transition_matrix(kernel_kind: str, grid, target_pmf, proposal_pmf,
                               num_proposals: Optional[int] = None,
                               mc_samples: int = 10_000_000,
                               rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Row-stochastic transition matrix of the discrete analog of one kernel.

    ``kernel_kind`` is "imh" or "cis"; CIS needs ``num_proposals``. The CIS
    matrix is built by exact enumeration over proposal tuples for up to 3
    proposals and by Monte Carlo with ``mc_samples`` total transitions beyond
    that (use ``wilson_halfwidth`` to bound the entries' error).
    """
    p, q = _validate_pmfs(grid, target_pmf, proposal_pmf)
    g = p.size
    w = p / q

    kind = kernel_kind.lower()
    if kind == "imh":
        accept = np.minimum(1.0, w[None, :] / w[:, None])  # accept[i, j]
        t = q[None, :] * accept
        np.fill_diagonal(t, 0.0)
        np.fill_diagonal(t, 1.0 - t.sum(axis=1))
        return t

    if kind != "cis":
        raise ValueError(f"unknown kernel kind {kernel_kind!r}")
    if num_proposals is None or num_proposals < 1:
        raise ValueError("cis oracle needs num_proposals >= 1")

    m = int(num_proposals)
    if m <= _MAX_EXACT_PROPOSALS:
        return _cis_matrix_exact(p, q, w, m)
    if rng is None:
        raise ValueError("cis oracle with more than 3 proposals needs an rng for MC")
    return _cis_matrix_mc(p, q, w, m, mc_samples, rng)


def _cis_matrix_exact(p, q, w, m):
    g = p.size
    tuples = np.stack(np.meshgrid(*([np.arange(g)] * m), indexing="ij"),
                      axis=-1).reshape(-1, m)
    tuple_prob = np.prod(q[tuples], axis=1)
    tuple_wsum = np.sum(w[tuples], axis=1)
    flat = tuples.ravel()

    t = np.zeros((g, g))
    for i in range(g):
        r = tuple_prob / (w[i] + tuple_wsum)
        # sum over tuples of P(tuple) * count_j(tuple) / denom, for every j
        t[i] = w * np.bincount(flat, weights=np.repeat(r, m), minlength=g)
        t[i, i] += w[i] * r.sum()
    return t


def _cis_matrix_mc(p, q, w, m, mc_samples, rng):
    g = p.size
    per_row = max(1, mc_samples // g)
    cdf_q = np.cumsum(q)
    t = np.zeros((g, g))
    for i in range(g):
        idx = np.searchsorted(cdf_q, rng.random((per_row, m)), side="right").clip(0, g - 1)
        weights = np.concatenate([np.full((per_row, 1), w[i]), w[idx]], axis=1)
        cdf = np.cumsum(weights, axis=1)
        u = rng.random(per_row) * cdf[:, -1]
        sel = (cdf < u[:, None]).sum(axis=1).clip(0, m)
        chosen = np.where(sel == 0, i, idx[np.arange(per_row), np.maximum(sel - 1, 0)])
        t[i] = np.bincount(chosen, minlength=g) / per_row
    return t


def wilson_halfwidth(p_hat: float, n: int, z: float = 4.0) -> float:
    """Halfwidth of the Wilson score interval for a binomial proportion."""
    denom = 1.0 + z * z / n
    return (z / denom) * math.sqrt(p_hat * (1.0 - p_hat) / n + z * z / (4.0 * n * n))


# ---------------------------------------------------------------------------
# closed-form mixing rates
# ---------------------------------------------------------------------------


def cis_mixing_rate(w_star: float, n: int) -> float:
    """Per-step total-variation contraction 1 - (N-1)/(2 w* + N - 2) of the
    CIS kernel at budget N (N-1 fresh proposals)."""
    if w_star < 1.0:
        raise ValueError("w* is a supremum of a density ratio, so w* >= 1")
    if n < 2:
        raise ValueError("the CIS contraction rate needs N >= 2")
    return 1.0 - (n - 1.0) / (2.0 * w_star + n - 2.0)


def imh_mixing_rate(w_star: float) -> float:
    """Per-step total-variation contraction 1 - 1/w* of the IMH kernel."""
    if w_star < 1.0:
        raise ValueError("w* is a supremum of a density ratio, so w* >= 1")
    return 1.0 - 1.0 / w_star


def mscrb_gamma(w_star: float, n: int) -> float:
    """Mixing rate 2 w* / (2 w* + N - 2) of the reweighted CIS kernel."""
    if w_star < 1.0:
        raise ValueError("w* is a supremum of a density ratio, so w* >= 1")
    if n < 2:
        raise ValueError("needs N >= 2")
    return 2.0 * w_star / (2.0 * w_star + n - 2.0)
