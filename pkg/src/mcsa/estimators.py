"""Markov chain gradient estimators for inclusive-KL minimization.

Each step maps (kernel context, chain state, budget N) to a new chain state
and a stochastic gradient with respect to the diagonal-Gaussian parameters
(mean, log_scale), estimating -E_pi[score]. A reparameterized negative-ELBO
estimator is included as a comparison baseline.

Budget semantics: one step costs N target evaluations for JSA and PMCSA
(N transitions of one proposal each) and N for MSC/MSC-RB (one retained
state plus N-1 fresh proposals).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .distributions import VariationalParams, sample_mixture, score_diag
from .kernels import KernelContext, cis_step, imh_step, log_sum_exp

__all__ = [
    "SingleState",
    "ParallelState",
    "GradientEstimate",
    "init_single_state",
    "init_parallel_state",
    "msc_step",
    "msc_rb_step",
    "jsa_step",
    "pmcsa_step",
    "elbo_step",
]


@dataclass
class SingleState:
    """Chain state holding one point (MSC, MSC-RB, JSA)."""

    z: np.ndarray


@dataclass
class ParallelState:
    """Chain state holding N independent points (PMCSA); the chain count is
    fixed for the lifetime of a run."""

    chains: np.ndarray  # (N, d)


@dataclass(frozen=True)
class GradientEstimate:
    grad: np.ndarray  # (2d,), [d mean, d log_scale]
    accept_count: Optional[int] = None
    ess: Optional[float] = None


def init_single_state(ctx: KernelContext) -> SingleState:
    return SingleState(z=sample_mixture(ctx.proposal, ctx.rng))


def init_parallel_state(ctx: KernelContext, n_chains: int) -> ParallelState:
    return ParallelState(chains=sample_mixture(ctx.proposal, ctx.rng, size=n_chains))


def _ess(log_w_norm: np.ndarray) -> float:
    # 1 / sum of squared normalized weights
    return float(np.exp(-log_sum_exp(2.0 * log_w_norm)))


def msc_step(ctx: KernelContext, state: SingleState, n_budget: int
             ) -> Tuple[SingleState, GradientEstimate]:
    """One CIS transition (N-1 fresh proposals); gradient -score at the new state."""
    if n_budget < 2:
        raise ValueError("MSC needs budget N >= 2 (one retained state, N-1 proposals)")
    out = cis_step(ctx, state.z, n_budget - 1)
    grad = -score_diag(ctx.proposal.variational, out.next_state)
    return SingleState(out.next_state), GradientEstimate(grad=grad, ess=_ess(out.log_weights))


def msc_rb_step(ctx: KernelContext, state: SingleState, n_budget: int
                ) -> Tuple[SingleState, GradientEstimate]:
    """Reweighted variant of ``msc_step``: the gradient is the self-normalized
    weighted average of -score over all candidates (retained state included),
    reusing the importance weights of the same CIS transition that also
    propagates the chain."""
    if n_budget < 2:
        raise ValueError("MSC-RB needs budget N >= 2")
    out = cis_step(ctx, state.z, n_budget - 1)
    scores = score_diag(ctx.proposal.variational, out.candidates)  # (N, 2d)
    w_norm = np.exp(out.log_weights)
    grad = -(w_norm[:, None] * scores).sum(axis=0)
    return SingleState(out.next_state), GradientEstimate(grad=grad, ess=_ess(out.log_weights))


def jsa_step(ctx: KernelContext, state: SingleState, n_budget: int
             ) -> Tuple[SingleState, GradientEstimate]:
    """N sequential IMH transitions; gradient averages -score over the N
    post-transition states; the chain continues from the last one."""
    if n_budget < 1:
        raise ValueError("JSA needs budget N >= 1")
    z = state.z
    grad = np.zeros(2 * ctx.target.dim)
    accepted = 0
    for _ in range(n_budget):
        out = imh_step(ctx, z)
        z = out.next_state
        accepted += out.accepted
        grad -= score_diag(ctx.proposal.variational, z)
    grad /= n_budget
    return SingleState(z), GradientEstimate(grad=grad, accept_count=accepted)


def pmcsa_step(ctx: KernelContext, state: ParallelState
               ) -> Tuple[ParallelState, GradientEstimate]:
    """One IMH transition per chain, in chain-index order; gradient averages
    -score over the N updated chains. Chains never interact."""
    n = state.chains.shape[0]
    new_chains = np.empty_like(state.chains)
    grad = np.zeros(2 * ctx.target.dim)
    accepted = 0
    for i in range(n):
        out = imh_step(ctx, state.chains[i])
        new_chains[i] = out.next_state
        accepted += out.accepted
        grad -= score_diag(ctx.proposal.variational, out.next_state)
    grad /= n
    return ParallelState(new_chains), GradientEstimate(grad=grad, accept_count=accepted)


def elbo_step(ctx: KernelContext, params: VariationalParams, n_draws: int
              ) -> GradientEstimate:
    """Reparameterized path-derivative gradient of the negative ELBO.

    Draws z = mean + sigma * eps and accumulates
    -(dz/dlambda)^T (grad_z log pi(z) - grad_z log q(z; lambda)) over
    ``n_draws``; the score term of q is dropped, so the estimator has exactly
    zero variance when q equals a Gaussian target.
    """
    if ctx.target.grad_log_density is None:
        raise ValueError("ELBO baseline needs the target gradient")
    d = params.dim
    sigma = params.scale
    eps = ctx.rng.standard_normal((n_draws, d))
    z = params.mean + sigma * eps
    g_target = ctx.target.grad_log_density(z)
    g_q = -(z - params.mean) / sigma**2
    diff = g_target - g_q  # (n, d)
    grad_mean = -diff.mean(axis=0)
    grad_log_scale = -(diff * sigma * eps).mean(axis=0)
    return GradientEstimate(grad=np.concatenate([grad_mean, grad_log_scale]))
