"""Inclusive-KL variational inference with Markov chain score ascent."""

from .distributions import (
    DefensiveMixture,
    FullGaussian,
    HeavyTail,
    TargetModel,
    VariationalParams,
    chi2_gaussian,
    kl_gaussian,
    log_density_diag,
    mixture_log_density,
    sample_diag,
    sample_mixture,
    sample_wishart_target,
    score_diag,
    w_star_gaussian,
)
from .estimators import (
    GradientEstimate,
    ParallelState,
    SingleState,
    elbo_step,
    jsa_step,
    msc_rb_step,
    msc_step,
    pmcsa_step,
)
from .kernels import (
    CisOutcome,
    ImhOutcome,
    KernelContext,
    cis_mixing_rate,
    cis_step,
    discrete_transition_matrix,
    imh_mixing_rate,
    imh_step,
    mscrb_gamma,
)
from .optimizers import OptimizerState, StepsizeSchedule, optimizer_update
from .rng import substream

__version__ = "0.1.0"
