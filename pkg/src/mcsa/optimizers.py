"""First-order update rules consuming the stochastic gradients: SGD, Polyak
momentum, Nesterov, and ADAM, with constant / 1/sqrt(t) / 1/t stepsize
schedules. Updates are deterministic; non-finite gradients are an error
rather than being clipped, so instability regimes stay observable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from .distributions import VariationalParams

__all__ = ["StepsizeSchedule", "OptimizerState", "optimizer_update"]

_KINDS = ("sgd", "momentum", "nesterov", "adam")
_SCHEDULES = ("constant", "inv_sqrt", "inv")


@dataclass(frozen=True)
class StepsizeSchedule:
    """gamma_t = gamma, gamma/sqrt(t), or gamma/t for t = 1, 2, ..."""

    kind: str
    gamma: float

    def __post_init__(self):
        if self.kind not in _SCHEDULES:
            raise ValueError(f"unknown schedule {self.kind!r}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    def at(self, t: int) -> float:
        if t < 1:
            raise ValueError("schedules are defined for t >= 1")
        if self.kind == "constant":
            return self.gamma
        if self.kind == "inv_sqrt":
            return self.gamma / np.sqrt(t)
        return self.gamma / t


@dataclass(frozen=True)
class OptimizerState:
    kind: str
    step_count: int = 0
    velocity: Optional[np.ndarray] = None   # momentum, nesterov
    m: Optional[np.ndarray] = None          # adam first moment
    v: Optional[np.ndarray] = None          # adam second moment
    beta: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def sgd(cls) -> "OptimizerState":
        return cls(kind="sgd")

    @classmethod
    def momentum(cls, dim: int, beta: float = 0.9) -> "OptimizerState":
        return cls(kind="momentum", velocity=np.zeros(dim), beta=beta)

    @classmethod
    def nesterov(cls, dim: int, beta: float = 0.9) -> "OptimizerState":
        return cls(kind="nesterov", velocity=np.zeros(dim), beta=beta)

    @classmethod
    def adam(cls, dim: int, beta1: float = 0.9, beta2: float = 0.999,
             eps: float = 1e-8) -> "OptimizerState":
        return cls(kind="adam", m=np.zeros(dim), v=np.zeros(dim),
                   beta1=beta1, beta2=beta2, eps=eps)

    @classmethod
    def create(cls, kind: str, dim: int) -> "OptimizerState":
        if kind not in _KINDS:
            raise ValueError(f"unknown optimizer {kind!r}")
        if kind == "sgd":
            return cls.sgd()
        return getattr(cls, kind)(dim)


def optimizer_update(state: OptimizerState, params: VariationalParams,
                     grad: np.ndarray, schedule: StepsizeSchedule
                     ) -> Tuple[OptimizerState, VariationalParams]:
    """Apply one update lambda_t = lambda_{t-1} - gamma_t * direction."""
    grad = np.asarray(grad, dtype=np.float64)
    lam = params.as_vector()
    if grad.shape != lam.shape:
        raise ValueError("gradient dimension does not match parameters")
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient")

    t = state.step_count + 1
    gamma = schedule.at(t)

    if state.kind == "sgd":
        new_lam = lam - gamma * grad
        new_state = replace(state, step_count=t)
    elif state.kind == "momentum":
        vel = state.beta * state.velocity + grad
        new_lam = lam - gamma * vel
        new_state = replace(state, step_count=t, velocity=vel)
    elif state.kind == "nesterov":
        vel = state.beta * state.velocity + grad
        new_lam = lam - gamma * (grad + state.beta * vel)
        new_state = replace(state, step_count=t, velocity=vel)
    elif state.kind == "adam":
        m = state.beta1 * state.m + (1.0 - state.beta1) * grad
        v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_lam = lam - gamma * m_hat / (np.sqrt(v_hat) + state.eps)
        new_state = replace(state, step_count=t, m=m, v=v)
    else:
        raise ValueError(f"unknown optimizer {state.kind!r}")

    return new_state, VariationalParams.from_vector(new_lam)
