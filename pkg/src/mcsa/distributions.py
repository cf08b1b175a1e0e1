"""Probability primitives for diagonal/full-rank Gaussians, Student-t tails,
and defensive mixtures, plus the closed-form divergences used as ground
truth by the experiment harness.

Conventions: a "diagonal Gaussian" is parameterized by a mean vector and
the natural log of the per-dimension standard deviation. All densities are
computed in log space; importance weights are only ever formed as
differences of log densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "VariationalParams",
    "FullGaussian",
    "HeavyTail",
    "DefensiveMixture",
    "TargetModel",
    "log_density_diag",
    "score_diag",
    "sample_diag",
    "mixture_log_density",
    "sample_mixture",
    "sample_wishart_target",
    "kl_gaussian",
    "chi2_gaussian",
    "w_star_gaussian",
]

_LOG_2PI = math.log(2.0 * math.pi)

GaussianLike = Union["VariationalParams", "FullGaussian"]


@dataclass(frozen=True)
class VariationalParams:
    """Diagonal-Gaussian parameters: mean and log standard deviation per dim."""

    mean: np.ndarray
    log_scale: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        log_scale = np.atleast_1d(np.asarray(self.log_scale, dtype=np.float64))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_scale", log_scale)
        if mean.shape != log_scale.shape or mean.ndim != 1 or mean.size < 1:
            raise ValueError("mean and log_scale must be 1-D arrays of equal length >= 1")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(log_scale))):
            raise ValueError("parameters must be finite")

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.mean, self.log_scale])

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "VariationalParams":
        vec = np.asarray(vec, dtype=np.float64)
        d = vec.size // 2
        return cls(vec[:d], vec[d:])


@dataclass(frozen=True)
class FullGaussian:
    """Gaussian with full-rank covariance, stored via its lower Cholesky factor."""

    mean: np.ndarray
    cov_factor: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        fac = np.asarray(self.cov_factor, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov_factor", fac)
        d = mean.size
        if fac.shape != (d, d):
            raise ValueError("cov_factor must be (d, d)")
        if np.any(np.abs(np.triu(fac, 1)) > 0):
            raise ValueError("cov_factor must be lower triangular")
        if np.any(np.diag(fac) <= 0):
            raise ValueError("cov_factor must have strictly positive diagonal")

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def cov(self) -> np.ndarray:
        return self.cov_factor @ self.cov_factor.T

    @property
    def cov_diag(self) -> np.ndarray:
        return np.sum(self.cov_factor**2, axis=1)

    @property
    def log_det_cov(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.cov_factor))))

    def log_density(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        delta = np.atleast_2d(z) - self.mean
        y = np.linalg.solve(self.cov_factor, delta.T).T
        out = -0.5 * np.sum(y**2, axis=-1) - 0.5 * self.dim * _LOG_2PI - 0.5 * self.log_det_cov
        return out[0] if z.ndim == 1 else out.reshape(z.shape[:-1])

    def grad_log_density(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        delta = np.atleast_2d(z) - self.mean
        y = np.linalg.solve(self.cov_factor, delta.T)
        g = -np.linalg.solve(self.cov_factor.T, y).T
        return g.reshape(z.shape)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        n = 1 if size is None else size
        eps = rng.standard_normal((n, self.dim))
        out = self.mean + eps @ self.cov_factor.T
        return out[0] if size is None else out

    @classmethod
    def from_diag(cls, params: VariationalParams) -> "FullGaussian":
        return cls(params.mean, np.diag(params.scale))

    @classmethod
    def isotropic(cls, mean: np.ndarray, sigma: float = 1.0) -> "FullGaussian":
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        return cls(mean, sigma * np.eye(mean.size))


@dataclass(frozen=True)
class HeavyTail:
    """Independent Student-t per dimension; the heavy-tailed mixture component."""

    df: float
    location: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        loc = np.atleast_1d(np.asarray(self.location, dtype=np.float64))
        scale = np.atleast_1d(np.asarray(self.scale, dtype=np.float64))
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "scale", scale)
        if self.df <= 0:
            raise ValueError("df must be positive")
        if loc.shape != scale.shape or np.any(scale <= 0):
            raise ValueError("location/scale mismatch or non-positive scale")

    @property
    def dim(self) -> int:
        return self.location.size

    def log_density(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        df = self.df
        const = (math.lgamma((df + 1.0) / 2.0) - math.lgamma(df / 2.0)
                 - 0.5 * math.log(df * math.pi))
        x = (z - self.location) / self.scale
        per_dim = const - np.log(self.scale) - 0.5 * (df + 1.0) * np.log1p(x * x / df)
        return np.sum(per_dim, axis=-1)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        n = 1 if size is None else size
        t = rng.standard_t(self.df, (n, self.dim))
        out = self.location + self.scale * t
        return out[0] if size is None else out


@dataclass(frozen=True)
class DefensiveMixture:
    """Proposal alpha * q(.; lambda) + (1 - alpha) * nu with heavy-tailed nu.

    The tail keeps the importance weight pi/q_def bounded for Gaussian-like
    targets; its location/scale are frozen at construction and do not track
    later parameter updates.
    """

    alpha: float
    variational: VariationalParams
    tail: HeavyTail

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie strictly inside (0, 1)")
        if self.variational.dim != self.tail.dim:
            raise ValueError("component dimensions differ")

    @property
    def dim(self) -> int:
        return self.variational.dim

    def with_params(self, params: VariationalParams) -> "DefensiveMixture":
        """Same mixture with the Gaussian component moved to new parameters."""
        return DefensiveMixture(self.alpha, params, self.tail)

    @classmethod
    def from_variational(cls, params: VariationalParams, alpha: float = 0.95,
                         tail_df: float = 5.0) -> "DefensiveMixture":
        tail = HeavyTail(tail_df, params.mean.copy(), params.scale.copy())
        return cls(alpha, params, tail)


@dataclass
class TargetModel:
    """Target density pi, known up to a constant.

    ``log_density`` must be vectorized over leading axes, never return NaN on
    finite input, and return -inf only outside the support. ``exact`` is set
    when pi is Gaussian, enabling closed-form KL and direct sampling.
    """

    dim: int
    log_density: Callable[[np.ndarray], np.ndarray]
    grad_log_density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    exact: Optional[FullGaussian] = None

    @classmethod
    def from_gaussian(cls, gaussian: FullGaussian) -> "TargetModel":
        return cls(dim=gaussian.dim,
                   log_density=gaussian.log_density,
                   grad_log_density=gaussian.grad_log_density,
                   exact=gaussian)


def log_density_diag(params: VariationalParams, z: np.ndarray) -> np.ndarray:
    """Exact log density of the diagonal Gaussian, normalization included."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != params.dim:
        raise ValueError(f"dimension mismatch: z has {z.shape[-1]}, params have {params.dim}")
    x = (z - params.mean) / params.scale
    return np.sum(-0.5 * _LOG_2PI - params.log_scale - 0.5 * x * x, axis=-1)


def score_diag(params: VariationalParams, z: np.ndarray) -> np.ndarray:
    """Gradient of ``log_density_diag`` in the parameters, concatenated as
    (d/d mean, d/d log_scale).

    Per dimension: d/dmean_i = (z_i - mu_i) / sigma_i^2 and
    d/dlog_scale_i = ((z_i - mu_i) / sigma_i)^2 - 1.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != params.dim:
        raise ValueError(f"dimension mismatch: z has {z.shape[-1]}, params have {params.dim}")
    sigma = params.scale
    r = (z - params.mean) / sigma
    return np.concatenate([r / sigma, r * r - 1.0], axis=-1)


def sample_diag(params: VariationalParams, rng: np.random.Generator,
                size: Optional[int] = None) -> np.ndarray:
    """Draw mean + sigma * eps with standard-normal eps."""
    n = 1 if size is None else size
    eps = rng.standard_normal((n, params.dim))
    out = params.mean + params.scale * eps
    return out[0] if size is None else out


def mixture_log_density(mix: DefensiveMixture, z: np.ndarray) -> np.ndarray:
    """log(alpha * q + (1 - alpha) * nu), evaluated stably via log-sum-exp."""
    lq = log_density_diag(mix.variational, z)
    lt = mix.tail.log_density(z)
    return np.logaddexp(math.log(mix.alpha) + lq, math.log1p(-mix.alpha) + lt)


def sample_mixture(mix: DefensiveMixture, rng: np.random.Generator,
                   size: Optional[int] = None) -> np.ndarray:
    """Component-then-draw sampling of the defensive mixture."""
    n = 1 if size is None else size
    pick_tail = rng.random(n) >= mix.alpha
    out = sample_diag(mix.variational, rng, size=n)
    if np.any(pick_tail):
        out[pick_tail] = mix.tail.sample(rng, size=int(pick_tail.sum()))
    return out[0] if size is None else out


def sample_wishart_target(d: int, nu: float, rng: np.random.Generator) -> FullGaussian:
    """Zero-mean Gaussian whose covariance is one Wishart(nu, I/nu) draw.

    The scale matrix I/nu makes the expected covariance the identity, so the
    conditioning of the target is comparable across degrees of freedom. Uses
    the Bartlett decomposition, which yields the Cholesky factor directly.
    """
    if nu < d:
        raise ValueError(f"need nu >= d for an a.s. full-rank draw, got nu={nu}, d={d}")
    a = np.zeros((d, d))
    for i in range(d):
        a[i, i] = math.sqrt(rng.chisquare(nu - i))
    idx = np.tril_indices(d, k=-1)
    a[idx] = rng.standard_normal(len(idx[0]))
    return FullGaussian(np.zeros(d), a / math.sqrt(nu))


def _as_full(g: GaussianLike) -> FullGaussian:
    if isinstance(g, VariationalParams):
        return FullGaussian.from_diag(g)
    if isinstance(g, FullGaussian):
        return g
    raise TypeError(f"expected VariationalParams or FullGaussian, got {type(g).__name__}")


def kl_gaussian(p: GaussianLike, q: GaussianLike) -> float:
    """Exact KL(p || q) between Gaussians.

    0.5 * [ tr(Sq^-1 Sp) + (mq - mp)^T Sq^-1 (mq - mp) - d
            + log det Sq - log det Sp ]
    """
    fp, fq = _as_full(p), _as_full(q)
    if fp.dim != fq.dim:
        raise ValueError("dimension mismatch")
    lq = fq.cov_factor
    m = np.linalg.solve(lq, fp.cov_factor)
    delta = np.linalg.solve(lq, fq.mean - fp.mean)
    return 0.5 * (float(np.sum(m * m)) + float(delta @ delta) - fp.dim
                  + fq.log_det_cov - fp.log_det_cov)


def chi2_gaussian(p: GaussianLike, q: GaussianLike) -> float:
    """Chi-square divergence int (p/q - 1)^2 q dz between Gaussians.

    Returns +inf when the defining integral diverges; for diagonal pairs that
    is exactly the case 2/sigma_p_i^2 - 1/sigma_q_i^2 <= 0 in any dimension.
    """
    if isinstance(p, VariationalParams) and isinstance(q, VariationalParams):
        if p.dim != q.dim:
            raise ValueError("dimension mismatch")
        vp, vq = p.scale**2, q.scale**2
        a = 2.0 / vp - 1.0 / vq
        if np.any(a <= 0):
            return math.inf
        b = 2.0 * p.mean / vp - q.mean / vq
        c = p.mean**2 / vp - 0.5 * q.mean**2 / vq
        log_integral = float(np.sum(0.5 * np.log(vq) - np.log(vp)
                                    - 0.5 * np.log(a) + 0.5 * b * b / a - c))
        return float(np.expm1(log_integral)) if log_integral < 700 else math.inf

    fp, fq = _as_full(p), _as_full(q)
    if fp.dim != fq.dim:
        raise ValueError("dimension mismatch")
    prec_p = np.linalg.inv(fp.cov)
    prec_q = np.linalg.inv(fq.cov)
    a = 2.0 * prec_p - prec_q
    try:
        la = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return math.inf
    b = 2.0 * prec_p @ fp.mean - prec_q @ fq.mean
    c = float(fp.mean @ prec_p @ fp.mean) - 0.5 * float(fq.mean @ prec_q @ fq.mean)
    y = np.linalg.solve(la, b)
    log_det_a = 2.0 * float(np.sum(np.log(np.diag(la))))
    log_integral = (0.5 * fq.log_det_cov - fp.log_det_cov - 0.5 * log_det_a
                    + 0.5 * float(y @ y) - c)
    return float(np.expm1(log_integral)) if log_integral < 700 else math.inf


def log_w_star_gaussian(p: VariationalParams, q: VariationalParams) -> float:
    """log of the supremum of p/q over the whole space; +inf if unbounded."""
    if not (isinstance(p, VariationalParams) and isinstance(q, VariationalParams)):
        raise TypeError("w* is implemented for diagonal Gaussians only")
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    total = 0.0
    for mp, lsp, mq, lsq in zip(p.mean, p.log_scale, q.mean, q.log_scale):
        sp, sq = math.exp(lsp), math.exp(lsq)
        if sq < sp:
            return math.inf
        if sq == sp:
            if mp != mq:
                return math.inf
            continue
        # ratio maximized where the quadratic exponent difference peaks
        inv_p, inv_q = 1.0 / (sp * sp), 1.0 / (sq * sq)
        x = (mp * inv_p - mq * inv_q) / (inv_p - inv_q)
        total += (lsq - lsp - 0.5 * (x - mp) ** 2 * inv_p + 0.5 * (x - mq) ** 2 * inv_q)
    return total


def w_star_gaussian(p: VariationalParams, q: VariationalParams) -> float:
    """Supremum of the density ratio p/q; +inf when q is narrower anywhere."""
    log_w = log_w_star_gaussian(p, q)
    if log_w == math.inf or log_w > 700:
        return math.inf
    return math.exp(log_w)
