"""Affine conditional-flow schedules and parameterization conversions.

A scheduler is the pair (alpha_t, sigma_t) defining the conditional Gaussian
path y_t = alpha_t * y_1 + sigma_t * y_0 from noise (t=0) to data (t=1).
For such paths the velocity field, the score and the denoised expectation
x1_hat = E[Y_1 | Y_t] are linearly interconvertible:

    u(y)      = a * y + b * score(y)
    x1_hat(y) = c * y + d * u(y)

with coefficients a, b, c, d that are closed-form functions of the schedule
and its derivatives.  Only the conditional optimal-transport schedule
(alpha=t, sigma=1-t) ships; the straight paths it defines make Euler
integration unusually accurate.

The c/d pair is derived from Tweedie's formula x1_hat = (y + sigma^2*s)/alpha
combined with the velocity/score relation, which for OT reduces to the exact
identity x1_hat = y + (1-t)*u.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NonFiniteError, SingularityError

__all__ = [
    "Scheduler",
    "ConversionCoefficients",
    "eval_schedule",
    "conversion_coefficients",
    "flow_from_score",
    "score_from_flow",
    "x1_from_flow",
    "guidance_variance",
]

OPTIMAL_TRANSPORT = "optimal_transport"
_KNOWN_KINDS = (OPTIMAL_TRANSPORT,)


@dataclass(frozen=True)
class Scheduler:
    """Schedule choice plus the small start time used to dodge the t->0 singularity."""

    kind: str = OPTIMAL_TRANSPORT
    t_min: float = 1e-3

    def __post_init__(self):
        if self.kind not in _KNOWN_KINDS:
            raise ConfigError(f"unknown scheduler kind {self.kind!r}")
        if not 0.0 < self.t_min < 1.0:
            raise ConfigError(f"t_min must lie in (0, 1), got {self.t_min}")


@dataclass(frozen=True)
class ConversionCoefficients:
    """Scalars linking velocity, score and denoised-expectation views at one t."""

    a: float
    b: float
    c: float
    d: float


def eval_schedule(sched: Scheduler, t):
    """Return (alpha, sigma, alpha_dot, sigma_dot) at time t in [0, 1].

    t may be a scalar (plain floats come back) or an array (arrays come back,
    elementwise).
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise DomainError(f"schedule time must lie in [0, 1], got {t}")
    # Only the OT path is shipped; dispatch here when more kinds land.
    if t_arr.ndim == 0:
        tf = float(t_arr)
        return tf, 1.0 - tf, 1.0, -1.0
    return t_arr, 1.0 - t_arr, np.ones_like(t_arr), -np.ones_like(t_arr)


def conversion_coefficients(sched: Scheduler, t: float) -> ConversionCoefficients:
    """Coefficients (a, b, c, d) of the linear parameterization conversions at t.

    Requires t >= t_min: the a = alpha_dot/alpha term blows up as alpha -> 0.
    """
    t = float(t)
    if t < sched.t_min:
        raise SingularityError(
            f"conversion coefficients are singular below t_min={sched.t_min}, got t={t}"
        )
    alpha, sigma, alpha_dot, sigma_dot = eval_schedule(sched, t)
    a = alpha_dot / alpha
    b = (sigma**2 * alpha_dot - sigma * sigma_dot * alpha) / alpha
    denom = sigma_dot * alpha - sigma * alpha_dot
    c = sigma_dot / denom
    d = -sigma / denom
    return ConversionCoefficients(a=a, b=b, c=c, d=d)


def _require_finite(name: str, arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite values")
    return arr


def flow_from_score(y, score, sched: Scheduler, t: float):
    """Velocity u = a*y + b*score, elementwise over the output stack."""
    y = _require_finite("y", y)
    score = _require_finite("score", score)
    coef = conversion_coefficients(sched, t)
    return coef.a * y + coef.b * score


def score_from_flow(y, u, sched: Scheduler, t: float):
    """Score s = (u - a*y)/b, the exact inverse of `flow_from_score`."""
    y = _require_finite("y", y)
    u = _require_finite("u", u)
    coef = conversion_coefficients(sched, t)
    if coef.b == 0.0:
        raise SingularityError(f"score is undefined at t={t}: b coefficient vanishes")
    return (u - coef.a * y) / coef.b


def x1_from_flow(y, u, sched: Scheduler, t: float):
    """Denoised expectation x1_hat = c*y + d*u (equals y + (1-t)*u for OT)."""
    y = _require_finite("y", y)
    u = _require_finite("u", u)
    coef = conversion_coefficients(sched, t)
    return coef.c * y + coef.d * u


def guidance_variance(sched: Scheduler, t: float) -> float:
    """Default variance r_t^2 = sigma^2/(sigma^2 + alpha^2) of the x1_hat posterior proxy."""
    alpha, sigma, _, _ = eval_schedule(sched, t)
    return sigma**2 / (sigma**2 + alpha**2)
