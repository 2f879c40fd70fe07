"""Process sampling: ODE integration, Langevin correction, guided fields.

A field is anything with velocity(Y, t) over stacks Y of shape (batch, n,
y_dim) plus n_points and y_dim attributes.  Score, denoised expectation and
its vector-Jacobian product are either provided by the field or derived from
velocity through the scheduler conversions.

Guidance composes multiplicatively in score space: the guided score is

    s(Y_t) + weight * J^T [ grad log q~_{r_t}(x1_hat(Y_t)) ]

and the guided velocity adds b_t times the same correction, where b_t is the
score-to-velocity coefficient.  J is the Jacobian of the denoising map
x1_hat; exact_vjp pulls the correction back through it, identity_approx
applies the correction directly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tape, backward
from .binned import factorized_grad
from .errors import ConfigError, ContractError, IntegrationError
from .network import FlowNetwork, forward_tokens
from .schedulers import (Scheduler, conversion_coefficients, eval_schedule,
                         guidance_variance, score_from_flow, x1_from_flow)

__all__ = [
    "LangevinCorrector", "SamplerConfig", "NetworkField",
    "integrate_ode", "conditional_guided_field", "poe_guided_field",
    "SampleResult", "sample_process",
]

_VARIANCE_FLOOR = 1e-6

_JACOBIAN_MODES = ("exact_vjp", "identity_approx")


@dataclass(frozen=True)
class LangevinCorrector:
    """Score-based corrector: y <- y + eps*s + sqrt(2 eps)*xi, eps = scale*sigma_t^2."""

    step_scale: float = 0.5
    iterations: int = 1

    def __post_init__(self):
        if self.step_scale <= 0 or self.iterations < 1:
            raise ConfigError("corrector needs step_scale > 0 and iterations >= 1")


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 256
    t_min: float | None = None          # None: inherit the scheduler's
    corrector: LangevinCorrector | None = None
    guidance_weight: float = 1.0
    r_constant: float | None = None     # None: r_t^2 from guidance_variance
    jacobian: str = "exact_vjp"
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not np.isfinite(self.guidance_weight) or self.guidance_weight < 0:
            raise ConfigError("guidance_weight must be finite and >= 0")
        if self.jacobian not in _JACOBIAN_MODES:
            raise ConfigError(f"jacobian must be one of {_JACOBIAN_MODES}")
        if self.r_constant is not None and not self.r_constant > 0:
            raise ConfigError("r_constant must be > 0 when set")

    def echo(self) -> dict:
        return asdict(self)


def _field_score(field, Y, t, sched):
    if hasattr(field, "score"):
        return field.score(Y, t)
    return score_from_flow(Y, field.velocity(Y, t), sched, t)


def _field_x1(field, Y, t, sched):
    if hasattr(field, "x1"):
        return field.x1(Y, t)
    return x1_from_flow(Y, field.velocity(Y, t), sched, t)


class NetworkField:
    """ScoreField over a trained FlowNetwork at fixed locations X."""

    def __init__(self, net: FlowNetwork, X, sched: Scheduler):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[-1] != net.config.x_dim:
            raise ContractError(
                f"X has width {X.shape[-1]}, network expects {net.config.x_dim}")
        self.net = net
        self.X = X
        self.sched = sched
        self.n_points = len(X)
        self.y_dim = net.config.output_dim

    def velocity(self, Y, t):
        return np.asarray(self.net.forward(self.X, Y, t), dtype=float)

    def score(self, Y, t):
        return score_from_flow(Y, self.velocity(Y, t), self.sched, t)

    def x1(self, Y, t):
        return x1_from_flow(Y, self.velocity(Y, t), self.sched, t)

    def x1_vjp(self, Y, t, cotangent):
        """J^T v through x1_hat = c*Y + d*u_theta(Y), via the reverse tape."""
        coef = conversion_coefficients(self.sched, t)
        dtype = self.net.dtype
        Y = np.asarray(Y, dtype=dtype)
        batched = Y.ndim == 3
        Yb = Y if batched else Y[None]
        cot = np.asarray(cotangent, dtype=dtype)
        cot_b = cot if cot.ndim == 3 else cot[None]
        with Tape() as tape:
            P = self.net.param_vars(tape, requires_grad=False)
            y_var = tape.var(Yb, requires_grad=True)
            t_arr = np.broadcast_to(np.asarray(t, dtype=float), (Yb.shape[0],))
            u = forward_tokens(self.net.config, P, self.X.astype(dtype), y_var,
                               t_arr)
            x1 = y_var * coef.c + u * coef.d
            backward(x1, seed=cot_b)
            out = np.asarray(y_var.grad, dtype=float)
        return out if batched else out[0]


class _GuidedField:
    """Shared wrapper: base field plus a score-space correction."""

    def __init__(self, base, sched: Scheduler, cfg: SamplerConfig):
        self.base = base
        self.sched = sched
        self.cfg = cfg
        self.n_points = base.n_points
        self.y_dim = base.y_dim
        if cfg.jacobian == "exact_vjp" and not hasattr(base, "x1_vjp"):
            raise ContractError(
                "base field exposes no x1_vjp; use jacobian='identity_approx'")

    def _r2(self, t: float) -> float:
        if self.cfg.r_constant is not None:
            return self.cfg.r_constant**2
        return guidance_variance(self.sched, t)

    def _pullback(self, Y, t, cotangent):
        if self.cfg.jacobian == "exact_vjp":
            return self.base.x1_vjp(Y, t, cotangent)
        return cotangent

    def _correction(self, Y, t):
        raise NotImplementedError

    def velocity(self, Y, t):
        u = self.base.velocity(Y, t)
        if self.cfg.guidance_weight == 0.0:
            return u
        coef = conversion_coefficients(self.sched, t)
        return u + coef.b * self.cfg.guidance_weight * self._correction(Y, t)

    def score(self, Y, t):
        s = _field_score(self.base, Y, t, self.sched)
        if self.cfg.guidance_weight == 0.0:
            return s
        return s + self.cfg.guidance_weight * self._correction(Y, t)

    # Guidance terms stack additively on one base model, so the denoising
    # map and its Jacobian stay those of the innermost field.
    def x1(self, Y, t):
        return _field_x1(self.base, Y, t, self.sched)

    def x1_vjp(self, Y, t, cotangent):
        return self.base.x1_vjp(Y, t, cotangent)


class _ConditionalGuidedField(_GuidedField):
    def __init__(self, base, y_obs, context_idx, sigma_meas, sched, cfg):
        super().__init__(base, sched, cfg)
        self.context_idx = np.asarray(context_idx, dtype=int)
        if len(self.context_idx) < 1:
            raise ContractError("conditional guidance needs at least one context point")
        if np.any(self.context_idx < 0) or np.any(self.context_idx >= base.n_points):
            raise ContractError("context indices out of range")
        y_obs = np.asarray(y_obs, dtype=float)
        if y_obs.ndim == 1:
            y_obs = y_obs[:, None]
        if y_obs.shape != (len(self.context_idx), base.y_dim):
            raise ContractError(
                f"y_obs shape {y_obs.shape} does not match "
                f"({len(self.context_idx)}, {base.y_dim})")
        self.y_obs = y_obs
        if sigma_meas < 0:
            raise ContractError("sigma_meas must be >= 0")
        self.sigma_meas = float(sigma_meas)

    def _correction(self, Y, t):
        var = max(self._r2(t) + self.sigma_meas**2, _VARIANCE_FLOOR)
        x1 = _field_x1(self.base, Y, t, self.sched)
        cot = np.zeros_like(x1)
        cot[..., self.context_idx, :] = (self.y_obs - x1[..., self.context_idx, :]) / var
        return self._pullback(Y, t, cot)


class _PoeGuidedField(_GuidedField):
    def __init__(self, base, experts, sched, cfg):
        super().__init__(base, sched, cfg)
        if base.y_dim != 1:
            raise ContractError("expert guidance requires scalar outputs per point")
        if len(experts) != base.n_points:
            raise ContractError(
                f"{len(experts)} experts for {base.n_points} target coordinates")
        self.experts = list(experts)
        self._active = [i for i, q in enumerate(self.experts) if q is not None]
        if not self._active:
            raise ContractError("all experts are None; nothing to guide toward")

    def _correction(self, Y, t):
        r = np.sqrt(self._r2(t))
        x1 = _field_x1(self.base, Y, t, self.sched)
        grads = np.zeros_like(x1)
        active = [self.experts[i] for i in self._active]
        grads[..., self._active, 0] = factorized_grad(
            active, x1[..., self._active, 0], r)
        return self._pullback(Y, t, grads)


def conditional_guided_field(field, y_obs, context_idx, sigma_meas: float,
                             sched: Scheduler, cfg: SamplerConfig):
    """Condition on observed outputs at a subset of the field's coordinates.

    Adds the score of N(y_obs; x1_hat_ctx(Y_t), (r_t^2 + sigma_meas^2) I) at
    the context coordinates (pulled back through the x1_hat Jacobian per
    cfg.jacobian); target coordinates evolve jointly.
    """
    return _ConditionalGuidedField(field, y_obs, context_idx, sigma_meas, sched, cfg)


def poe_guided_field(field, experts, sched: Scheduler, cfg: SamplerConfig):
    """Multiply the base process by one binned expert per target coordinate.

    A None entry leaves its coordinate unguided (used when only some of the
    joint coordinates carry experts).
    """
    return _PoeGuidedField(field, experts, sched, cfg)


def integrate_ode(field, sched: Scheduler, cfg: SamplerConfig,
                  n_samples: int) -> np.ndarray:
    """Integrate the field from t_min to 1; returns samples (n_samples, n, y_dim).

    Initialization is sigma_{t_min} times a standard normal draw (the path
    start is near-Gaussian).  Advance is explicit Euler on a uniform grid;
    the optional Langevin corrector runs before each predictor step, never
    at t = 1.
    """
    if n_samples < 1:
        raise ContractError("n_samples must be >= 1")
    t0 = cfg.t_min if cfg.t_min is not None else sched.t_min
    if not 0.0 < t0 < 1.0:
        raise ConfigError(f"start time must lie in (0, 1), got {t0}")
    grid = np.linspace(t0, 1.0, cfg.steps + 1)
    rng = np.random.default_rng(cfg.seed)
    _, sigma0, _, _ = eval_schedule(sched, t0)
    Y = sigma0 * rng.standard_normal((n_samples, field.n_points, field.y_dim))
    for k in range(cfg.steps):
        t = float(grid[k])
        if cfg.corrector is not None:
            _, sigma_t, _, _ = eval_schedule(sched, t)
            eps = cfg.corrector.step_scale * sigma_t**2
            if eps > 0:
                noise_scale = np.sqrt(2.0 * eps)
                for _ in range(cfg.corrector.iterations):
                    s = _field_score(field, Y, t, sched)
                    Y = Y + eps * s + noise_scale * rng.standard_normal(Y.shape)
        Y = Y + (grid[k + 1] - grid[k]) * field.velocity(Y, t)
        if not np.all(np.isfinite(Y)):
            raise IntegrationError("integration state became non-finite", step=k)
    return Y


@dataclass(frozen=True)
class SampleResult:
    samples: np.ndarray          # (n_samples, n, y_dim)
    quantile_levels: np.ndarray  # (L,)
    quantiles: np.ndarray        # (L, n, y_dim)

    def to_record(self, X, cfg: SamplerConfig, provenance: dict | None = None,
                  thin: int | None = None) -> dict:
        samples = self.samples if thin is None else self.samples[::max(thin, 1)]
        return {
            "x": np.asarray(X).tolist(),
            "samples": samples.tolist(),
            "quantile_levels": self.quantile_levels.tolist(),
            "quantiles": self.quantiles.tolist(),
            "config": cfg.echo(),
            "provenance": provenance or {},
        }


def sample_process(field, sched: Scheduler, cfg: SamplerConfig,
                   n_samples: int, quantile_levels=None) -> SampleResult:
    """Draw independent trajectories and per-coordinate marginal quantiles."""
    if quantile_levels is None:
        quantile_levels = np.arange(1, 10) / 10.0
    levels = np.asarray(quantile_levels, dtype=float)
    samples = integrate_ode(field, sched, cfg, n_samples)
    quantiles = np.quantile(samples, levels, axis=0)
    return SampleResult(samples=samples, quantile_levels=levels,
                        quantiles=quantiles)
