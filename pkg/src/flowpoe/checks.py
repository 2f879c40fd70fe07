"""Stochastic-process verification: exchangeability, marginal consistency,
and predictive-quality metrics.

Exchangeability is asserted at the architecture level, where it is exact: the
network's outputs must permute with its input tokens to float precision.
Marginal consistency is a statistical two-sample test: sampling at a superset
of locations and discarding the extras must match sampling at the subset
directly.  The exact GP oracle provably satisfies both, so its reports gate
test suites; trained-network consistency is emitted as a diagnostic only.

Both checks come with deliberately broken fixtures (a positional leak, a
size-dependent prior) that the suite requires to fail.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import ks_2samp

from .errors import ContractError
from .gp import GpKernelSpec, GpOracleField
from .network import FlowNetwork
from .sampling import SamplerConfig, integrate_ode
from .schedulers import Scheduler

__all__ = [
    "CheckReport", "exchangeability_check", "consistency_check",
    "predictive_metrics", "PositionalLeakNetwork", "SizeDependentOracle",
]


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one check; passed is derived, never supplied."""

    name: str
    statistic: float
    threshold: float
    gated: bool
    sample_sizes: dict
    seed: int

    @property
    def passed(self) -> bool:
        return self.statistic <= self.threshold

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "passed": bool(self.passed),
            "gated": self.gated,
            "sample_sizes": self.sample_sizes,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def exchangeability_check(net, trials: int = 16, seed: int = 0,
                          threshold: float = 1e-12,
                          n_points: int = 6) -> CheckReport:
    """Max absolute deviation between permuted outputs and outputs of
    permuted inputs, over random inputs and permutations.

    Runs in float64: the property is architectural, so the only slack allowed
    is reduction-order rounding.  net needs a forward(X, Y, t) method and a
    config with x_dim/output_dim (a FlowNetwork or a fixture wrapping one).
    """
    rng = np.random.default_rng(seed)
    net64 = net.astype(np.float64) if hasattr(net, "astype") else net
    cfg = net64.config
    worst = 0.0
    for _ in range(trials):
        X = rng.standard_normal((n_points, cfg.x_dim))
        Y = rng.standard_normal((2, n_points, cfg.output_dim))
        t = rng.uniform(0.05, 0.95)
        perm = rng.permutation(n_points)
        out = np.asarray(net64.forward(X, Y, t), dtype=float)
        out_perm = np.asarray(net64.forward(X[perm], Y[:, perm], t), dtype=float)
        worst = max(worst, float(np.abs(out[:, perm] - out_perm).max()))
    return CheckReport(name="exchangeability", statistic=worst,
                       threshold=threshold, gated=True,
                       sample_sizes={"trials": trials, "n_points": n_points},
                       seed=seed)


def _subset_indices(X_super: np.ndarray, X_sub: np.ndarray) -> np.ndarray:
    idx = []
    for row in X_sub:
        hits = np.where(np.all(X_super == row, axis=-1))[0]
        if len(hits) == 0:
            raise ContractError(f"subset location {row} is not in the superset")
        idx.append(hits[0])
    return np.asarray(idx, dtype=int)


def consistency_check(make_field, X_super, X_sub, sched: Scheduler,
                      cfg: SamplerConfig, n_samples: int = 8192,
                      threshold: float = 0.02, gated: bool = True,
                      name: str = "consistency") -> CheckReport:
    """Max per-coordinate KS statistic between direct and marginalized samples.

    make_field(X) builds the score field over a location set; samples drawn
    at X_super and restricted to the X_sub coordinates are compared with
    samples drawn at X_sub directly (independent seeds).
    """
    X_super = np.asarray(X_super, dtype=float)
    X_sub = np.asarray(X_sub, dtype=float)
    if X_super.ndim == 1:
        X_super = X_super[:, None]
    if X_sub.ndim == 1:
        X_sub = X_sub[:, None]
    idx = _subset_indices(X_super, X_sub)

    direct_cfg = cfg
    marginal_cfg = SamplerConfig(**{**cfg.echo(), "seed": cfg.seed + 1})
    direct = integrate_ode(make_field(X_sub), sched, direct_cfg, n_samples)
    full = integrate_ode(make_field(X_super), sched, marginal_cfg, n_samples)
    marginal = full[:, idx, :]

    worst = 0.0
    for i in range(len(X_sub)):
        for d in range(direct.shape[-1]):
            stat = ks_2samp(direct[:, i, d], marginal[:, i, d]).statistic
            worst = max(worst, float(stat))
    return CheckReport(name=name, statistic=worst, threshold=threshold,
                       gated=gated,
                       sample_sizes={"n_samples": n_samples,
                                     "n_super": len(X_super),
                                     "n_sub": len(X_sub)},
                       seed=cfg.seed)


def predictive_metrics(samples: np.ndarray, reference_y,
                       exact_mean=None, exact_cov=None) -> dict:
    """Predictive-quality summary of a sample stack against a reference.

    samples: (n_samples, m) or (n_samples, m, 1).  reference_y: length-m
    values (exact posterior mean or held-out truth).  Central-interval
    coverage uses strict inclusion, so degenerate zero-width intervals never
    count as covering.  When the exact posterior is supplied, moment errors
    against it are included.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 3:
        samples = samples[..., 0]
    if samples.ndim != 2 or len(samples) == 0:
        raise ContractError("samples must be a nonempty (n_samples, m) stack")
    ref = np.asarray(reference_y, dtype=float).reshape(-1)
    if ref.shape[0] != samples.shape[1]:
        raise ContractError("reference length does not match sample coordinates")

    mean = samples.mean(axis=0)
    metrics = {
        "n_samples": int(len(samples)),
        "mean_rmse": float(np.sqrt(np.mean((mean - ref) ** 2))),
    }
    for level, lo_q, hi_q in ((50, 0.25, 0.75), (90, 0.05, 0.95)):
        lo = np.quantile(samples, lo_q, axis=0)
        hi = np.quantile(samples, hi_q, axis=0)
        metrics[f"coverage_{level}"] = float(np.mean((ref > lo) & (ref < hi)))
    if exact_mean is not None:
        exact_mean = np.asarray(exact_mean, dtype=float).reshape(-1)
        metrics["mean_abs_err_max"] = float(np.abs(mean - exact_mean).max())
    if exact_cov is not None:
        exact_var = np.diag(np.asarray(exact_cov, dtype=float))
        var = samples.var(axis=0)
        metrics["var_rel_err_max"] = float(
            np.abs(var - exact_var).max() / max(exact_var.max(), 1e-12))
    return metrics


class PositionalLeakNetwork:
    """Negative-control fixture: a network with a positional bias added.

    Breaks permutation equivariance on purpose; the exchangeability check
    must fail on it.
    """

    def __init__(self, net: FlowNetwork, leak_scale: float = 0.01):
        self.net = net
        self.leak_scale = leak_scale
        self.config = net.config

    def astype(self, dtype) -> "PositionalLeakNetwork":
        return PositionalLeakNetwork(self.net.astype(dtype), self.leak_scale)

    def forward(self, X, Y, t):
        out = np.asarray(self.net.forward(X, Y, t), dtype=float)
        n_tokens = out.shape[-2]
        bias = self.leak_scale * np.arange(n_tokens, dtype=float)[:, None]
        return out + bias


class SizeDependentOracle:
    """Negative-control fixture: prior variance grows with the location count.

    Marginals at a subset then depend on how many extra points were sampled
    alongside, so the consistency check must fail.  Use as a make_field
    factory: SizeDependentOracle(spec, sched).
    """

    def __init__(self, spec: GpKernelSpec, sched: Scheduler,
                 inflation: float = 0.5):
        self.spec = spec
        self.sched = sched
        self.inflation = inflation

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        n = len(X)
        scaled = GpKernelSpec(
            family=self.spec.family,
            length_scale=self.spec.length_scale,
            signal_variance=self.spec.signal_variance * (1.0 + self.inflation * (n - 1)),
            jitter=self.spec.jitter,
        )
        return GpOracleField(scaled, X, self.sched)
