"""Gaussian-process priors: kernels, prior sampling, exact posteriors, and the
exact noised-marginal score oracle.

The oracle is the verification backbone of the package: for data drawn from a
zero-mean GP with Gram matrix K, the marginal of the interpolant at time t is
N(0, alpha_t^2 K + sigma_t^2 I), so its score, the posterior denoising map
x1hat = alpha_t K (alpha_t^2 K + sigma_t^2 I)^{-1} y_t, and the Jacobian of
that map are all available in closed form.  Every sampler in the package can
therefore be checked against ground truth without training anything.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .errors import ConfigError, ContractError, NumericalError
from .schedulers import Scheduler, eval_schedule
from .tasks import RegressionTask, task_to_record

__all__ = [
    "KERNEL_FAMILIES", "GpKernelSpec", "gram", "cross_gram", "sample_prior",
    "exact_posterior", "ExactNoised", "exact_noised_score",
    "GeneratorConfig", "gen_tasks", "gen_records", "GpOracleField",
]

KERNEL_FAMILIES = ("squared_exponential", "matern_3_2", "matern_5_2")

# Jitter escalation ladder for Cholesky recovery on near-degenerate inputs.
_JITTER_START = 1e-8
_JITTER_MAX = 1e-4


@dataclass(frozen=True)
class GpKernelSpec:
    """Stationary kernel: family, length scale, signal variance, diagonal jitter."""

    family: str = "squared_exponential"
    length_scale: float = 1.0
    signal_variance: float = 1.0
    jitter: float = _JITTER_START

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ConfigError(f"unknown kernel family {self.family!r}; "
                              f"choose from {KERNEL_FAMILIES}")
        if not (self.length_scale > 0):
            raise ConfigError(f"length_scale must be > 0, got {self.length_scale}")
        if not (self.signal_variance > 0):
            raise ConfigError(f"signal_variance must be > 0, got {self.signal_variance}")
        if self.jitter < 0:
            raise ConfigError(f"jitter must be >= 0, got {self.jitter}")


def _as_locations(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or len(X) == 0:
        raise ContractError(f"locations must form a nonempty (n, dx) array, got shape {X.shape}")
    return X


def cross_gram(spec: GpKernelSpec, X1, X2) -> np.ndarray:
    """Covariance k(x1_i, x2_j) with no jitter, shape (n1, n2)."""
    X1, X2 = _as_locations(X1), _as_locations(X2)
    r = cdist(X1, X2) / spec.length_scale
    if spec.family == "squared_exponential":
        k = np.exp(-0.5 * r**2)
    elif spec.family == "matern_3_2":
        s = np.sqrt(3.0) * r
        k = (1.0 + s) * np.exp(-s)
    else:
        s = np.sqrt(5.0) * r
        k = (1.0 + s + s**2 / 3.0) * np.exp(-s)
    return spec.signal_variance * k


def gram(spec: GpKernelSpec, X) -> np.ndarray:
    """Kernel matrix over one location set, jitter added on the diagonal."""
    K = cross_gram(spec, X, X)
    # Exact symmetry: cdist(X, X) is symmetric only up to rounding.
    K = 0.5 * (K + K.T)
    if spec.jitter:
        K[np.diag_indices_from(K)] += spec.jitter
    return K


def _chol(mat: np.ndarray):
    """Cholesky factorization with escalating diagonal jitter.

    Starts from the matrix as given; on failure adds _JITTER_START and
    multiplies by 10 until _JITTER_MAX before giving up.
    """
    extra = 0.0
    while True:
        try:
            return cho_factor(mat + extra * np.eye(len(mat)), lower=True)
        except np.linalg.LinAlgError:
            extra = _JITTER_START if extra == 0.0 else extra * 10.0
            if extra > _JITTER_MAX:
                raise NumericalError(
                    f"Cholesky failed after jitter escalation to {_JITTER_MAX:g}")


def sample_prior(spec: GpKernelSpec, X, seed, n_samples: int = 1) -> np.ndarray:
    """Draw n_samples functions from N(0, gram(spec, X)); shape (n_samples, n).

    seed may be anything np.random.default_rng accepts, or a Generator.
    """
    X = _as_locations(X)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    c, lower = _chol(gram(spec, X))
    L = np.tril(c)
    eps = rng.standard_normal((n_samples, len(X)))
    return eps @ L.T


def exact_posterior(spec: GpKernelSpec, task: RegressionTask,
                    obs_noise: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """GP posterior (mean, cov) at task.target_x given the task context.

    Output dimensions are treated as independent draws from the same prior, so
    mean has shape (m, dy) and cov (m, m) is shared across dimensions.  With an
    empty context this is the prior: mean zero, cov = gram at the targets.
    """
    if obs_noise < 0:
        raise ContractError(f"obs_noise must be >= 0, got {obs_noise}")
    Kss = gram(spec, task.target_x)
    if task.n_context == 0:
        return np.zeros((task.n_target, task.y_dim)), Kss
    K = gram(spec, task.context_x) + obs_noise * np.eye(task.n_context)
    Ks = cross_gram(spec, task.context_x, task.target_x)
    c = _chol(K)
    solved = cho_solve(c, np.hstack([task.context_y, Ks]))
    mean = Ks.T @ solved[:, :task.y_dim]
    cov = Kss - Ks.T @ solved[:, task.y_dim:]
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def _along_points(M: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Apply an (n, n) matrix along the points axis of Y (..., n, dy) or (n,)."""
    if Y.ndim == 1:
        return M @ Y
    return np.einsum("ij,...jd->...id", M, Y)


@dataclass(frozen=True)
class ExactNoised:
    """Closed-form quantities of the noised GP marginal N(0, a^2 K + s^2 I)."""

    score: np.ndarray
    x1: np.ndarray
    x1_jacobian: np.ndarray  # (n, n); the x1 map is linear in y_t


def exact_noised_score(spec: GpKernelSpec, X, y_t, sched: Scheduler,
                       t: float) -> ExactNoised:
    """Score of N(0, alpha^2 K + sigma^2 I) at y_t plus the exact x1 map.

    score = -(alpha^2 K + sigma^2 I)^{-1} y_t
    x1    = alpha K (alpha^2 K + sigma^2 I)^{-1} y_t      (Tweedie)
    y_t may be shaped (n,), (n, dy), or batched (..., n, dy).
    """
    X = _as_locations(X)
    y_t = np.asarray(y_t, dtype=float)
    alpha, sigma, _, _ = eval_schedule(sched, t)
    K = gram(spec, X)
    c = _chol(alpha**2 * K + sigma**2 * np.eye(len(K)))
    Sinv = cho_solve(c, np.eye(len(K)))
    M = alpha * K @ Sinv
    score = -_along_points(Sinv, y_t)
    return ExactNoised(score=score, x1=_along_points(M, y_t), x1_jacobian=M)


class GpOracleField:
    """Exact velocity field for GP data: the ground-truth ScoreField.

    Velocity comes from the analytic score of the noised marginal through the
    standard conversion; the x1 map is linear, so its vector-Jacobian product
    is a single matrix transpose.  Per-time factorizations are cached, which
    keeps repeated ODE sweeps over a fixed grid cheap.
    """

    def __init__(self, spec: GpKernelSpec, X, sched: Scheduler, y_dim: int = 1):
        self.spec = spec
        self.X = _as_locations(X)
        self.sched = sched
        self.y_dim = y_dim
        self.K = gram(spec, self.X)
        self._eye = np.eye(len(self.K))
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def n_points(self) -> int:
        return len(self.K)

    def _maps(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(Sinv, M) at time t: noised-precision and x1 matrices."""
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        alpha, sigma, _, _ = eval_schedule(self.sched, t)
        c = _chol(alpha**2 * self.K + sigma**2 * self._eye)
        Sinv = cho_solve(c, self._eye)
        M = alpha * self.K @ Sinv
        self._cache[t] = (Sinv, M)
        return Sinv, M

    def score(self, Y: np.ndarray, t: float) -> np.ndarray:
        Sinv, _ = self._maps(t)
        return -_along_points(Sinv, np.asarray(Y, dtype=float))

    def velocity(self, Y: np.ndarray, t: float) -> np.ndarray:
        alpha, sigma, alpha_dot, sigma_dot = eval_schedule(self.sched, t)
        a = alpha_dot / alpha
        b = (sigma**2 * alpha_dot - sigma * sigma_dot * alpha) / alpha
        return a * np.asarray(Y, dtype=float) + b * self.score(Y, t)

    def x1(self, Y: np.ndarray, t: float) -> np.ndarray:
        _, M = self._maps(t)
        return _along_points(M, np.asarray(Y, dtype=float))

    def x1_vjp(self, Y: np.ndarray, t: float, cotangent: np.ndarray) -> np.ndarray:
        """J^T v for the x1 map; independent of Y since the map is linear."""
        _, M = self._maps(t)
        return _along_points(M.T, np.asarray(cotangent, dtype=float))


@dataclass(frozen=True)
class GeneratorConfig:
    """Settings for the synthetic GP task stream."""

    families: tuple[str, ...] = KERNEL_FAMILIES
    length_scale_range: tuple[float, float] = (0.1, 2.0)
    signal_variance: float = 1.0
    x_range: tuple[float, float] = (-2.0, 2.0)
    points_range: tuple[int, int] = (16, 64)
    target_fraction: float = 0.25
    x_dim: int = 1

    def __post_init__(self):
        if len(self.families) == 0:
            raise ConfigError("at least one kernel family must be enabled")
        for fam in self.families:
            if fam not in KERNEL_FAMILIES:
                raise ConfigError(f"unknown kernel family {fam!r}")
        lo, hi = self.length_scale_range
        if not (0 < lo <= hi):
            raise ConfigError(f"bad length_scale_range {self.length_scale_range}")
        lo, hi = self.points_range
        if not (1 <= lo <= hi):
            raise ConfigError(f"bad points_range {self.points_range}")
        if not (0.0 < self.target_fraction < 1.0):
            raise ConfigError(f"target_fraction must lie in (0, 1), "
                              f"got {self.target_fraction}")


def _gen_one(config: GeneratorConfig, seed: int, index: int) -> tuple[RegressionTask, dict]:
    # Each task gets its own generator keyed by (seed, index), so the stream
    # is reproducible and any slice of it can be produced independently.
    rng = np.random.default_rng([seed, index])
    family = config.families[rng.integers(len(config.families))]
    lo, hi = config.length_scale_range
    length_scale = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    spec = GpKernelSpec(family=family, length_scale=length_scale,
                        signal_variance=config.signal_variance)
    n_lo, n_hi = config.points_range
    total = int(rng.integers(n_lo, n_hi + 1))
    X = rng.uniform(config.x_range[0], config.x_range[1], size=(total, config.x_dim))
    y = sample_prior(spec, X, rng)[0][:, None]
    n_target = max(1, round(total * config.target_fraction))
    n_ctx = total - n_target
    task = RegressionTask(context_x=X[:n_ctx], context_y=y[:n_ctx],
                          target_x=X[n_ctx:], target_y=y[n_ctx:])
    meta = {"family": family, "length_scale": length_scale,
            "signal_variance": config.signal_variance,
            "seed": seed, "index": index}
    return task, meta


def gen_tasks(config: GeneratorConfig, seed: int,
              count: int) -> Iterator[tuple[RegressionTask, dict]]:
    """Reproducible stream of GP regression tasks with kernel metadata."""
    for i in range(count):
        yield _gen_one(config, seed, i)


def gen_records(config: GeneratorConfig, seed: int, count: int) -> Iterator[dict]:
    """The same stream as gen_tasks, as JSON-serializable records."""
    for task, meta in gen_tasks(config, seed, count):
        yield task_to_record(task, meta)
