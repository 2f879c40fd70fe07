"""Conditional flow-matching training: loss, AdamW, schedule, checkpoints.

The training target is the interpolant velocity: with Y_t = alpha_t Y1 +
sigma_t Y0 and Y0 standard normal, the loss is the elementwise mean of
|| alphadot_t Y1 + sigmadot_t Y0 - u_theta(Y_t) ||^2 over a batch of tasks,
with t drawn per task from a logit-Normal sampler.  A zero-initialized
network therefore starts at the data-noise baseline mean||alphadot Y1 +
sigmadot Y0||^2.

Checkpoints carry parameters, optimizer moments, and the exact generator
state, so a resumed run reproduces an uninterrupted one bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, backward
from .errors import ConfigError, ContractError, TrainingError
from .network import FlowNetwork, NetworkConfig, forward_tokens
from .schedulers import Scheduler, eval_schedule
from .tasks import RegressionTask

__all__ = [
    "TrainConfig", "sample_times", "cfm_loss", "AdamW", "cosine_lr",
    "TrainResult", "train", "save_checkpoint", "load_checkpoint",
    "stack_tasks",
]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    weight_decay: float = 0.01
    batch_tasks: int = 32
    total_steps: int = 5000
    lr_floor: float = 1e-5
    time_loc: float = 0.0
    time_scale: float = 1.0
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_tasks < 1 or self.total_steps < 0:
            raise ConfigError("batch_tasks must be >= 1 and total_steps >= 0")
        if self.time_scale <= 0:
            raise ConfigError("time_scale must be > 0")
        if not (0 <= self.lr_floor <= self.learning_rate):
            raise ConfigError("lr_floor must lie in [0, learning_rate]")


def sample_times(rng: np.random.Generator, n: int, loc: float = 0.0,
                 scale: float = 1.0) -> np.ndarray:
    """Logit-Normal draws: sigmoid(loc + scale * z), z standard normal."""
    z = loc + scale * rng.standard_normal(n)
    return 1.0 / (1.0 + np.exp(-z))


def stack_tasks(tasks: list) -> tuple[np.ndarray, np.ndarray]:
    """Stack equally sized tasks into (B, n, dx) locations and (B, n, dy) outputs.

    Training treats context and targets identically (the model learns the
    joint process), so each task contributes its full point set.
    """
    if not tasks:
        raise ContractError("empty task batch")
    sizes = {(t.n_context + t.n_target, t.x_dim) for t in tasks}
    if len(sizes) != 1:
        raise ContractError(f"tasks in a batch must share (n, dx); got {sorted(sizes)}")
    X = np.stack([t.joint_x() for t in tasks])
    Y = np.stack([t.joint_y() for t in tasks])
    return X, Y


def cfm_loss(net: FlowNetwork, X: np.ndarray, Y1: np.ndarray,
             sched: Scheduler, t: np.ndarray,
             Y0: np.ndarray) -> tuple[float, dict]:
    """Flow-matching loss and parameter gradients for one prepared batch.

    X (B, n, dx), Y1 (B, n, dy): clean data.  t (B,): per-task times.
    Y0: standard-normal draws matching Y1.  Returns (loss, grads by name).
    """
    dtype = net.dtype
    alpha, sigma, alpha_dot, sigma_dot = eval_schedule(sched, t)
    bcast = (-1,) + (1,) * (Y1.ndim - 1)
    a, s = alpha.reshape(bcast), sigma.reshape(bcast)
    ad, sd = alpha_dot.reshape(bcast), sigma_dot.reshape(bcast)
    Yt = (a * Y1 + s * Y0).astype(dtype)
    target = (ad * Y1 + sd * Y0).astype(dtype)

    with Tape() as tape:
        P = net.param_vars(tape)
        y_var = tape.var(Yt, requires_grad=False)
        pred = forward_tokens(net.config, P, X.astype(dtype), y_var, t)
        diff = pred - tape.var(target, requires_grad=False)
        loss = (diff * diff).mean()
        backward(loss)
        grads = {k: v.grad for k, v in P.items()}
    return float(loss.value), grads


class AdamW:
    """Adam with decoupled weight decay over named parameter arrays."""

    def __init__(self, params: dict, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lr: float,
             weight_decay: float) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)
            p -= (lr * (update + weight_decay * p)).astype(p.dtype)


def cosine_lr(step: int, total_steps: int, base: float, floor: float) -> float:
    if total_steps <= 0:
        return base
    frac = min(step / total_steps, 1.0)
    return floor + 0.5 * (base - floor) * (1.0 + np.cos(np.pi * frac))


@dataclass
class TrainResult:
    net: FlowNetwork
    history: np.ndarray  # rows of (step, loss, lr)
    steps_run: int


def save_checkpoint(path, net: FlowNetwork, opt: AdamW,
                    rng: np.random.Generator, step: int,
                    train_config: TrainConfig) -> None:
    meta = {
        "step": step,
        "adam_step": opt.step_count,
        "adam_beta1": opt.beta1,
        "adam_beta2": opt.beta2,
        "adam_eps": opt.eps,
        "rng_state": rng.bit_generator.state,
        "net_config": vars(net.config),
        "train_config": vars(train_config),
        "dtype": str(net.dtype),
    }
    arrays = {f"param/{k}": v for k, v in net.params.items()}
    arrays.update({f"adam_m/{k}": v for k, v in opt.m.items()})
    arrays.update({f"adam_v/{k}": v for k, v in opt.v.items()})
    np.savez(path, meta=json.dumps(meta), **arrays)


def load_checkpoint(path) -> tuple[FlowNetwork, AdamW, np.random.Generator, int, TrainConfig]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        params = {k[len("param/"):]: data[k] for k in data.files
                  if k.startswith("param/")}
        net = FlowNetwork(NetworkConfig(**meta["net_config"]), params)
        opt = AdamW(params, beta1=meta["adam_beta1"], beta2=meta["adam_beta2"],
                    eps=meta["adam_eps"])
        opt.step_count = meta["adam_step"]
        opt.m = {k[len("adam_m/"):]: data[k] for k in data.files
                 if k.startswith("adam_m/")}
        opt.v = {k[len("adam_v/"):]: data[k] for k in data.files
                 if k.startswith("adam_v/")}
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    return net, opt, rng, meta["step"], TrainConfig(**meta["train_config"])


def train(config: TrainConfig, net_config: NetworkConfig,
          tasks: list, sched: Scheduler | None = None,
          resume_from=None, checkpoint_path=None,
          checkpoint_every: int = 0,
          on_step=None) -> TrainResult:
    """Run flow-matching training over a task list.

    Batches are drawn with replacement from tasks grouped by size.  Training
    is deterministic given config.seed; resume_from continues a checkpoint
    with identical results to an uninterrupted run.
    """
    sched = sched or Scheduler()
    if not tasks:
        raise ContractError("training needs at least one task")

    groups: dict[tuple, list[int]] = {}
    for i, t in enumerate(tasks):
        groups.setdefault((t.n_context + t.n_target, t.x_dim), []).append(i)
    group_keys = sorted(groups)
    group_weights = np.array([len(groups[k]) for k in group_keys], dtype=float)
    group_weights /= group_weights.sum()

    if resume_from is not None:
        net, opt, rng, start_step, _ = load_checkpoint(resume_from)
        if vars(net.config) != vars(net_config):
            raise ContractError("checkpoint network config does not match")
    else:
        net = FlowNetwork.init(net_config, config.seed)
        opt = AdamW(net.params)
        rng = np.random.default_rng(config.seed)
        start_step = 0

    history: list[tuple[int, float, float]] = []
    for step in range(start_step, config.total_steps):
        key = group_keys[rng.choice(len(group_keys), p=group_weights)]
        idx = rng.choice(groups[key], size=config.batch_tasks, replace=True)
        X, Y1 = stack_tasks([tasks[i] for i in idx])
        t = sample_times(rng, len(idx), config.time_loc, config.time_scale)
        Y0 = rng.standard_normal(Y1.shape)
        loss, grads = cfm_loss(net, X, Y1, sched, t, Y0)
        if not np.isfinite(loss):
            raise TrainingError("non-finite loss", step=step)
        lr = cosine_lr(step, config.total_steps, config.learning_rate,
                       config.lr_floor)
        opt.step(net.params, grads, lr, config.weight_decay)
        if step % config.log_every == 0 or step == config.total_steps - 1:
            history.append((step, loss, lr))
        if on_step is not None:
            on_step(step, loss, lr)
        if (checkpoint_path is not None and checkpoint_every > 0
                and (step + 1) % checkpoint_every == 0):
            save_checkpoint(checkpoint_path, net, opt, rng, step + 1, config)

    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, net, opt, rng, config.total_steps, config)
    hist = np.array(history, dtype=float).reshape(-1, 3)
    return TrainResult(net=net, history=hist, steps_run=config.total_steps - start_step)
