"""Permutation-equivariant velocity network over (x, y) token sets.

Each data point (x_i, y_i) becomes one token; there is no positional encoding,
so the forward pass commutes exactly with token permutation.  Time enters
through a sinusoidal embedding and adaLN-zero modulation: every block's
shift/scale/gate projections and the final output projection start at zero,
which makes the freshly initialized network the identically-zero velocity
field.  Equivariance is imposed only across data points, never across output
dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Var, concat
from .errors import ConfigError, ContractError

__all__ = ["NetworkConfig", "FlowNetwork", "time_embedding", "forward_tokens"]

_MOD_NAMES = ("shift_msa", "scale_msa", "gate_msa",
              "shift_mlp", "scale_mlp", "gate_mlp")


@dataclass(frozen=True)
class NetworkConfig:
    """Transformer dimensions. input_dim counts the concatenated (x, y) width."""

    input_dim: int
    output_dim: int
    embed_dim: int = 64
    num_layers: int = 4
    num_heads: int = 4
    time_embed_dim: int = 32

    def __post_init__(self):
        for name in ("input_dim", "output_dim", "embed_dim", "num_layers",
                     "num_heads", "time_embed_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.embed_dim % self.num_heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.time_embed_dim % 2 != 0 or self.time_embed_dim < 4:
            raise ConfigError("time_embed_dim must be even and >= 4")

    @property
    def x_dim(self) -> int:
        return self.input_dim - self.output_dim


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal features of t over frequencies 1..1000, geometrically spaced.

    Returns [..., dim] = [sin(t f_0..), cos(t f_0..)]; at t=0 the sine half is
    exactly zero and the cosine half exactly one.
    """
    if dim % 2 != 0 or dim < 4:
        raise ConfigError("time embedding dim must be even and >= 4")
    t = np.asarray(t, dtype=float)
    half = dim // 2
    freqs = 1000.0 ** (np.arange(half) / (half - 1))
    ang = t[..., None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _init_params(cfg: NetworkConfig, seed) -> dict:
    rng = np.random.default_rng(seed)
    E, H = cfg.embed_dim, 4 * cfg.embed_dim
    p: dict[str, np.ndarray] = {}

    def lin(name, fan_in, fan_out, zero=False):
        p[f"{name}.w"] = (np.zeros((fan_in, fan_out)) if zero
                          else _glorot(rng, fan_in, fan_out))
        p[f"{name}.b"] = np.zeros(fan_out)

    lin("embed.0", cfg.input_dim, E)
    lin("embed.1", E, E)
    lin("time.0", cfg.time_embed_dim, E)
    lin("time.1", E, E)
    for i in range(cfg.num_layers):
        for proj in ("q", "k", "v", "o"):
            lin(f"block{i}.attn.{proj}", E, E)
        lin(f"block{i}.mlp.0", E, H)
        lin(f"block{i}.mlp.1", H, E)
        for mod in _MOD_NAMES:
            lin(f"block{i}.mod.{mod}", E, E, zero=True)
    lin("final.mod.shift", E, E, zero=True)
    lin("final.mod.scale", E, E, zero=True)
    lin("final.out", E, cfg.output_dim, zero=True)
    return p


def _linear(h: Var, P: dict, name: str) -> Var:
    return h @ P[f"{name}.w"] + P[f"{name}.b"]


def _attention(h: Var, P: dict, prefix: str, cfg: NetworkConfig,
               batch: int, n_tokens: int) -> Var:
    E = cfg.embed_dim
    hd = E // cfg.num_heads

    def heads(v: Var) -> Var:
        return v.reshape(batch, n_tokens, cfg.num_heads, hd).swapaxes(1, 2)

    q = heads(h @ P[f"{prefix}.q.w"] + P[f"{prefix}.q.b"])
    k = heads(h @ P[f"{prefix}.k.w"] + P[f"{prefix}.k.b"])
    v = heads(h @ P[f"{prefix}.v.w"] + P[f"{prefix}.v.b"])
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(hd))
    mixed = scores.softmax() @ v
    merged = mixed.swapaxes(1, 2).reshape(batch, n_tokens, E)
    return merged @ P[f"{prefix}.o.w"] + P[f"{prefix}.o.b"]


def forward_tokens(cfg: NetworkConfig, P: dict, X: np.ndarray, Y: Var,
                   t: np.ndarray) -> Var:
    """Velocity Var of shape (batch, n, output_dim).

    P maps parameter names to Vars on Y's tape; X and t are constants.
    """
    tape = Y.tape
    batch, n_tokens = Y.value.shape[0], Y.value.shape[1]
    dtype = Y.value.dtype
    x_const = tape.var(np.broadcast_to(X, (batch, n_tokens, cfg.x_dim)).astype(dtype),
                       requires_grad=False)
    h = concat([x_const, Y])
    h = _linear(h, P, "embed.0").gelu()
    h = _linear(h, P, "embed.1")

    te = time_embedding(t, cfg.time_embed_dim).astype(dtype)
    c = tape.var(np.broadcast_to(te, (batch, cfg.time_embed_dim)).copy(),
                 requires_grad=False)
    c = _linear(c, P, "time.0").gelu()
    c = _linear(c, P, "time.1")
    cm = c.gelu()

    def mod_vec(name: str) -> Var:
        return _linear(cm, P, name).reshape(batch, 1, cfg.embed_dim)

    for i in range(cfg.num_layers):
        m = {name: mod_vec(f"block{i}.mod.{name}") for name in _MOD_NAMES}
        z = h.layer_norm() * (m["scale_msa"] + 1.0) + m["shift_msa"]
        h = h + m["gate_msa"] * _attention(z, P, f"block{i}.attn", cfg,
                                           batch, n_tokens)
        z = h.layer_norm() * (m["scale_mlp"] + 1.0) + m["shift_mlp"]
        z = _linear(z, P, f"block{i}.mlp.0").gelu()
        h = h + m["gate_mlp"] * _linear(z, P, f"block{i}.mlp.1")

    shift = _linear(cm, P, "final.mod.shift").reshape(batch, 1, cfg.embed_dim)
    scale = _linear(cm, P, "final.mod.scale").reshape(batch, 1, cfg.embed_dim)
    h = h.layer_norm() * (scale + 1.0) + shift
    return _linear(h, P, "final.out")


class FlowNetwork:
    """Config plus named parameter arrays, with a plain-array forward."""

    def __init__(self, config: NetworkConfig, params: dict):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: NetworkConfig, seed, dtype=np.float32) -> "FlowNetwork":
        params = {k: v.astype(dtype) for k, v in _init_params(config, seed).items()}
        return cls(config, params)

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def astype(self, dtype) -> "FlowNetwork":
        return FlowNetwork(self.config, {k: v.astype(dtype)
                                         for k, v in self.params.items()})

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def param_vars(self, tape: Tape, requires_grad: bool = True) -> dict:
        return {k: tape.var(v, requires_grad=requires_grad)
                for k, v in self.params.items()}

    def _check_shapes(self, X: np.ndarray, Y: np.ndarray) -> None:
        if X.shape[-2] != Y.shape[-2]:
            raise ContractError(f"{X.shape[-2]} locations vs {Y.shape[-2]} outputs")
        if X.shape[-1] != self.config.x_dim or Y.shape[-1] != self.config.output_dim:
            raise ContractError(
                f"expected x_dim {self.config.x_dim} and y_dim "
                f"{self.config.output_dim}, got {X.shape[-1]} and {Y.shape[-1]}")

    def forward(self, X, Y, t) -> np.ndarray:
        """Velocity stack with the same leading shape as Y; no gradients kept."""
        X = np.asarray(X, dtype=self.dtype)
        Y = np.asarray(Y, dtype=self.dtype)
        if X.ndim == 1:
            X = X[:, None]
        batched = Y.ndim == 3
        Yb = Y if batched else Y[None]
        self._check_shapes(X, Yb)
        t_arr = np.broadcast_to(np.asarray(t, dtype=float), (Yb.shape[0],))
        with Tape() as tape:
            P = self.param_vars(tape, requires_grad=False)
            y_var = tape.var(Yb, requires_grad=False)
            out = forward_tokens(self.config, P, X, y_var, t_arr).value
        return out if batched else out[0]
