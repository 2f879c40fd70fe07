"""Minimal reverse-mode automatic differentiation over numpy arrays.

The network in this package uses a small, fixed operator set, so the engine
is a flat tape: every operation appends one backward closure, and backward()
replays the closures in reverse.  Because the tape is built by the forward
pass, append order is already a topological order; no graph search is needed.

Supported operators: matmul (with leading-axis broadcasting), add, sub, mul
(elementwise with broadcasting), negation, reshape, swapaxes, concatenation
on the last axis, softmax, affine-free layer norm, exact (erf) GeLU, sum and
mean reductions.  Gradients flow to every Var on the tape; plain ndarrays and
scalars are treated as constants.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .errors import ContractError

__all__ = ["Tape", "Var", "concat", "backward"]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to shape, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tape:
    """Records backward closures in forward order.

    Closures hold the Vars they touch and every Var holds its tape, a cycle
    the reference counter cannot break.  Callers that are done with a graph
    must close() the tape (or use it as a context manager) so intermediate
    arrays are freed immediately instead of lingering until a full garbage
    collection; at sampling batch sizes those graphs run to gigabytes.
    """

    def __init__(self):
        self._ops: list = []

    def var(self, value, requires_grad: bool = True) -> "Var":
        return Var(np.asarray(value), self, requires_grad)

    def _push(self, fn) -> None:
        self._ops.append(fn)

    def close(self) -> None:
        """Drop the recorded graph; backward() is impossible afterwards."""
        self._ops.clear()

    def __enter__(self) -> "Tape":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class Var:
    """A tape-tracked array value."""

    __slots__ = ("value", "grad", "tape", "requires_grad")

    def __init__(self, value: np.ndarray, tape: Tape, requires_grad: bool = True):
        self.value = value
        self.grad = None
        self.tape = tape
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        self.grad = g if self.grad is None else self.grad + g

    def _lift(self, other) -> "Var":
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise ContractError("operands live on different tapes")
            return other
        return Var(np.asarray(other, dtype=self.value.dtype), self.tape,
                   requires_grad=False)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other) -> "Var":
        other = self._lift(other)
        out = Var(self.value + other.value, self.tape)
        a, b = self, other

        def bwd():
            if out.grad is None:
                return
            a._accum(_unbroadcast(out.grad, a.value.shape))
            b._accum(_unbroadcast(out.grad, b.value.shape))

        self.tape._push(bwd)
        return out

    __radd__ = __add__

    def __neg__(self) -> "Var":
        out = Var(-self.value, self.tape)
        a = self

        def bwd():
            if out.grad is not None:
                a._accum(-out.grad)

        self.tape._push(bwd)
        return out

    def __sub__(self, other) -> "Var":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "Var":
        return self._lift(other) + (-self)

    def __mul__(self, other) -> "Var":
        other = self._lift(other)
        out = Var(self.value * other.value, self.tape)
        a, b = self, other

        def bwd():
            if out.grad is None:
                return
            a._accum(_unbroadcast(out.grad * b.value, a.value.shape))
            b._accum(_unbroadcast(out.grad * a.value, b.value.shape))

        self.tape._push(bwd)
        return out

    __rmul__ = __mul__

    def __matmul__(self, other) -> "Var":
        other = self._lift(other)
        out = Var(self.value @ other.value, self.tape)
        a, b = self, other

        def bwd():
            if out.grad is None:
                return
            g = out.grad
            a._accum(_unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.value.shape))
            b._accum(_unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.value.shape))

        self.tape._push(bwd)
        return out

    # -- shape --------------------------------------------------------------

    def reshape(self, *shape) -> "Var":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        out = Var(self.value.reshape(shape), self.tape)
        a = self

        def bwd():
            if out.grad is not None:
                a._accum(out.grad.reshape(a.value.shape))

        self.tape._push(bwd)
        return out

    def swapaxes(self, ax1: int, ax2: int) -> "Var":
        out = Var(np.swapaxes(self.value, ax1, ax2), self.tape)
        a = self

        def bwd():
            if out.grad is not None:
                a._accum(np.swapaxes(out.grad, ax1, ax2))

        self.tape._push(bwd)
        return out

    # -- nonlinearities -----------------------------------------------------

    def gelu(self) -> "Var":
        x = self.value
        cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        out = Var(x * cdf, self.tape)
        a = self

        def bwd():
            if out.grad is None:
                return
            pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
            a._accum(out.grad * (cdf + x * pdf))

        self.tape._push(bwd)
        return out

    def softmax(self) -> "Var":
        """Softmax along the last axis."""
        z = self.value - self.value.max(axis=-1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=-1, keepdims=True)
        out = Var(s, self.tape)
        a = self

        def bwd():
            if out.grad is None:
                return
            g = out.grad
            a._accum(s * (g - (g * s).sum(axis=-1, keepdims=True)))

        self.tape._push(bwd)
        return out

    def layer_norm(self, eps: float = 1e-6) -> "Var":
        """Standardize along the last axis; no learned affine."""
        x = self.value
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        y = (x - mu) * inv
        out = Var(y, self.tape)
        a = self

        def bwd():
            if out.grad is None:
                return
            g = out.grad
            gm = g.mean(axis=-1, keepdims=True)
            gym = (g * y).mean(axis=-1, keepdims=True)
            a._accum(inv * (g - gm - y * gym))

        self.tape._push(bwd)
        return out

    # -- reductions ---------------------------------------------------------

    def sum(self) -> "Var":
        out = Var(np.asarray(self.value.sum()), self.tape)
        a = self

        def bwd():
            if out.grad is not None:
                a._accum(np.broadcast_to(out.grad, a.value.shape).copy())

        self.tape._push(bwd)
        return out

    def mean(self) -> "Var":
        out = Var(np.asarray(self.value.mean()), self.tape)
        a = self
        size = self.value.size

        def bwd():
            if out.grad is not None:
                a._accum(np.broadcast_to(out.grad / size, a.value.shape).copy())

        self.tape._push(bwd)
        return out


def concat(vars_: list, axis: int = -1) -> Var:
    """Concatenate Vars along the last axis."""
    if axis != -1:
        raise ContractError("concat supports only the last axis")
    tape = vars_[0].tape
    out = Var(np.concatenate([v.value for v in vars_], axis=-1), tape)
    widths = [v.value.shape[-1] for v in vars_]

    def bwd():
        if out.grad is None:
            return
        start = 0
        for v, w in zip(vars_, widths):
            v._accum(out.grad[..., start:start + w])
            start += w

    tape._push(bwd)
    return out


def backward(out: Var, seed=None) -> None:
    """Propagate a cotangent from out to every Var on its tape.

    seed defaults to 1 (for scalar losses); pass an array cotangent to
    compute a general vector-Jacobian product.
    """
    if seed is None:
        seed = np.ones_like(out.value)
    seed = np.asarray(seed, dtype=out.value.dtype)
    if seed.shape != out.value.shape:
        raise ContractError(
            f"seed shape {seed.shape} does not match output shape {out.value.shape}")
    out.grad = seed
    for fn in reversed(out.tape._ops):
        fn()
