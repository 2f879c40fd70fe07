"""Reverse-mode tape: each operator's gradient against central differences."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from flowpoe.autodiff import Tape, Var, backward, concat
from flowpoe.errors import ContractError


def numeric_grad(f, x, h=1e-6):
    """Central-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f(x)
        flat[i] = orig - h
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * h)
    return g


def tape_grad(build, x):
    """Gradient of the scalar produced by build(var) w.r.t. x."""
    tape = Tape()
    v = tape.var(np.asarray(x, dtype=float))
    out = build(v)
    backward(out)
    return v.grad


def check_op(build, x, atol=1e-7):
    def f(arr):
        tape = Tape()
        return float(build(tape.var(arr)).value)

    assert_allclose(tape_grad(build, x), numeric_grad(f, np.array(x)), atol=atol)


RNG = np.random.default_rng(11)


class TestElementwise:
    def test_add(self):
        check_op(lambda v: (v + 2.0 * v + 1.0).sum(), RNG.standard_normal((3, 4)))

    def test_sub_and_neg(self):
        check_op(lambda v: (3.0 - v - (-v) * 0.5).sum(), RNG.standard_normal(5))

    def test_mul(self):
        check_op(lambda v: (v * v * 0.7).sum(), RNG.standard_normal((2, 3)))

    def test_mul_broadcast(self):
        w = RNG.standard_normal((1, 4))
        check_op(lambda v: (v * w).sum(), RNG.standard_normal((3, 4)))

    def test_add_broadcast_to_row(self):
        # Gradient must be summed back down to the broadcast shape.
        b = RNG.standard_normal(4)

        def build(v):
            tape = v.tape
            bias = tape.var(b)
            return ((v + bias) * (v + bias)).sum()

        x = RNG.standard_normal((3, 4))
        tape = Tape()
        vx = tape.var(x)
        vb = tape.var(b.copy())
        out = ((vx + vb) * (vx + vb)).sum()
        backward(out)
        assert vb.grad.shape == (4,)
        assert_allclose(vb.grad, (2 * (x + b)).sum(axis=0), atol=1e-12)


class TestMatmul:
    def test_square(self):
        w = RNG.standard_normal((4, 4))
        check_op(lambda v: (v @ w).sum(), RNG.standard_normal((3, 4)))

    def test_weight_side(self):
        x = RNG.standard_normal((3, 4))

        def build(v):
            return (Var(x, v.tape, requires_grad=False) @ v).sum()

        check_op(build, RNG.standard_normal((4, 2)))

    def test_batched(self):
        w = RNG.standard_normal((5, 2))
        check_op(lambda v: ((v @ w) * (v @ w)).sum(),
                 RNG.standard_normal((2, 3, 5)))

    def test_broadcast_weight(self):
        # (B, n, d) @ (d, k): grad wrt the shared weight sums over the batch.
        x = RNG.standard_normal((2, 3, 4))
        tape = Tape()
        vw = tape.var(RNG.standard_normal((4, 2)))
        out = (Var(x, tape, requires_grad=False) @ vw).sum()
        backward(out)
        assert vw.grad.shape == (4, 2)


class TestShape:
    def test_reshape(self):
        check_op(lambda v: (v.reshape(6) * np.arange(6.0)).sum(),
                 RNG.standard_normal((2, 3)))

    def test_swapaxes(self):
        w = RNG.standard_normal((2, 3))
        check_op(lambda v: (v.swapaxes(-1, -2) * w).sum(),
                 RNG.standard_normal((3, 2)))

    def test_concat(self):
        xa = RNG.standard_normal((2, 3))
        xb = RNG.standard_normal((2, 2))
        tape = Tape()
        va, vb = tape.var(xa), tape.var(xb)
        out = (concat([va, vb]) * RNG.standard_normal((2, 5))).sum()
        backward(out)
        assert va.grad.shape == (2, 3)
        assert vb.grad.shape == (2, 2)
        # Numeric check on the first operand.
        seed = np.concatenate([np.ones((2, 3)), np.zeros((2, 2))], axis=-1)
        tape2 = Tape()
        va2 = tape2.var(xa)
        out2 = concat([va2, tape2.var(xb, requires_grad=False)]).sum()
        backward(out2)
        assert_allclose(va2.grad, np.ones((2, 3)))

    def test_concat_first_axis_rejected(self):
        tape = Tape()
        with pytest.raises(ContractError):
            concat([tape.var(np.zeros((2, 2)))], axis=0)


class TestNonlinear:
    def test_gelu(self):
        check_op(lambda v: v.gelu().sum(), np.linspace(-3, 3, 13), atol=1e-6)

    def test_gelu_matches_erf_form(self):
        from scipy.special import erf
        x = np.linspace(-4, 4, 9)
        tape = Tape()
        out = tape.var(x).gelu()
        assert_allclose(out.value, x * 0.5 * (1 + erf(x / np.sqrt(2))), atol=1e-14)

    def test_softmax_rows_sum_to_one(self):
        x = RNG.standard_normal((3, 5))
        tape = Tape()
        s = tape.var(x).softmax()
        assert_allclose(s.value.sum(axis=-1), np.ones(3), atol=1e-14)

    def test_softmax_grad(self):
        w = RNG.standard_normal((2, 4))
        check_op(lambda v: (v.softmax() * w).sum(), RNG.standard_normal((2, 4)))

    def test_layer_norm_moments(self):
        x = RNG.standard_normal((4, 8)) * 3 + 1
        tape = Tape()
        y = tape.var(x).layer_norm().value
        assert_allclose(y.mean(axis=-1), np.zeros(4), atol=1e-12)
        assert_allclose(y.var(axis=-1), np.ones(4), atol=1e-5)

    def test_layer_norm_grad(self):
        w = RNG.standard_normal((2, 6))
        check_op(lambda v: (v.layer_norm() * w).sum(),
                 RNG.standard_normal((2, 6)) * 2, atol=1e-5)


class TestReductions:
    def test_sum_grad_is_ones(self):
        tape = Tape()
        v = tape.var(RNG.standard_normal((3, 2)))
        backward(v.sum())
        assert_allclose(v.grad, np.ones((3, 2)))

    def test_mean_grad(self):
        tape = Tape()
        v = tape.var(RNG.standard_normal(8))
        backward(v.mean())
        assert_allclose(v.grad, np.full(8, 1 / 8))


class TestTapeMechanics:
    def test_grad_accumulates_across_uses(self):
        tape = Tape()
        v = tape.var(np.array([2.0]))
        out = (v * v + v).sum()  # d/dv = 2v + 1 = 5
        backward(out)
        assert_allclose(v.grad, [5.0])

    def test_vector_seed_is_vjp(self):
        x = RNG.standard_normal((3, 2))
        cot = RNG.standard_normal((3, 2))
        tape = Tape()
        v = tape.var(x)
        out = v * 3.0
        backward(out, seed=cot)
        assert_allclose(v.grad, 3.0 * cot, atol=1e-12)

    def test_seed_shape_mismatch_rejected(self):
        tape = Tape()
        v = tape.var(np.zeros((2, 2)))
        with pytest.raises(ContractError):
            backward(v * 1.0, seed=np.zeros(3))

    def test_requires_grad_false_gets_no_grad(self):
        tape = Tape()
        v = tape.var(np.ones(3), requires_grad=False)
        w = tape.var(np.ones(3))
        backward((v * w).sum())
        assert v.grad is None
        assert w.grad is not None

    def test_cross_tape_rejected(self):
        a = Tape().var(np.ones(2))
        b = Tape().var(np.ones(2))
        with pytest.raises(ContractError):
            a + b

    def test_second_order_chain(self):
        # Composite expression mixing several ops, numeric check.
        def build(v):
            h = (v @ np.eye(4) * 2.0 + 1.0).gelu()
            return (h.layer_norm() * np.arange(4.0)).softmax().mean()

        check_op(build, RNG.standard_normal((2, 4)), atol=1e-6)

    def test_close_drops_recorded_graph(self):
        # Closures pin every intermediate until the tape is closed; sampling
        # loops rely on close() so graphs do not pile up across steps.
        tape = Tape()
        v = tape.var(np.ones(3))
        out = (v * 2.0).sum()
        tape.close()
        backward(out)
        assert v.grad is None
        assert tape._ops == []

    def test_context_manager_closes(self):
        with Tape() as tape:
            v = tape.var(np.ones(3))
            backward((v * 3.0).sum())
            assert_allclose(v.grad, np.full(3, 3.0))
            assert len(tape._ops) > 0
        assert tape._ops == []
