"""Forward oracles, per-op gradient checks and tape properties."""

import numpy as np
import pytest
import scipy.sparse as sp

from sessrec import autodiff as ad
from sessrec.autodiff import Tape, Tensor
from sessrec.errors import NonFiniteError, ShapeMismatchError


def leaf(rng, *shape):
    return Tensor(rng.uniform(-1.0, 1.0, size=shape), requires_grad=True)


class TestForward:
    def test_relu(self):
        out = ad.relu(Tensor([-1.0, 2.0]))
        np.testing.assert_array_equal(out.data, [0.0, 2.0])

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = Tensor(rng.normal(scale=20.0, size=(4, 7)))
            y = ad.softmax(x).data
            assert (y >= 0).all()
            np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-12)

    def test_sigmoid_extreme_inputs_stay_finite(self):
        y = ad.sigmoid(Tensor([[-1000.0, 0.0, 1000.0]])).data
        np.testing.assert_allclose(y, [[0.0, 0.5, 1.0]], atol=1e-12)

    def test_matmul_shape_error_reports_both_shapes(self):
        with pytest.raises(ShapeMismatchError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_log_of_zero_is_fatal(self):
        with pytest.raises(NonFiniteError):
            ad.log(Tensor([[0.0, 1.0]]))

    def test_row_mean(self):
        out = ad.row_mean(Tensor([[1.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_allclose(out.data, [[0.5, 0.5]])

    def test_embedding_lookup_gathers_rows(self):
        table = Tensor(np.arange(12.0).reshape(4, 3))
        out = ad.embedding_lookup(table, [2, 0, 2])
        np.testing.assert_array_equal(out.data, table.data[[2, 0, 2]])

    def test_concat_axes(self):
        a, b = Tensor(np.ones((2, 2))), Tensor(np.zeros((2, 3)))
        assert ad.concat([a, b], axis=-1).shape == (2, 5)
        c = Tensor(np.zeros((3, 2)))
        assert ad.concat([a, c], axis=0).shape == (5, 2)

    def test_clip_bounds(self):
        out = ad.clip(Tensor([[-1.0, 0.5, 2.0]]), 0.0, 1.0)
        np.testing.assert_array_equal(out.data, [[0.0, 0.5, 1.0]])


class TestBackwardAnalytic:
    def test_sigmoid_derivative_at_zero(self):
        x = Tensor([[0.0]], requires_grad=True)
        with Tape() as tape:
            out = ad.sum_all(ad.sigmoid(x))
            tape.backward(out)
        np.testing.assert_allclose(x.grad, [[0.25]], atol=1e-15)

    def test_square_at_three(self):
        x = Tensor([[3.0]], requires_grad=True)
        err = ad.grad_check(lambda: ad.sum_all(ad.mul(x, x)), [x])
        with Tape() as tape:
            out = ad.sum_all(ad.mul(x, x))
            tape.backward(out)
        np.testing.assert_allclose(x.grad, [[6.0]], atol=1e-12)
        assert err < 1e-8

    def test_constant_function_has_zero_gradient(self):
        x = Tensor([[1.0, 2.0]], requires_grad=True)
        c = Tensor([[5.0]])
        err = ad.grad_check(lambda: ad.sum_all(c), [x])
        assert err == 0.0


def _op_cases(rng):
    """One scalar-valued closure per registered op, over random operands."""
    a = leaf(rng, 3, 4)
    b = leaf(rng, 4, 5)
    c = leaf(rng, 3, 4)
    row = leaf(rng, 1, 4)
    vec = leaf(rng, 4)
    gate = leaf(rng, 1, 1)
    table = leaf(rng, 6, 4)
    idx = rng.integers(0, 6, size=5)
    # keep relu/clip inputs away from their kinks
    kinky = Tensor(
        rng.uniform(0.1, 0.9, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4)),
        requires_grad=True,
    )
    pos = Tensor(rng.uniform(0.1, 2.0, size=(3, 4)), requires_grad=True)
    smat = sp.random(5, 3, density=0.5, random_state=42, format="csr")
    return {
        "matmul": (lambda: ad.sum_all(ad.matmul(a, b)), [a, b]),
        "transpose": (lambda: ad.sum_all(ad.matmul(ad.transpose(b), ad.transpose(a))), [a, b]),
        "add": (lambda: ad.sum_all(ad.add(a, c)), [a, c]),
        "add_row_broadcast": (lambda: ad.sum_all(ad.add(a, row)), [a, row]),
        "add_vec_broadcast": (lambda: ad.sum_all(ad.add(a, vec)), [a, vec]),
        "add_scalar": (lambda: ad.sum_all(ad.add(a, 2.5)), [a]),
        "sub": (lambda: ad.sum_all(ad.sub(a, c)), [a, c]),
        "sub_from_scalar": (lambda: ad.sum_all(ad.sub(1.0, a)), [a]),
        "neg": (lambda: ad.sum_all(ad.neg(a)), [a]),
        "mul": (lambda: ad.sum_all(ad.mul(a, c)), [a, c]),
        "mul_scalar": (lambda: ad.sum_all(ad.mul(a, -1.5)), [a]),
        "mul_gate": (lambda: ad.sum_all(ad.mul(a, gate)), [a, gate]),
        "concat_cols": (lambda: ad.sum_all(ad.mul(ad.concat([a, c], -1), ad.concat([c, a], -1))), [a, c]),
        "concat_rows": (lambda: ad.sum_all(ad.mul(ad.concat([a, c], 0), ad.concat([c, a], 0))), [a, c]),
        "row_mean": (lambda: ad.sum_all(ad.mul(ad.row_mean(a), row)), [a, row]),
        "relu": (lambda: ad.sum_all(ad.mul(ad.relu(kinky), c)), [kinky, c]),
        "sigmoid": (lambda: ad.sum_all(ad.mul(ad.sigmoid(a), c)), [a, c]),
        "softmax": (lambda: ad.sum_all(ad.mul(ad.softmax(a), c)), [a, c]),
        "log": (lambda: ad.sum_all(ad.mul(ad.log(pos), c)), [pos, c]),
        "clip": (lambda: ad.sum_all(ad.mul(ad.clip(kinky, -0.95, 0.95), c)), [kinky, c]),
        "embedding_lookup": (
            lambda: ad.sum_all(ad.mul(ad.embedding_lookup(table, idx), leafless := Tensor(np.ones((5, 4))))),
            [table],
        ),
        "sum_all": (lambda: ad.sum_all(ad.mul(a, a)), [a]),
        "mean_all": (lambda: ad.mean_all(ad.mul(a, a)), [a]),
        "spmm": (lambda: ad.sum_all(ad.mul(ad.spmm(smat, a), leaf_like(a, smat))), [a]),
    }


def leaf_like(a, smat):
    return Tensor(np.ones((smat.shape[0], a.shape[1])))


class TestOpGradients:
    def test_every_op_passes_randomized_grad_check(self):
        """20 random draws per registered op, rel err < 1e-6 each."""
        for trial in range(20):
            rng = np.random.default_rng(1000 + trial)
            for name, (f, params) in _op_cases(rng).items():
                err = ad.grad_check(f, params, h=1e-5)
                assert err < 1e-6, f"{name}: rel err {err:.3e} on trial {trial}"


class TestTape:
    def test_backward_linearity(self):
        """Gradient of a sum of losses equals the sum of the gradients."""
        rng = np.random.default_rng(7)
        for _ in range(10):
            x = leaf(rng, 3, 3)
            w = leaf(rng, 3, 3)

            def loss_a():
                return ad.sum_all(ad.sigmoid(ad.matmul(x, w)))

            def loss_b():
                return ad.mean_all(ad.relu(ad.matmul(w, x)))

            x.grad = w.grad = None
            with Tape() as tape:
                total = ad.add(loss_a(), loss_b())
                tape.backward(total)
            gx, gw = x.grad.copy(), w.grad.copy()

            x.grad = w.grad = None
            with Tape() as tape:
                tape.backward(loss_a())
            with Tape() as tape:
                tape.backward(loss_b())
            np.testing.assert_allclose(x.grad, gx, rtol=1e-12, atol=1e-14)
            np.testing.assert_allclose(w.grad, gw, rtol=1e-12, atol=1e-14)

    def test_ops_do_not_mutate_inputs(self):
        rng = np.random.default_rng(11)
        a = leaf(rng, 4, 4)
        b = leaf(rng, 4, 4)
        snap_a, snap_b = a.data.copy(), b.data.copy()
        with Tape() as tape:
            out = ad.sum_all(
                ad.softmax(ad.relu(ad.add(ad.matmul(a, b), ad.mul(a, b))))
            )
            tape.backward(out)
        np.testing.assert_array_equal(a.data, snap_a)
        np.testing.assert_array_equal(b.data, snap_b)

    def test_leaf_gradients_accumulate_across_tapes(self):
        x = Tensor([[2.0]], requires_grad=True)
        for _ in range(3):
            with Tape() as tape:
                tape.backward(ad.sum_all(ad.mul(x, x)))
        np.testing.assert_allclose(x.grad, [[12.0]])

    def test_no_grad_disables_recording(self):
        x = Tensor([[2.0]], requires_grad=True)
        with Tape() as tape:
            with ad.no_grad():
                y = ad.mul(x, x)
            assert not y.requires_grad
            assert tape.nodes == []

    def test_backward_needs_scalar(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with Tape() as tape:
            y = ad.mul(x, 2.0)
            with pytest.raises(ShapeMismatchError):
                tape.backward(y)
