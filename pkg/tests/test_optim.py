import numpy as np

from sessrec.autodiff import Tape, Tensor, mul, sum_all
from sessrec.optim import Adam


def test_zero_gradient_leaves_parameters_unchanged():
    p = Tensor([[1.0, -2.0]], requires_grad=True)
    p.grad = np.zeros_like(p.data)
    opt = Adam([p], lr=0.1)
    opt.step()
    np.testing.assert_array_equal(p.data, [[1.0, -2.0]])


def test_first_step_magnitude_is_learning_rate():
    """With g=1 the bias-corrected first update is lr/(1+eps)."""
    p = Tensor([[0.0]], requires_grad=True)
    p.grad = np.ones_like(p.data)
    opt = Adam([p], lr=0.001)
    opt.step()
    assert abs(abs(p.data[0, 0]) - 0.001) < 1e-10


def test_unset_gradient_skips_parameter():
    p = Tensor([[3.0]], requires_grad=True)
    q = Tensor([[1.0]], requires_grad=True)
    q.grad = np.ones_like(q.data)
    opt = Adam([p, q], lr=0.5)
    opt.step()
    np.testing.assert_array_equal(p.data, [[3.0]])
    assert q.data[0, 0] != 1.0


def test_same_seed_runs_are_bitwise_identical():
    def run():
        rng = np.random.default_rng(5)
        p = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
        opt = Adam([p], lr=0.01)
        for _ in range(25):
            opt.zero_grad()
            with Tape() as tape:
                tape.backward(sum_all(mul(p, p)))
            opt.step()
        return p.data

    a, b = run(), run()
    assert a.tobytes() == b.tobytes()


def test_converges_on_quadratic():
    p = Tensor([[5.0]], requires_grad=True)
    opt = Adam([p], lr=0.1)
    for _ in range(400):
        opt.zero_grad()
        with Tape() as tape:
            tape.backward(sum_all(mul(p, p)))
        opt.step()
    assert abs(p.data[0, 0]) < 1e-3
