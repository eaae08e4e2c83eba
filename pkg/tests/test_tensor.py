"""Autodiff core: op-level gradients against finite differences."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teleassist.tensor import (
    NumericError, Tensor, TensorError, check_finite, concat, logsumexp,
)

FD_STEP = 1e-5


def fd_grad(f, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return g


def check_op(op, shapes, seed, scale=1.0):
    """Analytic vs numeric gradients for op applied to seeded random inputs."""
    rng = np.random.default_rng(seed)
    arrays = [scale * rng.standard_normal(s) for s in shapes]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = op(*tensors)
    assert loss.data.size == 1
    loss.backward()
    for i, (arr, t) in enumerate(zip(arrays, tensors)):
        def partial(x, i=i):
            args = [Tensor(a) for a in arrays]
            args[i] = Tensor(x)
            return op(*args).item()
        numeric = fd_grad(partial, arr.copy())
        denom = max(np.max(np.abs(numeric)), 1e-8)
        assert t.grad is not None
        np.testing.assert_allclose(t.grad, numeric, atol=1e-6 * denom,
                                   rtol=1e-6)


def test_square_gradient():
    w = Tensor(3.0, requires_grad=True)
    (w * w).backward()
    assert w.grad == pytest.approx(6.0)


def test_sigmoid_sum_matches_finite_differences():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 3))
    w = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
    loss = (Tensor(x) @ w).sigmoid().sum()
    loss.backward()

    def f(wdata):
        return (Tensor(x) @ Tensor(wdata)).sigmoid().sum().item()

    numeric = fd_grad(f, w.data.copy())
    np.testing.assert_allclose(w.grad, numeric, rtol=1e-6)


def test_unused_parameter_gets_no_gradient():
    used = Tensor(2.0, requires_grad=True)
    unused = Tensor(5.0, requires_grad=True)
    (used * used).backward()
    assert unused.grad is None


def test_backward_rejects_nonscalar():
    t = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(TensorError):
        t.backward()


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("op,shapes", [
    (lambda a, b: (a + b).sum(), [(3, 2), (3, 2)]),
    (lambda a, b: (a + b).sum(), [(3, 2), (2,)]),       # broadcast
    (lambda a, b: (a * b).mean(), [(4,), (4,)]),
    (lambda a, b: (a / (b * b + 1.0)).sum(), [(3,), (3,)]),
    (lambda a, b: (a @ b).sum(), [(2, 3), (3, 4)]),
    (lambda a: (a ** 3.0).sum(), [(5,)]),
    (lambda a: (-a).sum(), [(3,)]),
    (lambda a: (a - 1.5).sum(axis=0).sum(), [(2, 3)]),
    (lambda a: a.mean(axis=1).sum(), [(3, 4)]),
    (lambda a: a.reshape(6).sum(), [(2, 3)]),
    (lambda a: a[1:, :].sum(), [(3, 2)]),
    (lambda a: a.exp().sum(), [(4,)]),
    (lambda a: (a * a + 1.0).log().sum(), [(4,)]),
    (lambda a: (a * a + 0.5).sqrt().sum(), [(4,)]),
    (lambda a: a.tanh().sum(), [(4,)]),
    (lambda a: a.sigmoid().sum(), [(4,)]),
    (lambda a: a.leaky_relu(0.2).sum(), [(7,)]),
    (lambda a, b: concat([a, b], axis=1).sum(), [(2, 3), (2, 2)]),
    (lambda a: logsumexp(a, axis=1).sum(), [(3, 4)]),
])
def test_op_gradients_match_finite_differences(op, shapes, seed):
    check_op(op, shapes, seed)


def test_reused_node_accumulates_gradient():
    a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    b = a * a
    (b + b).sum().backward()
    np.testing.assert_allclose(a.grad, 4.0 * a.data)


def test_matmul_shape_errors():
    with pytest.raises(TensorError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 2)))
    with pytest.raises(TensorError):
        Tensor(np.ones(3)) @ Tensor(np.ones(3))


def test_logsumexp_stable_at_large_magnitudes():
    t = Tensor(np.array([[1000.0, 1000.0, 1000.0]]))
    out = logsumexp(t, axis=1)
    np.testing.assert_allclose(out.data, 1000.0 + np.log(3.0))


def test_check_finite_raises_on_nan():
    with pytest.raises(NumericError):
        check_finite(Tensor(np.array([1.0, np.nan])))


def test_item_requires_single_element():
    with pytest.raises(TensorError):
        Tensor(np.ones(2)).item()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8), st.floats(-50, 50))
def test_addition_commutes(values, c):
    a = Tensor(np.array(values))
    assert np.array_equal((a + c).data, (c + a).data)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=1, max_size=8))
def test_finite_inputs_produce_finite_outputs(values):
    t = Tensor(np.array(values))
    for out in (t.tanh(), t.sigmoid(), t.leaky_relu(), t.exp(),
                (t * t + 1.0).log(), (t * t).sqrt()):
        assert np.all(np.isfinite(out.data))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_forward_deterministic_per_seed(seed):
    rng1 = np.random.default_rng(seed)
    rng2 = np.random.default_rng(seed)
    a = Tensor(rng1.standard_normal((3, 3)))
    b = Tensor(rng2.standard_normal((3, 3)))
    assert np.array_equal((a @ a).tanh().data, (b @ b).tanh().data)
