import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsepose import autodiff as ad
from sparsepose.errors import InvalidArgumentError, ShapeError
from sparsepose.skeleton import default_skeleton

from oracles import grad_error, primitive_cases

TOL = 1e-4
PRIMITIVES = primitive_cases(default_skeleton())


@pytest.mark.parametrize("name,op,inputs", PRIMITIVES, ids=[c[0] for c in PRIMITIVES])
def test_primitive_gradients(name, op, inputs):
    assert grad_error(op, *inputs) < TOL


def check_grad(op, *arrays, seed=0):
    assert grad_error(op, *arrays, seed=seed) < TOL


@pytest.fixture
def r():
    return np.random.default_rng(7)


def test_sum_gradient_is_ones():
    x = ad.Tensor(np.arange(5.0), requires_grad=True)
    ad.backward(ad.sum(x))
    np.testing.assert_array_equal(x.grad, np.ones(5))


def test_squared_norm_gradient():
    x = ad.Tensor([3.0, 4.0], requires_grad=True)
    loss = ad.l2_loss(x, 0.0)
    assert loss.item() == 25.0
    ad.backward(loss)
    np.testing.assert_array_equal(x.grad, [6.0, 8.0])


def test_shared_node_accumulates():
    x = ad.Tensor([2.0], requires_grad=True)
    y = x * x
    ad.backward(ad.sum(y + y * x))  # d/dx (x^2 + x^3) = 2x + 3x^2
    np.testing.assert_allclose(x.grad, [16.0])


def test_backward_errors():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(InvalidArgumentError):
        ad.backward(x * 2)
    with pytest.raises(InvalidArgumentError):
        ad.backward(ad.sum(ad.Tensor(np.ones(3))))


@pytest.mark.parametrize(
    "op",
    [
        lambda: ad.add(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((4,)))),
        lambda: ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3)))),
        lambda: ad.concat([ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((3, 2)))], axis=0),
        lambda: ad.reshape(ad.Tensor(np.ones(5)), (2, 3)),
    ],
)
def test_shape_errors_name_both_shapes(op):
    with pytest.raises(ShapeError, match=r"\(2, 3\)"):
        op()


def test_no_grad_is_thread_local():
    x = ad.Tensor(np.ones(2), requires_grad=True)
    seen = {}

    def other():
        seen["other"] = (x * 2).requires_grad

    with ad.no_grad():
        assert not (x * 2).requires_grad
        t = threading.Thread(target=other)
        t.start()
        t.join()
    assert seen["other"]
    assert (x * 2).requires_grad


def test_deterministic_gradients(r):
    a = r.normal(size=(4, 8))
    w = r.normal(size=(8, 3))

    def run():
        wt = ad.Tensor(w, requires_grad=True)
        ad.backward(ad.sum(ad.gelu(ad.linear(ad.Tensor(a), wt))))
        return wt.grad

    assert np.array_equal(run(), run())


def test_adam_zero_gradient():
    p = np.array([1.0, -2.0])
    state = ad.AdamState.zeros_like([p])
    ad.adam_step([p], [np.zeros(2)], state, lr=0.1)
    np.testing.assert_array_equal(p, [1.0, -2.0])
    assert state.step == 1


def test_adam_first_step():
    g = np.array([0.5, -3.0, 1e-3])
    p = np.zeros(3)
    ad.adam_step([p], [g], ad.AdamState.zeros_like([p]), lr=0.01, eps=1e-8)
    np.testing.assert_allclose(p, -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)


def test_adam_constant_gradient_unit_step():
    p = np.zeros(2)
    state = ad.AdamState.zeros_like([p])
    g = np.array([2.0, -0.1])
    for _ in range(500):
        before = p.copy()
        ad.adam_step([p], [g], state, lr=1e-3)
    np.testing.assert_allclose(np.abs(p - before), 1e-3, rtol=1e-6)


def test_adam_class_minimizes_quadratic():
    x = ad.Tensor(np.array([2.0, -1.0]), requires_grad=True)
    opt = ad.Adam([x], lr=0.05)
    for _ in range(400):
        opt.zero_grad()
        ad.backward(ad.l2_loss(x, 0.0))
        opt.step()
    assert np.all(np.abs(x.data) < 1e-2)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(3, 5), st.integers(0, 2**31))
def test_random_composite_graphs(n, m, seed):
    rng = np.random.default_rng(seed)
    check_grad(
        lambda a, b: ad.softmax(ad.layer_norm(ad.matmul(a, b), ad.Tensor(np.ones(m)), ad.Tensor(np.zeros(m))) * 2.0),
        rng.normal(size=(n, 3)),
        rng.normal(size=(3, m)) + 0.5,
        seed=seed,
    )
