"""
Tensor engine tests: primitives, backward pass, Adam and the
finite-difference oracle.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from engine import (
    Adam, Tensor, adam_step, backward, check_gradients, concat, elementwise, exp, getitem, mac_counter,
    matmul, mean, no_grad, pad, repeat, reshape, scan, sigmoid, silu,
    relative_error, softplus, tsum,
)
from utils.errors import ContractError, DimensionError


def _param(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


# ---------------------------------------------------------------------------
# forward values
# ---------------------------------------------------------------------------

def test_matmul_identity():
    out = matmul(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([[3.0], [4.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [4.0]])


def test_matmul_row_by_column():
    out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    assert out.data.tolist() == [[11.0]]


def test_matmul_matches_triple_loop(rng):
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).data, expected, rtol=0, atol=1e-12)


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError) as excinfo:
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    assert "(2, 3)" in str(excinfo.value) and "(4, 2)" in str(excinfo.value)


def test_elementwise_closed_forms():
    np.testing.assert_array_equal(elementwise("exp", Tensor([0.0, 0.0])).data, [1.0, 1.0])
    assert silu(Tensor(0.0)).item() == 0.0
    assert softplus(Tensor(0.0)).item() == pytest.approx(math.log(2.0), abs=1e-15)
    assert sigmoid(Tensor(0.0)).item() == 0.5


def test_elementwise_rejects_non_broadcastable():
    with pytest.raises(DimensionError):
        elementwise("add", Tensor(np.zeros(3)), Tensor(np.zeros(4)))


def test_elementwise_unknown_op():
    with pytest.raises(ValueError):
        elementwise("tanh", Tensor(0.0))


def test_exp_argument_is_clamped():
    out = exp(Tensor([1000.0, -1000.0]))
    assert np.all(np.isfinite(out.data))
    assert out.data[0] == pytest.approx(math.exp(30.0))


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
def test_saturating_activations_stay_finite(x):
    for fn in (exp, sigmoid, silu, softplus):
        assert np.isfinite(fn(Tensor(x)).item())


def test_scan_matches_loop(rng):
    decay = rng.uniform(0.1, 0.9, size=(5, 3))
    inputs = rng.standard_normal((5, 3))
    h0 = rng.standard_normal(3)
    expected = []
    h = h0.copy()
    for t in range(5):
        h = h * decay[t] + inputs[t]
        expected.append(h.copy())
    np.testing.assert_allclose(scan(Tensor(decay), Tensor(inputs), h0=Tensor(h0)).data, np.array(expected))


def test_scan_along_inner_axis(rng):
    decay = rng.uniform(0.1, 0.9, size=(2, 6, 3))
    inputs = rng.standard_normal((2, 6, 3))
    states = scan(Tensor(decay), Tensor(inputs), axis=1).data
    h = np.zeros((2, 3))
    for t in range(6):
        h = h * decay[:, t] + inputs[:, t]
        np.testing.assert_allclose(states[:, t], h)


def test_dtype_follows_input_arrays():
    assert Tensor([1.0, 2.0]).dtype == np.float64
    single = Tensor(np.ones(3, dtype=np.float32))
    assert single.dtype == np.float32
    assert (single * 2.0).dtype == np.float32


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def test_backward_sum_of_products():
    w = _param([2.0, 3.0])
    x = _param([1.0, 1.0])
    backward(tsum(w * x))
    np.testing.assert_array_equal(w.grad, [1.0, 1.0])
    np.testing.assert_array_equal(x.grad, [2.0, 3.0])


def test_backward_sigmoid_at_zero():
    w = _param(0.0)
    backward(sigmoid(w))
    assert w.grad == pytest.approx(0.25)


def test_backward_accumulates_until_zeroed():
    w = _param([1.0, 2.0])
    backward(tsum(w * 3.0))
    backward(tsum(w * 3.0))
    np.testing.assert_array_equal(w.grad, [6.0, 6.0])
    w.zero_grad()
    backward(tsum(w * 3.0))
    np.testing.assert_array_equal(w.grad, [3.0, 3.0])


def test_backward_requires_scalar():
    w = _param([1.0, 2.0])
    with pytest.raises(ContractError):
        backward(w * 2.0)


def test_backward_requires_connected_loss():
    with pytest.raises(ContractError):
        backward(tsum(Tensor([1.0, 2.0])))


def test_no_grad_records_nothing():
    w = _param([1.0])
    with no_grad():
        out = w * 2.0
    assert not out.requires_grad


def test_shared_subexpression_visited_once():
    w = _param(3.0)
    y = w * w
    backward(y + y)
    assert w.grad == pytest.approx(12.0)


@pytest.mark.parametrize("shape", [(3,), (2, 4), (2, 3, 2)])
def test_composite_graph_matches_finite_differences(rng, shape):
    a = _param(rng.standard_normal(shape))
    b = _param(rng.standard_normal(shape))
    decay = _param(rng.uniform(-1.0, 1.0, size=shape))

    def loss():
        gated = silu(a) * sigmoid(b) + softplus(a - b)
        states = scan(sigmoid(decay), gated, axis=0)
        widths = [(1, 0)] + [(0, 0)] * (len(shape) - 1)
        stacked = concat([pad(states, widths), repeat(getitem(states, slice(0, 1)), 2, axis=0)], axis=0)
        return mean(stacked * stacked) + tsum(exp(reshape(a, (-1,)) * 0.1))

    errors = check_gradients(loss, {"a": a, "b": b, "decay": decay})
    assert max(errors.values()) < 1e-4, errors


def test_matmul_gradients_match_finite_differences(rng):
    a = _param(rng.standard_normal((3, 4)))
    b = _param(rng.standard_normal((2, 4, 5)))
    errors = check_gradients(lambda: tsum(matmul(a, b) * matmul(a, b)), {"a": a, "b": b})
    assert max(errors.values()) < 1e-4


# ---------------------------------------------------------------------------
# MAC counter
# ---------------------------------------------------------------------------

def test_mac_counter_convention():
    with mac_counter() as counter:
        matmul(Tensor(np.ones((3, 4))), Tensor(np.ones((4, 2))))
        Tensor(np.ones(5)) * 2.0
        Tensor(np.ones(5)) + 2.0
        scan(Tensor(np.full((4, 3), 0.5)), Tensor(np.ones((4, 3))))
    assert counter.by_op == {"matmul": 24, "mul": 5, "scan": 12}
    assert counter.total == 41


def test_mac_counter_is_scoped():
    with mac_counter() as outer:
        Tensor(np.ones(2)) * 2.0
        with mac_counter() as inner:
            Tensor(np.ones(3)) * 2.0
    assert inner.total == 3
    assert outer.total == 2


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def test_adam_first_step_is_lr():
    theta = _param([0.5])
    theta.grad = np.array([1.0])
    Adam([theta], lr=1e-4).step()
    assert theta.data[0] - 0.5 == pytest.approx(-1e-4, rel=1e-6)


def test_adam_weight_decay_enters_gradient():
    theta = _param([1000.0])
    theta.grad = np.array([0.0])
    optimizer = Adam([theta], lr=1e-4, weight_decay=5e-6)
    optimizer.step()
    # m = (1 - beta1) * effective gradient
    assert optimizer.m[0][0] == pytest.approx(0.1 * 5e-3)
    assert optimizer.step_count == 1


def test_adam_missing_gradient():
    theta = _param([1.0])
    with pytest.raises(ContractError):
        Adam([theta]).step()


def test_adam_descends_quadratic():
    theta = _param([1.0])
    optimizer = Adam([theta], lr=1e-3)
    values = []
    for _ in range(100):
        optimizer.zero_grad()
        backward(tsum(theta * theta))
        optimizer.step()
        values.append(float(theta.data[0]))
    assert all(b < a for a, b in zip(values, values[1:]))
    assert abs(values[-1]) < 1.0


def test_adam_step_function_continues_its_state():
    functional, stateful = _param([0.3, -1.2]), _param([0.3, -1.2])
    optimizer = Adam([stateful], lr=1e-2, betas=(0.8, 0.99), weight_decay=1e-3)
    state = None
    for grad in ([1.0, -2.0], [0.5, 0.25], [-1.0, 3.0]):
        functional.grad = np.array(grad)
        stateful.grad = np.array(grad)
        state = adam_step([functional], lr=1e-2, betas=(0.8, 0.99), weight_decay=1e-3, state=state)
        optimizer.step()
    np.testing.assert_array_equal(functional.data, stateful.data)
    assert state.step_count == 3


def test_adam_step_rejects_foreign_state():
    theta, other = _param([1.0]), _param([1.0])
    theta.grad = other.grad = np.array([1.0])
    state = adam_step([theta], lr=1e-3)
    with pytest.raises(ContractError):
        adam_step([other], lr=1e-3, state=state)


def test_relative_error_uses_larger_norm():
    assert relative_error(np.array([1.0]), np.array([3.0])) == pytest.approx(2.0 / 3.0)
    assert relative_error(np.array([3.0, 4.0]), np.zeros(2)) == pytest.approx(1.0)
    assert relative_error(np.zeros(2), np.zeros(2)) == 0.0
