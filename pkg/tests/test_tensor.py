"""Autodiff substrate: op arithmetic, graph backward, purity,
finiteness rejection, detach."""

import numpy as np
import pytest

from duovc.errors import ContractError, NonFiniteError, ShapeError
from duovc.gradcheck import grad_check
from duovc.rng import Rng
from duovc.tensor import (
    Tensor,
    concat,
    gather_rows,
    logsumexp_rows,
    maximum,
    no_grad,
    relu,
    rows,
    shift_rows,
    sigmoid,
    smooth_l1,
    tanh,
    tsum,
)


def test_add_mul_backward():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    y = Tensor([4.0, 5.0, 6.0], requires_grad=True)
    out = tsum(x * y + x)
    out.backward()
    np.testing.assert_allclose(x.grad, [5.0, 6.0, 7.0])
    np.testing.assert_allclose(y.grad, [1.0, 2.0, 3.0])


def test_sum_of_squares_gradient_exact():
    # quadratic: central differences are exact up to roundoff
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    tsum(x * x).backward()
    np.testing.assert_allclose(x.grad, [2.0, 4.0, 6.0])
    err = grad_check(lambda v: tsum(v * v), [Tensor([1.0, 2.0, 3.0])])
    assert err < 1e-6


def test_constant_op_gradient_zero():
    err = grad_check(lambda v: tsum(v * 0.0), [Tensor([1.0, -2.0])])
    assert err == 0.0


def test_gradcheck_rejects_nonscalar():
    with pytest.raises(ContractError):
        grad_check(lambda v: v * 2.0, [Tensor([1.0, 2.0])])


def test_backward_requires_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_matmul_shapes_checked():
    a = Tensor(Rng(0).normal((3, 4)))
    b = Tensor(Rng(1).normal((5, 2)))
    with pytest.raises(ShapeError):
        a @ b


def test_ops_do_not_mutate_inputs():
    x = Tensor(Rng(2).normal((4, 3)), requires_grad=True)
    before = x.data.copy()
    out = tsum(relu(x * 2.0 + 1.0))
    out.backward()
    assert np.array_equal(x.data, before)
    assert not x.data.flags.writeable


def test_repeated_eval_bit_identical():
    x = Tensor(Rng(3).normal((6, 5)))
    a = tanh(sigmoid(x) * 3.0).data
    b = tanh(sigmoid(x) * 3.0).data
    assert np.array_equal(a, b)


def test_nonfinite_rejected_at_construction():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, float("nan")])
    with pytest.raises(NonFiniteError):
        Tensor([float("inf")])


def test_nonfinite_rejected_at_op_boundary():
    x = Tensor([90000.0], dtype=np.float32)
    with pytest.raises(NonFiniteError) as err:
        from duovc.tensor import texp
        texp(x)  # overflows float32
    assert "exp" in str(err.value)


def test_detach_blocks_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = x * 3.0
    out = tsum(y.detach() * 5.0 + x)
    out.backward()
    np.testing.assert_allclose(x.grad, [1.0, 1.0])  # only the direct path


def test_detach_shares_values():
    x = Tensor([1.5, 2.5])
    d = x.detach()
    assert np.array_equal(d.data, x.data)
    assert not d.requires_grad


def test_no_grad_suppresses_graph():
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad
    assert y._parents == ()


def test_broadcast_add_backward():
    x = Tensor(Rng(4).normal((5, 3)), requires_grad=True)
    b = Tensor(Rng(5).normal((3,)), requires_grad=True)
    tsum(x + b).backward()
    np.testing.assert_allclose(b.grad, np.full(3, 5.0))
    np.testing.assert_allclose(x.grad, np.ones((5, 3)))


def test_rows_and_gather_backward():
    x = Tensor(Rng(6).normal((6, 2)), requires_grad=True)
    tsum(rows(x, 2, 5)).backward()
    expected = np.zeros((6, 2), dtype=np.float32)
    expected[2:5] = 1.0
    np.testing.assert_array_equal(x.grad, expected)

    x2 = Tensor(Rng(7).normal((4, 2)), requires_grad=True)
    tsum(gather_rows(x2, np.array([0, 0, 3]))).backward()
    np.testing.assert_allclose(x2.grad[:, 0], [2.0, 0.0, 0.0, 1.0])


def test_shift_rows_values_and_backward():
    x = Tensor(np.arange(8, dtype=np.float32).reshape(4, 2), requires_grad=True)
    fwd = shift_rows(x, 1)
    np.testing.assert_array_equal(fwd.data, [[0, 0], [0, 1], [2, 3], [4, 5]])
    bwd = shift_rows(x, -1)
    np.testing.assert_array_equal(bwd.data, [[2, 3], [4, 5], [6, 7], [0, 0]])
    boundary = np.array([[9.0, 9.0]], dtype=np.float32)
    with_b = shift_rows(x, 1, boundary=boundary)
    np.testing.assert_array_equal(with_b.data[0], [9, 9])
    err = grad_check(lambda v: tsum(shift_rows(v, 1) * shift_rows(v, -1)),
                     [Tensor(Rng(8).normal((5, 3)))])
    assert err < 1e-6


def test_maximum_tie_break_and_grad():
    a = Tensor([1.0, 5.0, 2.0], requires_grad=True)
    b = Tensor([1.0, 3.0, 4.0], requires_grad=True)
    out = maximum(a, b)
    np.testing.assert_array_equal(out.data, [1.0, 5.0, 4.0])
    tsum(out).backward()
    np.testing.assert_array_equal(a.grad, [1.0, 1.0, 0.0])  # tie goes to a
    np.testing.assert_array_equal(b.grad, [0.0, 0.0, 1.0])


def test_concat_backward():
    a = Tensor(Rng(9).normal((3, 2)), requires_grad=True)
    b = Tensor(Rng(10).normal((3, 4)), requires_grad=True)
    tsum(concat([a, b], axis=1) * 2.0).backward()
    np.testing.assert_allclose(a.grad, np.full((3, 2), 2.0))
    np.testing.assert_allclose(b.grad, np.full((3, 4), 2.0))


def test_logsumexp_matches_reference():
    x = Rng(11).normal((6, 5))
    got = logsumexp_rows(Tensor(x)).data
    ref = np.log(np.exp(x.astype(np.float64)).sum(axis=1))
    np.testing.assert_allclose(got, ref, rtol=1e-6)
    err = grad_check(lambda v: tsum(logsumexp_rows(v)), [Tensor(x)])
    assert err < 1e-6


def test_smooth_l1_values():
    x = Tensor([0.0, 0.5, 1.0, 2.0, -3.0])
    np.testing.assert_allclose(smooth_l1(x).data, [0.0, 0.125, 0.5, 1.5, 2.5])


def test_mean_and_axis_sum():
    x = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3), requires_grad=True)
    assert x.mean().item() == pytest.approx(2.5)
    np.testing.assert_array_equal(tsum(x, axis=1).data, [3.0, 12.0])
