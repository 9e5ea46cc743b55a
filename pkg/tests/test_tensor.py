import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skdistill.errors import NonFiniteError, RangeError, ShapeError
from skdistill import tensor as T
from skdistill.tensor import Tensor


def rng(seed=0):
    return np.random.default_rng(seed)


class TestMatmul:
    def test_hand_case(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[5.0, 6.0], [7.0, 8.0]])
        assert np.array_equal(T.matmul(a, b).data, [[19.0, 22.0], [43.0, 50.0]])

    def test_identity(self):
        a = Tensor(rng(1).normal(size=(3, 3)))
        out = T.matmul(a, Tensor(np.eye(3)))
        assert np.array_equal(out.data, a.data)

    def test_zero_annihilates(self):
        a = Tensor(rng(2).normal(size=(2, 4)))
        out = T.matmul(a, Tensor(np.zeros((4, 3))))
        assert np.array_equal(out.data, np.zeros((2, 3)))

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))

    def test_backward(self):
        a = Tensor(rng(3).normal(size=(2, 3)), requires_grad=True)
        b = Tensor(rng(4).normal(size=(3, 2)), requires_grad=True)
        out = T.sum_(T.matmul(a, b))
        out.backward()
        g = np.ones((2, 2))
        assert np.allclose(a.grad, g @ b.data.T)
        assert np.allclose(b.grad, a.data.T @ g)


class TestSoftmaxRows:
    def test_uniform_input(self):
        out = T.softmax_rows(Tensor([[0.0, 0.0]]))
        assert np.allclose(out.data, [[0.5, 0.5]], atol=1e-15)

    def test_closed_form(self):
        out = T.softmax_rows(Tensor([[math.log(2.0), 0.0]]))
        assert np.allclose(out.data, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-15)

    def test_large_inputs_do_not_overflow(self):
        out = T.softmax_rows(Tensor([[1000.0, 1000.0]]))
        assert np.allclose(out.data, [[0.5, 0.5]])

    def test_empty_row_dimension(self):
        with pytest.raises(ShapeError):
            T.softmax_rows(Tensor(np.zeros((2, 0))))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(-1000.0, 1000.0))
    def test_rows_sum_to_one_and_shift_invariance(self, seed, shift):
        x = rng(seed).normal(scale=100.0, size=(3, 5))
        y = T.softmax_rows(Tensor(x)).data
        assert np.all(np.abs(y.sum(axis=1) - 1.0) < 1e-9)
        assert np.all(y >= 0.0)
        y_shifted = T.softmax_rows(Tensor(x + shift)).data
        assert np.max(np.abs(y - y_shifted)) < 1e-12


class TestConv2d:
    def test_delta_kernel_is_identity(self):
        x = Tensor(rng(5).normal(size=(2, 6, 6)))
        w = np.zeros((2, 2, 3, 3))
        w[0, 0, 1, 1] = 1.0
        w[1, 1, 1, 1] = 1.0
        out = T.conv2d(x, Tensor(w), Tensor(np.zeros(2)))
        assert np.allclose(out.data, x.data)

    def test_ones_kernel_on_constant_image(self):
        c, c_in = 0.7, 3
        x = Tensor(np.full((c_in, 5, 5), c))
        out = T.conv2d(x, Tensor(np.ones((1, c_in, 3, 3))), Tensor(np.zeros(1)))
        assert out.data[0, 2, 2] == pytest.approx(9 * c * c_in)
        assert out.data[0, 0, 0] == pytest.approx(4 * c * c_in)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            T.conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))),
                     Tensor(np.zeros(1)))

    def test_stride2_shape(self):
        out = T.conv2d(Tensor(np.zeros((1, 8, 8))), Tensor(np.zeros((4, 1, 3, 3))),
                       Tensor(np.zeros(4)), stride=2)
        assert out.shape == (4, 4, 4)


class TestGradcheck:
    def test_quadratic(self):
        x0 = Tensor([1.0, 2.0, 3.0])
        err = T.gradcheck(lambda x: T.sum_(T.mul(x, x)), x0, eps=1e-5)
        assert err < 1e-6
        x = Tensor(x0.data.copy(), requires_grad=True)
        out = T.sum_(T.mul(x, x))
        out.backward()
        assert np.allclose(x.grad, [2.0, 4.0, 6.0])

    def test_eps_domain(self):
        with pytest.raises(RangeError):
            T.gradcheck(lambda x: T.sum_(x), Tensor([1.0]), eps=1e-2)

    def test_non_finite_at_x0(self):
        with pytest.raises(NonFiniteError):
            T.gradcheck(lambda x: T.log(T.sum_(x)), Tensor([-1.0]), eps=1e-5)

    @pytest.mark.parametrize("op,make", [
        ("exp", lambda x: T.sum_(T.exp(x))),
        ("gelu", lambda x: T.sum_(T.gelu(x))),
        ("softmax", lambda x: T.sum_(T.mul(T.softmax_rows(x), T.softmax_rows(x)))),
        ("transpose", lambda x: T.sum_(T.mul(T.transpose(x), T.transpose(x)))),
        ("upsample", lambda x: T.sum_(T.mul(T.upsample2x_nearest(x.reshape((1, 2, 3))),
                                            T.upsample2x_nearest(x.reshape((1, 2, 3)))))),
    ])
    def test_op_gradients(self, op, make):
        x0 = Tensor(rng(hash(op) % 2**32).normal(size=(2, 3)))
        assert T.gradcheck(make, x0, eps=1e-5) < 1e-4


class TestGraph:
    def test_uninfluential_leaf_gets_zero_grad(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = Tensor([3.0, 4.0], requires_grad=True)
        out = T.sum_(T.add(x, T.mul(y, 0.0)))
        out.backward(leaves=[x, y])
        assert np.array_equal(y.grad, np.zeros(2))
        assert np.array_equal(x.grad, np.ones(2))

    def test_disconnected_leaf_zeroed_via_leaves(self):
        x = Tensor([1.0], requires_grad=True)
        y = Tensor([5.0], requires_grad=True)
        out = T.sum_(x)
        out.backward(leaves=[x, y])
        assert np.array_equal(y.grad, np.zeros(1))

    def test_backward_requires_scalar(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ShapeError):
            T.add(x, x).backward()

    def test_grad_accumulates_over_fanout(self):
        x = Tensor([2.0], requires_grad=True)
        out = T.sum_(T.add(T.mul(x, 3.0), T.mul(x, 4.0)))
        out.backward()
        assert np.array_equal(x.grad, [7.0])

    def test_replay_is_bitwise_identical(self):
        def run():
            g = rng(42)
            x = Tensor(g.normal(size=(3, 4)), requires_grad=True)
            w = Tensor(g.normal(size=(4, 2)), requires_grad=True)
            out = T.sum_(T.gelu(T.matmul(T.softmax_rows(x), w)))
            out.backward()
            return out.data.copy(), x.grad.copy(), w.grad.copy()

        first, second = run(), run()
        for a, b in zip(first, second):
            assert a.tobytes() == b.tobytes()


class TestNanPolicy:
    def test_overflow_raises(self):
        with pytest.raises(NonFiniteError):
            T.exp(Tensor([1000.0]))

    def test_scan_can_be_disabled(self):
        prev = T.set_nan_checks(False)
        try:
            out = T.exp(Tensor([1000.0]))
            assert np.isinf(out.data[0])
        finally:
            T.set_nan_checks(prev)


class TestMacCounting:
    def test_matmul_macs(self):
        with T.count_macs() as c:
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 5))))
        assert c.macs == 2 * 3 * 5
        assert c.flops == 2 * c.macs

    def test_conv_macs(self):
        with T.count_macs() as c:
            T.conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((3, 2, 3, 3))),
                     Tensor(np.zeros(3)))
        assert c.macs == 3 * 2 * 9 * 16

    def test_nested_counters(self):
        with T.count_macs() as outer:
            T.matmul(Tensor(np.zeros((1, 1))), Tensor(np.zeros((1, 1))))
            with T.count_macs() as inner:
                T.matmul(Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 2))))
        assert inner.macs == 8
        assert outer.macs == 9


@pytest.mark.parametrize("seed", range(6))
def test_depthwise_matches_dense_equivalent(seed):
    g = rng(seed)
    x = g.normal(size=(3, 5, 5))
    w = g.normal(size=(3, 3, 3))
    b = g.normal(size=3)
    dense = np.zeros((3, 3, 3, 3))
    for c in range(3):
        dense[c, c] = w[c]
    got = T.depthwise_conv2d(Tensor(x), Tensor(w), Tensor(b)).data
    want = T.conv2d(Tensor(x), Tensor(dense), Tensor(b)).data
    assert np.allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_gradients(stride):
    g = rng(10 + stride)
    x0 = Tensor(g.normal(size=(2, 4, 4)))
    w = Tensor(g.normal(size=(3, 2, 3, 3)))
    b = Tensor(g.normal(size=3))
    err = T.gradcheck(lambda x: T.sum_(T.mul(T.conv2d(x, w, b, stride=stride),
                                             T.conv2d(x, w, b, stride=stride))),
                      x0, eps=1e-5)
    assert err < 1e-4
