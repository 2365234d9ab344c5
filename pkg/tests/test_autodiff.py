import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from audiocap import autodiff as ad
from audiocap.autodiff import NumericError, Tensor


def rand(shape, seed=0):
    return np.random.default_rng(seed).normal(size=shape)


# ---------------------------------------------------------------------------
# softmax
# ---------------------------------------------------------------------------

def test_softmax_uniform_input():
    out = ad.softmax(Tensor([0.0, 0.0, 0.0]), axis=0)
    np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-15)


def test_softmax_oracle_123():
    # frozen from a high-precision exp/sum evaluation
    out = ad.softmax(Tensor([1.0, 2.0, 3.0]), axis=0)
    np.testing.assert_allclose(
        out.data, [0.09003057317, 0.24472847105, 0.66524095577], atol=1e-10)


@given(st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=8),
       st.floats(min_value=-100, max_value=100))
def test_softmax_shift_invariance(values, c):
    x = np.array(values)
    a = ad.softmax(Tensor(x), axis=0).data
    b = ad.softmax(Tensor(x + c), axis=0).data
    np.testing.assert_allclose(a, b, atol=1e-9)


@given(st.integers(min_value=1, max_value=5), st.integers(min_value=1, max_value=6),
       st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_softmax_rows_on_simplex(rows, cols, seed):
    x = np.random.default_rng(seed).normal(scale=30, size=(rows, cols))
    out = ad.softmax(Tensor(x), axis=-1).data
    assert np.all(out >= 0) and np.all(out <= 1)
    np.testing.assert_allclose(out.sum(axis=-1), np.ones(rows), atol=1e-6)


def test_softmax_axis_out_of_range():
    with pytest.raises(ValueError):
        ad.softmax(Tensor([1.0, 2.0]), axis=3)


def test_softmax_handles_large_logits():
    out = ad.softmax(Tensor([1000.0, 1000.0]), axis=0)
    np.testing.assert_allclose(out.data, [0.5, 0.5])


# ---------------------------------------------------------------------------
# layer_norm
# ---------------------------------------------------------------------------

def test_layer_norm_constant_row_is_zero():
    out = ad.layer_norm(Tensor([[5.0, 5.0, 5.0, 5.0]]),
                        Tensor(np.ones(4)), Tensor(np.zeros(4)), 1e-5)
    np.testing.assert_allclose(out.data, np.zeros((1, 4)), atol=1e-10)


def test_layer_norm_two_point_row():
    # mean 2, population std 1 -> normalized to [-1, 1]
    out = ad.layer_norm(Tensor([[1.0, 3.0]]),
                        Tensor(np.ones(2)), Tensor(np.zeros(2)), 1e-14)
    np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-6)


def test_layer_norm_gamma_zero_collapses_to_beta():
    beta = np.array([7.0, -1.0, 0.5])
    out = ad.layer_norm(Tensor(rand((4, 3))), Tensor(np.zeros(3)), Tensor(beta), 1e-5)
    np.testing.assert_allclose(out.data, np.broadcast_to(beta, (4, 3)))


def test_layer_norm_standardizes_rows():
    x = rand((6, 16), seed=3)
    out = ad.layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16)), 1e-10).data
    np.testing.assert_allclose(out.mean(axis=-1), np.zeros(6), atol=1e-9)
    np.testing.assert_allclose(out.var(axis=-1), np.ones(6), atol=1e-6)


def test_layer_norm_empty_axis_rejected():
    with pytest.raises(ValueError):
        ad.layer_norm(Tensor(np.zeros((2, 0))), Tensor(np.zeros(0)),
                      Tensor(np.zeros(0)), 1e-5)


# ---------------------------------------------------------------------------
# gelu
# ---------------------------------------------------------------------------

def test_gelu_values():
    out = ad.gelu(Tensor([0.0, 10.0, 1.0])).data
    assert out[0] == 0.0
    assert abs(out[1] - 10.0) < 1e-6
    # frozen from a high-precision erf evaluation: 1 * Phi(1)
    assert abs(out[2] - 0.8413447460685429) < 1e-12


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def test_backward_sum_gives_ones():
    x = Tensor(rand((3, 4)), requires_grad=True)
    ad.backward(ad.sum_(x))
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_backward_requires_scalar():
    x = Tensor(rand((3,)), requires_grad=True)
    with pytest.raises(ValueError):
        ad.backward(ad.mul(x, 2.0))


def test_backward_accumulates_across_calls():
    x = Tensor(rand((3,)), requires_grad=True)
    loss = ad.sum_(x)
    ad.backward(loss)
    ad.backward(loss)
    np.testing.assert_allclose(x.grad, 2 * np.ones(3))


def test_backward_unused_tensor_grad_stays_zero():
    x = Tensor(rand((3,)), requires_grad=True)
    unused = Tensor(rand((5,), seed=1), requires_grad=True)
    ad.backward(ad.sum_(x))
    np.testing.assert_array_equal(unused.grad, np.zeros(5))


def test_cross_entropy_gradient_is_softmax_minus_onehot():
    z = Tensor(rand((5,), seed=2), requires_grad=True)
    target = 3

    def ce(t):
        logp = ad.log_softmax(t, axis=0)
        return ad.neg(logp[target])

    ad.backward(ce(z))
    expected = ad.softmax(Tensor(z.data), axis=0).data.copy()
    expected[target] -= 1.0
    np.testing.assert_allclose(z.grad, expected, atol=1e-12)
    assert ad.finite_diff_check(ce, Tensor(z.data, requires_grad=True), 1e-4) < 1e-5


def test_matmul_product_gradient_matches_finite_differences():
    b = Tensor(rand((4, 2), seed=5))
    a = Tensor(rand((3, 4), seed=6), requires_grad=True)
    err = ad.finite_diff_check(lambda t: ad.sum_(ad.matmul(t, b)), a, 1e-4)
    assert err < 1e-5


def test_backward_same_tensor_used_twice():
    x = Tensor(np.array([2.0, 3.0]), requires_grad=True)
    ad.backward(ad.sum_(ad.mul(x, x)))  # d/dx sum(x^2) = 2x
    np.testing.assert_allclose(x.grad, [4.0, 6.0])


def test_repeated_forward_is_bit_identical():
    x = Tensor(rand((4, 4), seed=9))
    a = ad.softmax(ad.matmul(x, x), axis=-1).data
    b = ad.softmax(ad.matmul(x, x), axis=-1).data
    assert a.tobytes() == b.tobytes()


# ---------------------------------------------------------------------------
# finite_diff_check
# ---------------------------------------------------------------------------

def test_finite_diff_quadratic():
    x = Tensor(rand((6,), seed=7), requires_grad=True)
    err = ad.finite_diff_check(lambda t: ad.mul(ad.sum_(ad.mul(t, t)), 0.5), x, 1e-4)
    assert err < 1e-7


def test_finite_diff_zero_step_rejected():
    x = Tensor(rand((2,)), requires_grad=True)
    with pytest.raises(NumericError):
        ad.finite_diff_check(lambda t: ad.sum_(t), x, 0.0)


# ---------------------------------------------------------------------------
# every primitive passes a finite-difference check on random small shapes
# ---------------------------------------------------------------------------

FD_CASES = {
    "add": ((2, 3), lambda t: ad.sum_(ad.add(t, Tensor(rand((2, 3), 1))))),
    "add_broadcast": ((3,), lambda t: ad.sum_(ad.add(Tensor(rand((2, 3), 1)), t))),
    "sub": ((2, 3), lambda t: ad.sum_(ad.sub(t, Tensor(rand((2, 3), 1))))),
    "mul": ((2, 3), lambda t: ad.sum_(ad.mul(t, Tensor(rand((2, 3), 1))))),
    "neg": ((4,), lambda t: ad.sum_(ad.neg(t))),
    "matmul": ((3, 4), lambda t: ad.sum_(ad.matmul(t, Tensor(rand((4, 2), 1))))),
    "matmul_batched": ((2, 3, 4), lambda t: ad.sum_(
        ad.matmul(t, Tensor(rand((2, 4, 2), 1))))),
    "matmul_bcast_rhs": ((4, 2), lambda t: ad.sum_(
        ad.matmul(Tensor(rand((2, 3, 4), 1)), t))),
    "reshape": ((2, 6), lambda t: ad.sum_(ad.mul(ad.reshape(t, (3, 4)),
                                                 Tensor(rand((3, 4), 1))))),
    "transpose": ((2, 3, 4), lambda t: ad.sum_(ad.mul(
        ad.transpose(t, (2, 0, 1)), Tensor(rand((4, 2, 3), 1))))),
    "getitem": ((5, 3), lambda t: ad.sum_(t[1:4])),
    "concat": ((2, 3), lambda t: ad.sum_(ad.mul(
        ad.concat([t, t], axis=0), Tensor(rand((4, 3), 1))))),
    "sum_axis": ((3, 4), lambda t: ad.sum_(ad.mul(
        ad.sum_(t, axis=1), Tensor(rand((3,), 1))))),
    "mean_axis": ((3, 4), lambda t: ad.sum_(ad.mul(
        ad.mean(t, axis=0, keepdims=True), Tensor(rand((1, 4), 1))))),
    "exp": ((2, 3), lambda t: ad.sum_(ad.exp(t))),
    "log": ((2, 3), lambda t: ad.sum_(ad.log(ad.add(ad.mul(t, t), 1.0)))),
    "power": ((2, 3), lambda t: ad.sum_(ad.power(ad.add(ad.mul(t, t), 0.5), -0.5))),
    "sigmoid": ((2, 3), lambda t: ad.sum_(ad.sigmoid(t))),
    "logsigmoid": ((2, 3), lambda t: ad.sum_(ad.logsigmoid(t))),
    "gelu": ((2, 3), lambda t: ad.sum_(ad.gelu(t))),
    "softmax": ((2, 5), lambda t: ad.sum_(ad.mul(
        ad.softmax(t, axis=-1), Tensor(rand((2, 5), 1))))),
    "log_softmax": ((2, 5), lambda t: ad.sum_(ad.mul(
        ad.log_softmax(t, axis=-1), Tensor(rand((2, 5), 1))))),
    "layer_norm": ((3, 6), lambda t: ad.sum_(ad.mul(
        ad.layer_norm(t, Tensor(rand((6,), 1)), Tensor(rand((6,), 2)), 1e-5),
        Tensor(rand((3, 6), 3))))),
    "embedding": ((5, 3), lambda t: ad.sum_(ad.mul(
        ad.embedding(t, np.array([[0, 2], [4, 2]])), Tensor(rand((2, 2, 3), 1))))),
    "dropout": ((4, 4), lambda t: ad.sum_(
        ad.dropout(t, 0.3, np.random.default_rng(11)))),
}


@pytest.mark.parametrize("name", sorted(FD_CASES))
def test_primitive_gradients(name):
    shape, f = FD_CASES[name]
    for seed in (0, 7):
        x = Tensor(rand(shape, seed=seed), requires_grad=True)
        assert ad.finite_diff_check(f, x, 1e-4) < 1e-4, name


def test_layer_norm_gamma_beta_gradients():
    x = Tensor(rand((3, 6)))
    probe = Tensor(rand((3, 6), 3))
    gamma = Tensor(rand((6,), 1), requires_grad=True)
    beta = Tensor(rand((6,), 2), requires_grad=True)
    fg = lambda t: ad.sum_(ad.mul(ad.layer_norm(x, t, beta, 1e-5), probe))
    fb = lambda t: ad.sum_(ad.mul(ad.layer_norm(x, gamma, t, 1e-5), probe))
    assert ad.finite_diff_check(fg, gamma, 1e-4) < 1e-4
    assert ad.finite_diff_check(fb, beta, 1e-4) < 1e-4


# ---------------------------------------------------------------------------
# misc op semantics
# ---------------------------------------------------------------------------

def test_dropout_inference_rate_zero_is_identity():
    x = Tensor(rand((5, 5)))
    out = ad.dropout(x, 0.0, np.random.default_rng(0))
    np.testing.assert_array_equal(out.data, x.data)


def test_dropout_deterministic_per_seed():
    x = Tensor(np.ones((8, 8)))
    a = ad.dropout(x, 0.5, np.random.default_rng(4)).data
    b = ad.dropout(x, 0.5, np.random.default_rng(4)).data
    np.testing.assert_array_equal(a, b)
    assert (a == 0).any() and (a == 2.0).any()  # inverted scaling


def test_embedding_out_of_range_rejected():
    w = Tensor(rand((4, 2)))
    with pytest.raises(ValueError):
        ad.embedding(w, np.array([0, 4]))


def test_no_grad_blocks_recording():
    x = Tensor(rand((3,)), requires_grad=True)
    with ad.no_grad():
        y = ad.sum_(x)
    assert not y.requires_grad
