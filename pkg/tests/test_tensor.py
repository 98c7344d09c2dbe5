import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from lookupvit import tensor as T
from lookupvit.errors import ConfigurationError, ContractError, DimensionError, NonFiniteError
from lookupvit.gradcheck import check_gradients, relative_error
from lookupvit.tensor import Tape, Tensor, backward

import oracles


def t64(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def test_matmul_small_example():
    out = T.matmul(t64([[1, 2], [3, 4]]), t64([[5, 6], [7, 8]]))
    np.testing.assert_array_equal(out.data, [[19, 22], [43, 50]])


def test_matmul_matches_loop_oracle():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 4))
    np.testing.assert_allclose(T.matmul(t64(a), t64(b)).data, oracles.matmul(a, b), rtol=0, atol=1e-12)


def test_matmul_rejects_mismatched_inner_dims():
    with pytest.raises(DimensionError):
        T.matmul(t64(np.ones((2, 3))), t64(np.ones((4, 2))))


def test_batched_matmul_mac_count():
    a, b = t64(np.ones((3, 2, 4, 5))), t64(np.ones((5, 6)))
    with T.instrument() as c:
        with T.cost_term("x"):
            T.matmul(a, b)
    assert c.total_macs() == 3 * 2 * 4 * 5 * 6
    assert c.macs_by_term()["x"] == 720


def test_softmax_examples():
    np.testing.assert_allclose(T.softmax_rows(t64([[0.0, math.log(3.0)]])).data, [[0.25, 0.75]], atol=1e-15)
    np.testing.assert_array_equal(T.softmax_rows(t64([[1000.0, 1000.0]])).data, [[0.5, 0.5]])


def test_softmax_matches_oracle():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 9)) * 10
    want = np.array([oracles.softmax(list(r)) for r in x])
    np.testing.assert_allclose(T.softmax_rows(t64(x)).data, want, atol=1e-14)


def test_layer_norm_two_tokens():
    out = T.layer_norm(t64([[0.0, 2.0]]), t64([1.0, 1.0]), t64([0.0, 0.0]), eps=0.0)
    np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-15)


def test_layer_norm_affine_matches_two_pass_oracle():
    out = T.layer_norm(t64([[1.0, 2.0, 3.0]]), t64([2.0, 2.0, 2.0]), t64([1.0, 1.0, 1.0]))
    # two-pass population-variance oracle, eps 1e-6
    np.testing.assert_allclose(out.data, [[-1.449487905667938, 1.0, 3.449487905667938]], atol=1e-12)


def test_layer_norm_needs_two_features():
    with pytest.raises(ConfigurationError):
        T.layer_norm(t64([[1.0]]), t64([1.0]), t64([0.0]))


def test_gelu_exact_value():
    assert T.gelu(t64([1.0])).data[0] == pytest.approx(0.8413447460685429, abs=1e-15)
    assert T.gelu(t64([0.0])).data[0] == 0.0


def test_resize_two_by_two_to_one():
    x = t64(np.array([[0.0, 1.0], [2.0, 3.0]])[..., None])
    assert T.bilinear_resize(x, (1, 1)).data.item() == pytest.approx(1.5)


def test_trilinear_cube_to_one():
    x = t64(np.arange(8.0).reshape(2, 2, 2, 1))
    assert T.trilinear_resize(x, (1, 1, 1)).data.item() == pytest.approx(3.5)


@pytest.mark.parametrize("src,dst", [((5, 7), (3, 2)), ((4, 4), (6, 9)), ((14, 14), (5, 5)), ((3, 8), (3, 3))])
def test_bilinear_matches_per_pixel_oracle(src, dst):
    rng = np.random.default_rng(1)
    img = rng.normal(size=(*src, 3))
    np.testing.assert_allclose(T.bilinear_resize(t64(img), dst).data, oracles.bilinear(img, *dst), atol=1e-12)


def test_trilinear_matches_per_voxel_oracle():
    rng = np.random.default_rng(2)
    vol = rng.normal(size=(4, 5, 6, 2))
    np.testing.assert_allclose(
        T.trilinear_resize(t64(vol), (2, 3, 3)).data, oracles.trilinear(vol, 2, 3, 3), atol=1e-12
    )


def test_resize_same_shape_is_identity():
    x = t64(np.random.default_rng(0).normal(size=(3, 4, 2)))
    assert T.resize(x, (3, 4)) is x


def test_backward_of_sum_is_ones():
    x = t64(np.arange(6.0).reshape(2, 3), grad=True)
    with Tape() as tape:
        loss = T.reduce_sum(x)
    backward(tape, loss)
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_of_half_squared_norm_is_identity():
    x = t64([1.5, -2.0, 0.25], grad=True)
    with Tape() as tape:
        loss = 0.5 * T.reduce_sum(x * x)
    backward(tape, loss)
    np.testing.assert_allclose(x.grad, x.data)


def test_backward_rejects_non_scalar():
    x = t64([1.0, 2.0], grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(ContractError):
        backward(tape, y)


def test_backward_rejects_loss_from_another_tape():
    x = t64([1.0, 2.0], grad=True)
    with Tape():
        loss = T.reduce_sum(x)
    with Tape() as other:
        pass
    with pytest.raises(ContractError):
        backward(other, loss)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_output_raises():
    with pytest.raises(NonFiniteError):
        T.mul(t64([1e300]), t64([1e300]))


def test_dtypes():
    assert Tensor(np.ones(2, dtype=np.float16)).dtype == np.float32
    assert Tensor([1, 2]).dtype == np.float32
    with pytest.raises(TypeError):
        Tensor([1.0], dtype=np.float16)
    with pytest.raises(DimensionError):
        Tensor(np.ones((0, 2)))


def test_relative_error_floor():
    assert relative_error(np.array([0.0]), np.array([0.0]))[0] == 0.0
    assert relative_error(np.array([1.0]), np.array([1.1]))[0] == pytest.approx(0.1 / 1.1)


# per-kernel finite-difference checks

def _gc(fn, *tensors):
    res = check_gradients(fn, tensors)
    worst = max(r.max_rel_error for r in res)
    assert worst < 1e-4, res
    return worst


RNG = np.random.default_rng(42)


def test_grad_matmul():
    a, b = t64(RNG.normal(size=(2, 3, 4))), t64(RNG.normal(size=(4, 5)))
    w = RNG.normal(size=(2, 3, 5))
    _gc(lambda: T.reduce_sum(T.matmul(a, b) * Tensor(w)), a, b)


def test_grad_softmax():
    x = t64(RNG.normal(size=(3, 6)))
    w = RNG.normal(size=(3, 6))
    _gc(lambda: T.reduce_sum(T.softmax_rows(x) * Tensor(w)), x)


def test_grad_layer_norm():
    x, g, b = t64(RNG.normal(size=(4, 5))), t64(RNG.normal(size=5)), t64(RNG.normal(size=5))
    w = RNG.normal(size=(4, 5))
    _gc(lambda: T.reduce_sum(T.layer_norm(x, g, b) * Tensor(w)), x, g, b)


def test_grad_gelu():
    x = t64(RNG.normal(size=(7,)) * 2)
    _gc(lambda: T.reduce_sum(T.gelu(x) * T.gelu(x)), x)


def test_grad_cross_entropy():
    x = t64(RNG.normal(size=(4, 3)))
    _gc(lambda: T.cross_entropy(x, np.array([0, 2, 1, 2])), x)


def test_grad_resize():
    x = t64(RNG.normal(size=(5, 6, 2)))
    w = RNG.normal(size=(3, 2, 2))
    _gc(lambda: T.reduce_sum(T.resize(x, (3, 2)) * Tensor(w)), x)


def test_grad_broadcast_add_mean_reshape_swap_concat():
    a, b = t64(RNG.normal(size=(2, 3))), t64(RNG.normal(size=(3,)))
    w = RNG.normal(size=(6, 4))

    def f():
        y = T.swapaxes(T.reshape(a + b, (3, 2)), 0, 1)
        z = T.concat([y, y * 2.0], axis=-1)
        return T.mean(T.matmul(z, Tensor(w))) - T.reduce_sum(a / 3.0)

    _gc(f, a, b)


def test_cross_entropy_uniform_logits():
    assert T.cross_entropy(t64(np.zeros((2, 3))), [0, 1]).item() == pytest.approx(math.log(3), abs=1e-15)


# properties

rows = hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=8),
                  elements=st.floats(-50, 50))


@given(rows)
@settings(max_examples=60, deadline=None)
def test_softmax_rows_sum_to_one(x):
    s = T.softmax_rows(t64(x)).data
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(s >= 0)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 3))
@settings(max_examples=40, deadline=None)
def test_mac_count_is_exact(r, k, c, b):
    with T.instrument() as counters:
        T.matmul(t64(np.ones((b, r, k))), t64(np.ones((k, c))))
    assert counters.total_macs() == b * r * k * c


@given(hnp.arrays(np.float64, (3, 4, 2), elements=st.floats(-1e3, 1e3)))
@settings(max_examples=40, deadline=None)
def test_kernels_stay_finite_on_bounded_inputs(x):
    t = t64(x)
    g = t64(np.ones(2))
    b = t64(np.zeros(2))
    outs = [T.softmax_rows(t), T.layer_norm(t, g, b), T.gelu(t), T.resize(t, (2, 3))]
    assert all(np.all(np.isfinite(o.data)) for o in outs)


@given(st.integers(1, 9))
@settings(max_examples=20, deadline=None)
def test_interp_matrix_rows_are_convex(n_out):
    m = T.interp_matrix(7, n_out)
    np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-15)
    assert np.all(m >= 0)
