"""Gradient and structural checks for the autodiff substrate."""

import numpy as np
import pytest

from tslatent import autodiff as ad
from tslatent.errors import ContractError, InputError, ShapeError

from conftest import central_fd, check_grad, rel_err


def test_tensor_rejects_non_finite():
    with pytest.raises(InputError):
        ad.tensor([1.0, np.nan])
    with pytest.raises(InputError):
        ad.tensor([np.inf])


def test_parameter_is_trainable_leaf():
    p = ad.parameter(np.ones(3), name="w")
    assert p.trainable and p.vjps == () and p.name == "w"
    t = ad.tensor(np.ones(3))
    assert not t.trainable


def test_add_known_value_and_gradient():
    a = ad.tensor([1.0, 2.0])
    b = ad.tensor([3.0, 4.0])
    out = ad.ssum(a + b)
    assert out.value == 10.0
    acc = ad.gradients(out)
    np.testing.assert_array_equal(acc[id(a)], [1.0, 1.0])
    np.testing.assert_array_equal(acc[id(b)], [1.0, 1.0])


def test_mul_gradient_known():
    a = ad.tensor([2.0, 3.0])
    b = ad.tensor([5.0, 7.0])
    acc = ad.gradients(ad.ssum(a * b))
    np.testing.assert_array_equal(acc[id(a)], [5.0, 7.0])
    np.testing.assert_array_equal(acc[id(b)], [2.0, 3.0])


def test_shape_mismatch_raises():
    with pytest.raises(ShapeError):
        ad.add(ad.tensor([1.0]), ad.tensor([1.0, 2.0]))
    with pytest.raises(ShapeError):
        ad.matmul(ad.tensor(np.ones((2, 3))), ad.tensor(np.ones(2)))


def test_affine_examples(rng):
    for rows, cols in [(3, 7), (3, 4), (1, 1)]:
        W = ad.tensor(rng.standard_normal((rows, cols)))
        x = ad.tensor(rng.standard_normal(cols))
        b = ad.tensor(rng.standard_normal(rows))
        out = ad.affine(W, x, b)
        np.testing.assert_allclose(out.value, W.value @ x.value + b.value)
    with pytest.raises(ShapeError):
        ad.affine(ad.tensor(np.ones((3, 4))), ad.tensor(np.ones(5)),
                  ad.tensor(np.ones(3)))


@pytest.mark.parametrize("op", [ad.tanh, ad.sigmoid, ad.exp, ad.sqrt])
def test_elementwise_unary_gradients(op, rng):
    for _ in range(5):
        x0 = rng.uniform(0.1, 2.0, size=6)
        check_grad(lambda leaf: ad.ssum(op(leaf)), x0)


def test_log_gradient(rng):
    x0 = rng.uniform(0.5, 3.0, size=6)
    check_grad(lambda leaf: ad.ssum(ad.log(leaf)), x0)


def test_clip_gradient_zero_outside():
    x = ad.tensor([-2.0, 0.5, 2.0])
    acc = ad.gradients(ad.ssum(ad.clip(x, -1.0, 1.0)))
    np.testing.assert_array_equal(acc[id(x)], [0.0, 1.0, 0.0])


def test_matmul_gradients_all_rank_combos(rng):
    W0 = rng.standard_normal((4, 3))
    x0 = rng.standard_normal(3)
    M0 = rng.standard_normal((3, 5))
    v0 = rng.standard_normal(4)
    # matrix @ vector, wrt both operands
    check_grad(lambda leaf: ad.ssum(ad.matmul(leaf, ad.tensor(x0))), W0)
    check_grad(lambda leaf: ad.ssum(ad.matmul(ad.tensor(W0), leaf)), x0)
    # matrix @ matrix
    check_grad(lambda leaf: ad.ssum(ad.matmul(leaf, ad.tensor(M0))), W0)
    check_grad(lambda leaf: ad.ssum(ad.matmul(ad.tensor(W0), leaf)), M0)
    # vector @ matrix
    check_grad(lambda leaf: ad.ssum(ad.matmul(leaf, ad.tensor(W0))), v0)


def test_dot_concat_segment_row_stack_transpose_gradients(rng):
    a0 = rng.standard_normal(5)
    b0 = rng.standard_normal(5)
    check_grad(lambda leaf: ad.dot(leaf, ad.tensor(b0)), a0)
    check_grad(lambda leaf: ad.ssum(ad.concat([leaf, ad.tensor(b0)])), a0)
    check_grad(lambda leaf: ad.ssum(ad.segment(leaf, 1, 4)), a0)
    M0 = rng.standard_normal((3, 4))
    check_grad(lambda leaf: ad.ssum(ad.row(leaf, 1)), M0)
    check_grad(lambda leaf: ad.ssum(ad.transpose(leaf)), M0)
    check_grad(
        lambda leaf: ad.ssum(ad.stack([leaf, ad.tensor(b0)]) * ad.tensor(
            np.outer([1.0, 2.0], np.arange(1.0, 6.0)))), a0)


def test_causal_softmax_values_and_gradient(rng):
    s0 = rng.standard_normal((4, 4))
    out = ad.causal_softmax(ad.tensor(s0))
    p = out.value
    # upper triangle exactly zero, rows sum to one
    assert np.all(p[np.triu_indices(4, k=1)] == 0.0)
    np.testing.assert_allclose(p.sum(axis=1), np.ones(4), atol=1e-12)
    # first row is deterministic regardless of scores
    assert p[0, 0] == 1.0
    w = rng.standard_normal((4, 4))
    check_grad(lambda leaf: ad.ssum(ad.causal_softmax(leaf) * ad.tensor(w)), s0)


def test_two_layer_tanh_network_gradient(rng):
    """Random 2-layer tanh net: every parameter passes FD at rel err < 1e-5."""
    W1_0 = rng.standard_normal((8, 5)) / np.sqrt(5)
    W2_0 = rng.standard_normal((3, 8)) / np.sqrt(8)
    x = rng.standard_normal(5)
    w = rng.standard_normal(3)

    def net(W1v, W2v):
        h = ad.tanh(ad.matmul(ad.tensor(W1v) if not isinstance(W1v, ad.Tensor)
                              else W1v, ad.tensor(x)))
        out = ad.matmul(ad.tensor(W2v) if not isinstance(W2v, ad.Tensor)
                        else W2v, h)
        return ad.dot(out, ad.tensor(w))

    check_grad(lambda leaf: net(leaf, W2_0), W1_0)
    check_grad(lambda leaf: net(W1_0, leaf), W2_0)


def test_fanout_accumulates_gradients():
    x = ad.tensor([1.0, 2.0])
    y = ad.ssum(x * x) + ad.ssum(x)  # d/dx = 2x + 1
    acc = ad.gradients(y)
    np.testing.assert_allclose(acc[id(x)], [3.0, 5.0])


def test_backward_does_not_mutate_graph():
    x = ad.tensor([1.0, 2.0, 3.0])
    out = ad.ssum(ad.tanh(x))
    g1 = ad.gradients(out)[id(x)]
    g2 = ad.gradients(out)[id(x)]
    np.testing.assert_array_equal(g1, g2)


def test_nonscalar_output_needs_seed():
    x = ad.tensor([1.0, 2.0])
    with pytest.raises(ContractError):
        ad.gradients(ad.tanh(x))
    with pytest.raises(ShapeError):
        ad.gradients(ad.tanh(x), seed=np.ones(3))


def test_grad_wrt_params_zero_for_untouched():
    p = ad.parameter(np.ones(2), "used")
    q = ad.parameter(np.ones(2), "unused")
    loss = ad.ssum(p * p) + ad.ssum(q) * 0.0
    grads = ad.grad_wrt_params(loss)
    np.testing.assert_allclose(grads[p], [2.0, 2.0])
    np.testing.assert_array_equal(grads[q], [0.0, 0.0])


def test_jacobian_vector_products_linear_map(rng):
    W = rng.standard_normal((3, 4))
    x = ad.tensor(rng.standard_normal(4))
    out = ad.matmul(ad.constant(W), x)
    (jac,) = ad.jacobian_vector_products(out, [x])
    np.testing.assert_allclose(jac, W)


def test_jacobian_unreachable_input_raises():
    x = ad.tensor(np.ones(3))
    y = ad.tensor(np.ones(3))
    with pytest.raises(ContractError):
        ad.jacobian_vector_products(ad.tanh(x), [y])


def test_deep_graph_iterative_topo():
    """A 5000-node chain must not hit the recursion limit."""
    x = ad.tensor(np.ones(2))
    node = x
    for _ in range(5000):
        node = node * 1.0001
    acc = ad.gradients(ad.ssum(node))
    assert np.all(np.isfinite(acc[id(x)]))


def test_gradient_integrity_twenty_random_instances(rng):
    """Composite random expressions pass FD at rel err < 1e-5 (20 draws)."""
    for trial in range(20):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(2, 7))
        W = rng.standard_normal((m, n))
        b = rng.standard_normal(m)
        x0 = rng.uniform(-1.5, 1.5, size=n)

        def f(leaf):
            h = ad.tanh(ad.affine(ad.tensor(W), leaf, ad.tensor(b)))
            s = ad.sigmoid(h) * ad.exp(h * 0.1)
            return ad.ssum(s * s) + ad.dot(h, h) * 0.5

        check_grad(f, x0)
