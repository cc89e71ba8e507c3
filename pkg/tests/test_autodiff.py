import numpy as np
import pytest
from hypothesis import given, strategies as st

from adepinn import autodiff as ad
from adepinn.exceptions import (InvalidArchitectureError, InvalidInputError,
                                UnsupportedExpressionError)


def _fd_grad(f, x, h=1e-4):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_xavier_bounds_and_zero_bias():
    p = ad.xavier_init([2, 1], seed=3)
    w, b = p.layers()[0]
    assert np.all(np.abs(w) <= np.sqrt(6 / 3))
    assert np.all(b == 0)


def test_xavier_seed_determinism():
    a = ad.xavier_init([3, 16, 1], 7)
    b = ad.xavier_init([3, 16, 1], 7)
    c = ad.xavier_init([3, 16, 1], 8)
    assert np.array_equal(a.flat, b.flat)
    assert not np.array_equal(a.flat, c.flat)


@pytest.mark.parametrize("sizes", [[], [3], [3, 0, 1], [2, -1]])
def test_bad_architecture(sizes):
    with pytest.raises(InvalidArchitectureError):
        ad.xavier_init(sizes, 0)


def test_affine_layer():
    p = ad.ParamSet((2, 1), np.array([2.0, 3.0, 1.0]))
    r = ad.evaluate(p, ad.EvalRequest([1.0, 1.0], {"value", "grad_input", "second_derivs"}))
    assert r.value == 6.0
    assert np.allclose(r.grad_input, [2, 3])
    assert np.all(r.second_input == 0)


def test_one_tanh_neuron():
    w, b, c = np.array([0.7, -1.2]), 0.3, 1.5
    p = ad.ParamSet((2, 1, 1), np.array([*w, b, c, 0.0]))
    x = np.array([0.2, -0.4])
    r = ad.evaluate(p, ad.EvalRequest(x, {"value", "grad_input"}))
    z = np.tanh(w @ x + b)
    assert np.isclose(r.value, c * z)
    assert np.allclose(r.grad_input, c * w * (1 - z ** 2))


def test_input_dimension_mismatch():
    p = ad.xavier_init([3, 4, 1], 0)
    with pytest.raises(InvalidInputError):
        ad.evaluate(p, ad.EvalRequest([0.1, 0.2]))


@given(st.integers(0, 10_000))
def test_input_derivatives_match_finite_differences(seed):
    p = ad.xavier_init([2, 16, 16, 1], seed)
    x = np.random.default_rng(seed).uniform(-0.5, 0.5, 2)
    r = ad.evaluate(p, ad.EvalRequest(x, {"value", "grad_input", "second_derivs"}))

    def val(z):
        return ad.evaluate(p, ad.EvalRequest(z)).value

    def grad(z):
        return ad.evaluate(p, ad.EvalRequest(z, {"grad_input"})).grad_input

    g_fd = _fd_grad(val, x)
    assert np.linalg.norm(r.grad_input - g_fd) <= 1e-5 * np.linalg.norm(g_fd) + 1e-9
    h_fd = np.column_stack([_fd_grad(lambda z: grad(z)[k], x) for k in range(2)])
    assert np.linalg.norm(r.second_input - h_fd) <= 1e-5 * np.linalg.norm(h_fd) + 1e-9
    assert np.allclose(r.second_input, r.second_input.T, atol=1e-12)


def test_param_grad_of_squared_value_affine():
    p = ad.ParamSet((2, 1), np.array([0.5, -1.0, 0.25]))
    x = np.array([[0.3, 0.6]])
    g = ad.grad_of_scalar(p, lambda net: ad.square(net(x)).sum())
    u = 0.5 * 0.3 - 0.6 + 0.25
    assert np.allclose(g, 2 * u * np.array([0.3, 0.6, 1.0]))


def test_param_grad_through_input_derivative():
    p = ad.xavier_init([1, 1, 1], 4)
    x = np.array([[0.2]])

    def loss(flat):
        return float(ad.evaluate_batch(p.with_flat(flat), x, order=1)[1][0, 0] ** 2)

    g = ad.grad_of_scalar(p, lambda net: ad.square(net.jets(x, order=1).d(0)).sum())
    g_fd = _fd_grad(loss, p.flat.copy())
    assert np.linalg.norm(g - g_fd) <= 1e-5 * np.linalg.norm(g_fd)


def test_frozen_layer_has_zero_gradient():
    p = ad.xavier_init([2, 5, 1], 1)
    x = np.random.default_rng(0).uniform(-0.5, 0.5, (4, 2))
    g = ad.grad_of_scalar(p, lambda net: ad.square(net(x)).sum(), frozen=(0,))
    assert np.all(g[:2 * 5 + 5] == 0)
    assert np.any(g[15:] != 0)


def test_non_scalar_objective_rejected():
    p = ad.xavier_init([2, 3, 1], 0)
    with pytest.raises(UnsupportedExpressionError):
        ad.value_and_grad(lambda net: net(np.zeros((3, 2))), [p])


@given(st.integers(0, 1000))
def test_output_wrappers(seed):
    x = np.random.default_rng(seed).uniform(-3, 3, (50, 3))
    flat = ad.xavier_init([3, 8, 1], seed).flat * 3
    s = ad.evaluate_batch(ad.ParamSet((3, 8, 1), flat, "sigmoid"), x)
    sp = ad.evaluate_batch(ad.ParamSet((3, 8, 1), flat, "softplus"), x)
    assert np.all((s > 0) & (s < 1))
    assert np.all(sp > 0)


def test_checkpoint_round_trip(tmp_path):
    p = ad.xavier_init([3, 7, 1], 2, "sigmoid")
    ad.save_params(tmp_path / "p.txt", p)
    q = ad.load_params(tmp_path / "p.txt")
    assert q.layer_sizes == p.layer_sizes and q.output_activation == "sigmoid"
    assert np.array_equal(q.flat, p.flat)


def test_batch_matches_pointwise():
    p = ad.xavier_init([3, 10, 10, 1], 5)
    X = np.random.default_rng(1).uniform(-0.5, 0.5, (6, 3))
    v, g, h = ad.evaluate_batch(p, X, order=2)
    for i, x in enumerate(X):
        r = ad.evaluate(p, ad.EvalRequest(x, {"value", "grad_input", "second_derivs"}))
        assert np.isclose(v[i], r.value)
        assert np.allclose(g[:, i], r.grad_input)
