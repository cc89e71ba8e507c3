import numpy as np
import pytest
from hypothesis import given, strategies as st

from adepinn.exceptions import DivergenceError
from adepinn.optim import OptimConfig, adam_minimize, lbfgs_minimize, two_loop_direction


def rosenbrock(x, _=None):
    f = (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
    g = np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])
    return f, g


def test_adam_quadratic():
    target = np.random.default_rng(0).normal(size=5)
    res = adam_minimize(lambda x, k: (np.sum((x - target) ** 2), 2 * (x - target)),
                        np.zeros(5), OptimConfig(adam_lr=0.01, adam_epochs=5000))
    assert res.loss < 1e-6


def test_adam_zero_gradient_keeps_params():
    x0 = np.array([1.0, 2.0])
    res = adam_minimize(lambda x, k: (0.0, np.zeros(2)), x0, OptimConfig(adam_epochs=10))
    assert np.array_equal(res.x, x0)


def test_adam_deterministic():
    cfg = OptimConfig(adam_lr=0.01, adam_epochs=50)
    a = adam_minimize(rosenbrock, np.array([-1.2, 1.0]), cfg)
    b = adam_minimize(rosenbrock, np.array([-1.2, 1.0]), cfg)
    assert np.array_equal(a.x, b.x) and a.history == b.history


def test_adam_divergence_reports_last_good():
    def f(x, k):
        return (np.nan, x) if k == 3 else (float(x @ x), 2 * x)

    with pytest.raises(DivergenceError) as info:
        adam_minimize(f, np.ones(2), OptimConfig(adam_epochs=10))
    assert info.value.last_good is not None


def test_lbfgs_rosenbrock():
    res = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]),
                         OptimConfig(lbfgs_tol=1e-14, lbfgs_max_iters=200))
    assert np.allclose(res.x, [1, 1], atol=1e-6)
    assert res.n_iter < 200


def test_lbfgs_optimal_start_stops():
    res = lbfgs_minimize(rosenbrock, np.array([1.0, 1.0]), OptimConfig())
    assert res.stop_reason == "tol" and res.n_iter == 0


def test_lbfgs_fast_on_ill_conditioned_quadratic():
    A = np.diag([1.0, 10.0, 100.0])
    res = lbfgs_minimize(lambda x, _: (0.5 * x @ A @ x, A @ x), np.ones(3),
                         OptimConfig(lbfgs_tol=1e-12, lbfgs_max_iters=30))
    assert res.stop_reason == "tol"


def test_lbfgs_line_search_failure_returns_best():
    # a linear function has no minimizer along any descent ray
    res = lbfgs_minimize(lambda x, _: (float(20 - x.sum()) if x.max() < 5 else np.nan, -np.ones(2)),
                         np.zeros(2), OptimConfig(lbfgs_max_iters=50))
    assert res.stop_reason == "line_search"
    assert np.isfinite(res.loss)


@given(st.integers(0, 500), st.integers(2, 5))
def test_two_loop_matches_newton_on_quadratic(seed, n):
    rng = np.random.default_rng(seed)
    Q = rng.normal(size=(n, n))
    A = Q @ Q.T + n * np.eye(n)
    x = rng.normal(size=n)
    # conjugate pairs: the eigenvectors of A
    _, V = np.linalg.eigh(A)
    s_list = [V[:, i] for i in range(n)]
    y_list = [A @ s for s in s_list]
    g = A @ x
    d = two_loop_direction(g, s_list, y_list)
    assert np.allclose(d, -np.linalg.solve(A, g), rtol=1e-6, atol=1e-8)


@given(st.integers(0, 500))
def test_best_loss_monotone(seed):
    x0 = np.random.default_rng(seed).normal(size=2)
    res = lbfgs_minimize(rosenbrock, x0, OptimConfig(lbfgs_max_iters=30))
    assert res.loss <= res.history[0]
    assert np.all(np.diff(res.history) <= 0)


def test_config_validation():
    for kw in ({"adam_lr": 0}, {"adam_epochs": -1}, {"lbfgs_tol": 0}, {"lbfgs_memory": 0}):
        with pytest.raises(ValueError):
            OptimConfig(**kw)
