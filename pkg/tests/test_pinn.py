import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.base import clone

from adepinn import autodiff as ad
from adepinn.analytic import LossWeights, mean_field_2d, mean_field_2d_derivs
from adepinn.exceptions import InvalidPlanError
from adepinn.fields import ProblemSpec
from adepinn.pinn import (FieldRegressor, MeasurementSet, TransportPINN, TransportProblem,
                          UniformFlowCoeffs,
                          loss_backward, loss_forward, neumann_operator, residual_normalized,
                          residual_raw)
from adepinn.pinn.coefficients import CoeffValues
from adepinn.pinn.losses import data_terms
from adepinn.pinn.operators import residual_normalized_jets, residual_raw_jets
from adepinn.sampling import SampleCounts, build_sample_plan, from_dimless

SPEC = ProblemSpec()
COEFFS = UniformFlowCoeffs.mean_field(SPEC)
SMALL = SampleCounts(n_res=40, n_ic=30, n_bcd_x=3, n_bcn_x=3, n_t=2)


def net(seed, sizes=(3, 6, 6, 1)):
    return ad.xavier_init(sizes, seed)


def plan(anchor=-0.5, seed=0):
    p = SPEC.mean_field()
    return build_sample_plan(SPEC, SMALL, "adaptive_time", seed,
                             ic_fn=lambda a, b: mean_field_2d(a, b, 0.0, p), anchor_time=anchor)


def jets_of(u, d1, d2, dt, h11, h22):
    var = ad.Var
    return ad.Jets(var(u), var(np.stack([d1, d2, dt])), var(np.stack([h11, h22])),
                   ((0, 0), (1, 1)))


def value(r):
    return ad.value_of(r)


def rand_points(seed, n=20):
    return np.random.default_rng(seed).uniform(-0.45, 0.45, size=(n, 3))


def test_constant_field_residual_is_source_term():
    # a network with zero weights and bias c outputs c everywhere
    p = net(0)
    flat = np.zeros_like(p.flat)
    flat[-1] = 0.7
    X = rand_points(1)
    r = residual_normalized(p.with_flat(flat), X, COEFFS)
    assert np.allclose(r, -0.7 * COEFFS.source(X[:, 2]), rtol=1e-12)


def test_analytic_plume_has_zero_normalized_residual():
    X = rand_points(2, 50)
    x1, x2, t = from_dimless(X[:, 0], X[:, 1], X[:, 2], SPEC)
    mp = COEFFS.normalizer
    d = mean_field_2d_derivs(x1, x2, t, mp)
    g = COEFFS.g(X[:, 2])
    s = COEFFS.source(X[:, 2])
    L1, L2, T = SPEC.L1, SPEC.L2, SPEC.T
    j = jets_of(d["u"] / g, L1 * d["u1"] / g, L2 * d["u2"] / g,
                T * d["ut"] / g + s * d["u"] / g, L1 ** 2 * d["u11"] / g, L2 ** 2 * d["u22"] / g)
    r = value(residual_normalized_jets(j, COEFFS.at(X), s))
    assert np.max(np.abs(r)) < 1e-6 * np.max(np.abs(s * d["u"] / g))


@given(st.integers(0, 1000))
def test_residual_matches_finite_differences(seed):
    p = net(seed)
    X = rand_points(seed, 5)
    h = 1e-4
    u = lambda Y: ad.evaluate_batch(p, Y)
    e = np.eye(3) * h
    d = [(u(X + e[k]) - u(X - e[k])) / (2 * h) for k in range(3)]
    dd = [(u(X + e[k]) - 2 * u(X) + u(X - e[k])) / h ** 2 for k in range(2)]
    cv = COEFFS.values
    fd = d[2] + cv.v1 * d[0] - cv.D11 * dd[0] - cv.D22 * dd[1] - COEFFS.source(X[:, 2]) * u(X)
    assert np.allclose(residual_normalized(p, X, COEFFS), fd, atol=1e-5)


@given(st.integers(0, 1000))
def test_raw_residual_of_scaled_field_equals_scaled_normalized_residual(seed):
    X = rand_points(seed, 10)
    val, grad, hess = ad.evaluate_batch(net(seed), X, order=2, pairs=((0, 0), (1, 1)))
    g = COEFFS.g(X[:, 2])
    s = COEFFS.source(X[:, 2])
    norm = jets_of(val, grad[0], grad[1], grad[2], hess[0], hess[1])
    # u = g u~ with dg/dt~ = -s g
    raw = jets_of(g * val, g * grad[0], g * grad[1], g * grad[2] - s * g * val,
                  g * hess[0], g * hess[1])
    cv = COEFFS.values
    lhs = value(residual_raw_jets(raw, cv, COEFFS.T)) * COEFFS.T
    rhs = g * value(residual_normalized_jets(norm, cv, s))
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


def test_raw_residual_matches_operator():
    p = net(3)
    X = rand_points(3)
    val, grad, hess = ad.evaluate_batch(p, X, order=2, pairs=((0, 0), (1, 1)))
    cv = COEFFS.values
    expected = (grad[2] + cv.v1 * grad[0] - cv.D11 * hess[0] - cv.D22 * hess[1]) / SPEC.T
    assert np.allclose(residual_raw(p, X, COEFFS), expected)


def test_cross_dispersion_enters_operator():
    cv = CoeffValues(0.0, 0.0, 0.0, 0.0, 1.0, 1.0, varying=False)
    var = ad.Var
    j = ad.Jets(var(np.zeros(1)), var(np.zeros((3, 1))), var(np.array([[0.0], [2.0], [0.0]])),
                ((0, 0), (0, 1), (1, 1)))
    assert np.allclose(value(residual_normalized_jets(j, cv, 0.0)), -4.0)


def test_neumann_operator():
    p = net(4)
    X = rand_points(4, 6)
    h = 1e-6
    d1 = (ad.evaluate_batch(p, X + [h, 0, 0]) - ad.evaluate_batch(p, X - [h, 0, 0])) / (2 * h)
    assert np.allclose(neumann_operator(p, X, (1.0, 0.0)), d1, atol=1e-8)
    assert np.allclose(neumann_operator(p, X, (-1.0, 0.0), target=0.5), -d1 - 0.5, atol=1e-8)


@given(st.floats(0.1, 10.0))
def test_loss_is_linear_in_weights(c):
    p, pl = net(5), plan()
    w = LossWeights(2.0, 3.0, 0.5, 1.0)
    l1, g1, terms = loss_forward(p, pl, w, COEFFS)
    l2, g2, _ = loss_forward(p, pl, w.scaled(**{k: c for k in (
        "lambda_ic_or_tc", "lambda_bcd", "lambda_bcn", "lambda_res")}), COEFFS)
    assert np.isclose(l2, c * l1) and np.allclose(g2, c * g1)
    assert np.isclose(l1, 2 * terms["ic"] + 3 * terms["bcd"] + 0.5 * terms["bcn"] + terms["res"])


def test_empty_weighted_set_raises():
    pl = plan()
    empty = pl.with_targets()
    empty.ic, empty.ic_values = np.zeros((0, 2)), np.zeros(0)
    with pytest.raises(InvalidPlanError):
        loss_forward(net(0), empty, LossWeights(), COEFFS)
    # no error once the weight is zero
    loss_forward(net(0), empty, LossWeights(lambda_ic_or_tc=0.0), COEFFS)


def test_backward_plan_and_term_name():
    w = LossWeights()
    _, _, terms = loss_backward(net(0), plan(anchor=0.5), w, COEFFS)
    assert "tc" in terms and "ic" not in terms
    with pytest.raises(InvalidPlanError):
        loss_backward(net(0), plan(), w, COEFFS)
    with pytest.raises(InvalidPlanError):
        loss_forward(net(0), plan(anchor=0.5), w, COEFFS)


def test_duplicated_measurements_leave_data_loss_unchanged():
    rng = np.random.default_rng(0)
    u_obs = np.column_stack([rng.uniform(-0.5, 0.5, (7, 3)), rng.random(7)])
    k_obs = np.column_stack([rng.uniform(-0.5, 0.5, (4, 2)), rng.random(4)])
    nets = [net(1).network(), net(2, (2, 5, 1)).network(), net(3, (2, 5, 1)).network()]
    a = data_terms(*nets, MeasurementSet(u_obs, k_obs))
    b = data_terms(*nets, MeasurementSet(np.vstack([u_obs, u_obs]), np.vstack([k_obs, k_obs])))
    for k in a:
        assert np.isclose(value(a[k]), value(b[k]))


@pytest.mark.parametrize("mode", ["normalized", "raw"])
def test_loss_gradient_matches_finite_differences(mode):
    p, pl, w = net(6), plan(), LossWeights(2.0, 1.0, 1.0, 1.0)
    _, grad, _ = loss_forward(p, pl, w, COEFFS, mode)
    idx = np.random.default_rng(0).choice(p.flat.size, 32, replace=False)
    h = 1e-6
    for i in idx:
        e = np.zeros_like(p.flat)
        e[i] = h
        fp = loss_forward(p.with_flat(p.flat + e), pl, w, COEFFS, mode)[0]
        fm = loss_forward(p.with_flat(p.flat - e), pl, w, COEFFS, mode)[0]
        assert abs((fp - fm) / (2 * h) - grad[i]) <= 1e-4 * max(1.0, abs(grad[i]))


def test_minibatch_residual_uses_subset():
    p, pl, w = net(7), plan(), LossWeights()
    _, _, full = loss_forward(p, pl, w, COEFFS)
    _, _, sub = loss_forward(p, pl, w, COEFFS, res_idx=np.arange(len(pl.residual)))
    assert np.isclose(full["res"], sub["res"])


def test_field_regressor_fits_linear_head():
    rng = np.random.default_rng(0)
    X = rng.uniform(-0.5, 0.5, (200, 2))
    y = 0.5 - X[:, 0]
    est = FieldRegressor(hidden_layers=(10,), adam_epochs=500, adam_lr=1e-2,
                         lbfgs_max_iters=500).fit(X, y)
    assert np.max(np.abs(est.predict(X) - y)) < 1e-3


def test_estimators_follow_sklearn_conventions():
    est = TransportPINN(adam_epochs=5, hidden_layers=(8, 8))
    params = est.get_params()
    assert params["adam_epochs"] == 5
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    assert clone(FieldRegressor(batch_size=7)).batch_size == 7


def test_tiny_forward_fit_reduces_loss():
    p = SPEC.mean_field()
    est = TransportPINN(hidden_layers=(8,), n_res=60, n_ic=40, n_bcd_x=3, n_bcn_x=3, n_t=3,
                        adam_epochs=30, batch_size=30, lbfgs_max_iters=20, adam_lr=1e-2)
    est.fit(TransportProblem(SPEC, COEFFS, condition=lambda a, b: mean_field_2d(a, b, 0.0, p)))
    totals = [r["total"] for r in est.history_]
    assert est.loss_ < totals[0]
    assert est.predict(np.array([[0.15, 0.25, 0.0]])).shape == (1,)
