import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from adepinn.analytic import (MeanFieldParams, f_max, mean_decay_f, mean_field_2d,
                              mean_field_2d_derivs, normalizer_dg_dt, normalizer_g, solution_1d,
                              source_decay_f, weight_criteria)

P = MeanFieldParams()  # eps 0.025, Dx1 0.0929, Dx2 0.0645, T 0.5


def test_solution_1d_peak_value():
    # 1 / sqrt(2 pi 0.000625), frozen from a 30-digit evaluation
    assert np.isclose(solution_1d(0.25, 0.0, 0.025, 0.25, 0.093, 3.15), 15.9576912160573071)


def test_solution_1d_mode_moves_with_velocity():
    x = np.linspace(0, 4, 40001)
    u = solution_1d(x, 0.3, 0.025, 0.25, 0.093, 3.15)
    assert np.isclose(x[np.argmax(u)], 0.25 + 3.15 * 0.3, atol=1e-4)
    assert np.isclose(u.max(), 1 / np.sqrt(2 * np.pi * (0.025 ** 2 + 2 * 0.093 * 0.3)))


def test_solution_1d_unit_mass():
    m, _ = quad(lambda x: solution_1d(x, 0.5, 0.025, 0.25, 0.093, 3.15), -5, 10, limit=200)
    assert np.isclose(m, 1.0, rtol=1e-8)


def test_mean_field_peak_at_t0():
    assert np.isclose(mean_field_2d(0.15, 0.25, 0.0, P), 254.647908947032537)


def test_normalizer_values():
    assert np.isclose(normalizer_g(0.0, P), 254.647908947032537)
    assert np.isclose(normalizer_g(0.5, P), 2.03930603777006990, rtol=1e-12)
    q = MeanFieldParams(Dx1=0.0, Dx2=0.0)
    assert np.allclose(normalizer_g(np.linspace(0, 0.5, 5), q), normalizer_g(0.0, q))


def test_mean_field_mass_by_quadrature():
    x1 = np.linspace(-2, 3, 1001)
    x2 = np.linspace(-2, 2.5, 901)
    A, B = np.meshgrid(x1, x2, indexing="ij")
    u = mean_field_2d(A, B, 0.1, P)
    assert np.isclose(np.trapezoid(np.trapezoid(u, x2, axis=1), x1), 1.0, rtol=1e-6)


@given(st.floats(0.0, 0.5))
def test_normalizer_is_grid_max(t):
    # the grid contains the plume centre exactly
    x1 = P.x1_star + P.V * t + np.linspace(-0.3, 0.3, 601)
    x2 = P.x2_star + np.linspace(-0.3, 0.3, 601)
    A, B = np.meshgrid(x1, x2, indexing="ij")
    assert np.isclose(mean_field_2d(A, B, t, P).max(), normalizer_g(t, P), rtol=1e-12)


def test_source_decay_values():
    assert np.isclose(f_max(P), 125.92)
    assert np.isclose(source_decay_f(0.0, P), f_max(P))
    t = np.linspace(0, 0.5, 50)
    assert np.all(np.diff(source_decay_f(t, P)) < 0)
    assert np.all(source_decay_f(t, MeanFieldParams(Dx1=0, Dx2=0)) == 0)


@given(st.floats(0.01, 0.49))
def test_decay_factor_is_log_derivative(t):
    h = 1e-6
    fd = -P.T * (np.log(normalizer_g(t + h, P)) - np.log(normalizer_g(t - h, P))) / (2 * h)
    assert np.isclose(fd, source_decay_f(t, P), rtol=1e-6)
    assert np.isclose(normalizer_dg_dt(t, P),
                      (normalizer_g(t + h, P) - normalizer_g(t - h, P)) / (2 * h), rtol=1e-6)


def test_time_mean_of_decay_equals_sqrt_lambda():
    avg, _ = quad(lambda t: source_decay_f(t, P), 0, P.T, epsabs=0, epsrel=1e-12, limit=200)
    avg /= P.T
    w = weight_criteria(P)
    assert np.isclose(avg, np.sqrt(w.lambda_ic), rtol=1e-6)
    assert np.isclose(avg, mean_decay_f(P), rtol=1e-10)


def test_weight_criteria_value_and_relations():
    w = weight_criteria(P)
    assert np.isclose(w.lambda_ic, 23.3025575629144220, rtol=1e-12)
    assert w.lambda_bcd == w.lambda_ic
    assert np.isclose(w.lambda_bcn, w.lambda_ic / 64 ** 2)
    assert w.lambda_res == 1
    w2 = weight_criteria(P, delta_x_tilde=0.01)
    assert np.isclose(w2.lambda_bcn / w2.lambda_ic, 1e-4)


def test_weight_criteria_floor_without_dispersion():
    w = weight_criteria(MeanFieldParams(Dx1=0, Dx2=0))
    assert w.lambda_ic == 1.0


@given(st.floats(-0.5, 1.5), st.floats(-0.3, 0.8), st.floats(0.0, 0.5))
def test_mean_field_satisfies_its_pde(x1, x2, t):
    d = mean_field_2d_derivs(x1, x2, t, P)
    r = d["ut"] + P.V * d["u1"] - P.Dx1 * d["u11"] - P.Dx2 * d["u22"]
    scale = abs(d["ut"]) + abs(P.V * d["u1"]) + P.Dx1 * abs(d["u11"]) + P.Dx2 * abs(d["u22"])
    assert abs(r) <= 1e-10 * max(scale, 1e-300)


@given(st.floats(-1, 4), st.floats(0.0, 1.0))
def test_solution_1d_satisfies_its_pde(x, t):
    eps, x0, D, v, h = 0.025, 0.25, 0.093, 3.15, 1e-4
    t = t + 2 * h

    def u(a, b):
        return solution_1d(a, b, eps, x0, D, v)

    ut = (u(x, t + h) - u(x, t - h)) / (2 * h)
    ux = (u(x + h, t) - u(x - h, t)) / (2 * h)
    uxx = (u(x + h, t) - 2 * u(x, t) + u(x - h, t)) / h ** 2
    peak = u(x0 + v * t, t)
    assert abs(ut + v * ux - D * uxx) < 1e-3 * peak * (1 + v + D / 0.025 ** 2) + 1e-12


def test_invalid_params():
    with pytest.raises(ValueError):
        MeanFieldParams(epsilon=0)
    with pytest.raises(ValueError):
        MeanFieldParams(Dx1=-1)
