import numpy as np
import pytest
from hypothesis import given, strategies as st

from adepinn.analytic import MeanFieldParams, mean_field_2d
from adepinn.exceptions import InvalidInputError, UndefinedMetricError
from adepinn.metrics import (plume_diagnostics, rel_l2_at_time, rel_l2_time_avg,
                             write_metrics_csv)

U = np.random.default_rng(0).random((8, 4)) + 0.1


def test_rel_l2_examples():
    assert rel_l2_at_time(U, U) == 0
    assert np.isclose(rel_l2_at_time(2 * U, U), 1.0)
    c = 0.3
    assert np.isclose(rel_l2_at_time(U + c, U), np.sqrt(U.size * c ** 2 / np.sum(U ** 2)))


def test_rel_l2_errors():
    with pytest.raises(UndefinedMetricError):
        rel_l2_at_time(U, np.zeros_like(U))
    with pytest.raises(InvalidInputError):
        rel_l2_at_time(U, U[:4])
    with pytest.raises(UndefinedMetricError):
        rel_l2_time_avg([])


def test_time_average_pools_sums():
    a, b = U, 3 * U
    e1, e2 = 0.1 * U, np.zeros_like(U)
    expected = np.sqrt((np.sum(e1 ** 2) + np.sum(e2 ** 2)) / (np.sum(a ** 2) + np.sum(b ** 2)))
    assert np.isclose(rel_l2_time_avg([(a + e1, a), (b + e2, b)]), expected)
    assert np.isclose(rel_l2_time_avg([(a + e1, a)]), rel_l2_at_time(a + e1, a))


@given(st.floats(0.0, 10.0))
def test_rel_l2_homogeneous(c):
    e = np.sin(np.arange(U.size)).reshape(U.shape)
    assert np.isclose(rel_l2_at_time(U + c * e, U), c * rel_l2_at_time(U + e, U))


def test_plume_diagnostics_of_analytic_plume():
    p = MeanFieldParams()
    x1 = np.linspace(-0.5, 1.5, 801)
    x2 = np.linspace(-0.75, 1.25, 801)
    A, B = np.meshgrid(x1, x2, indexing="ij")
    t = 0.1
    d = plume_diagnostics(mean_field_2d(A, B, t, p), (x1[1] - x1[0], x2[1] - x2[0]),
                          (x1[0], x2[0]))
    assert np.isclose(d.mass, 1.0, rtol=1e-6)
    assert np.isclose(d.x1c, p.x1_star + p.V * t, atol=1e-3)
    assert np.isclose(d.x2c, p.x2_star, atol=1e-3)


@given(st.floats(0.1, 5.0))
def test_mass_linear(c):
    d1 = plume_diagnostics(U, (0.1, 0.1))
    d2 = plume_diagnostics(c * U, (0.1, 0.1))
    assert np.isclose(d2.mass, c * d1.mass)
    assert np.isclose(d2.x1c, d1.x1c)


def test_nonpositive_mass_flags_center():
    d = plume_diagnostics(-U, (0.1, 0.1))
    assert d.mass < 0 and not d.center_defined and np.isnan(d.x1c)


def test_metrics_csv(tmp_path):
    write_metrics_csv(tmp_path / "m.csv", [(0.0, 0.1, 1.0, 0.2, 0.3)])
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "time,rel_l2,mass,x1c,x2c" and len(lines) == 2
