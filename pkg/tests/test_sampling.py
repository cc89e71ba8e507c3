import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import kstest

from adepinn.analytic import MeanFieldParams, mean_field_2d
from adepinn.exceptions import InvalidCountError, InvalidInputError
from adepinn.fields import FieldGrid, ProblemSpec
from adepinn.sampling import (SampleCounts, SamplePlan, adaptive_time_sample, build_darcy_plan,
                              build_sample_plan, dump_plan, from_dimless, lhs, load_plan,
                              tabulated_time_cdf, to_dimless)

P = MeanFieldParams()
SPEC = ProblemSpec()


def closed_form_time_cdf(t, p):
    """CDF of g on [0, T] from the antiderivative of 1/sqrt((a+bt)(c+dt))."""
    a = c = p.epsilon ** 2
    b, d = 2 * p.Dx1, 2 * p.Dx2

    def F(s):
        return np.log(np.sqrt(d * (a + b * s)) + np.sqrt(b * (c + d * s)))

    return (F(t) - F(0.0)) / (F(p.T) - F(0.0))


def _strata_counts(x, n):
    return np.bincount(np.minimum((x * n).astype(int), n - 1), minlength=n)


def test_lhs_small_example():
    x = lhs(4, 1, seed=0)[:, 0]
    assert sorted((x * 4).astype(int)) == [0, 1, 2, 3]


@given(st.integers(0, 10_000))
def test_lhs_one_point_per_stratum(seed):
    x = lhs(1000, 2, seed=seed)
    for k in range(2):
        assert np.all(_strata_counts(x[:, k], 1000) == 1)


def test_lhs_seeds_and_bounds():
    a, b = lhs(50, 3, seed=1), lhs(50, 3, seed=2)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, lhs(50, 3, seed=1))
    x = lhs(10, 2, [(-0.5, 0.5), (2, 4)], seed=0)
    assert x[:, 0].min() >= -0.5 and x[:, 1].min() >= 2 and x[:, 1].max() <= 4
    with pytest.raises(InvalidCountError):
        lhs(0, 2)


def test_dimless_round_trip():
    x1, x2, t = 0.3, 0.1, 0.2
    back = from_dimless(*to_dimless(x1, x2, t, SPEC), SPEC)
    assert np.allclose(back, (x1, x2, t))


def test_table_matches_closed_form():
    t, cdf = tabulated_time_cdf(P)
    assert np.abs(cdf - closed_form_time_cdf(t, P)).max() < 1e-6


def test_adaptive_half_ks_against_closed_form():
    tt = adaptive_time_sample(100_000, P, seed=0, ratio=1.0)
    t = (tt + 0.5) * P.T
    assert kstest(t, lambda s: closed_form_time_cdf(s, P)).statistic < 0.02


def test_no_dispersion_gives_uniform_times():
    q = MeanFieldParams(Dx1=0.0, Dx2=0.0)
    tt = adaptive_time_sample(10_000, q, seed=1)
    assert kstest(tt + 0.5, "uniform").statistic < 0.05


@given(st.integers(0, 1000))
def test_adaptive_times_concentrate_early(seed):
    tt = adaptive_time_sample(2000, P, seed=seed)
    assert np.all((tt > -0.5) & (tt <= 0.5))
    assert np.mean(tt < -0.4) > 0.1
    ad = adaptive_time_sample(2000, P, seed=seed, ratio=1.0)
    un = adaptive_time_sample(2000, P, seed=seed, ratio=0.0)
    assert ad.mean() < un.mean()


def test_plan_counts_and_boundaries():
    counts = SampleCounts(n_res=500, n_ic=100, n_bcd_x=6, n_bcn_x=12, n_t=5)
    plan = build_sample_plan(SPEC, counts, "adaptive_time", seed=0,
                             ic_fn=lambda a, b: mean_field_2d(a, b, 0.0, P))
    assert plan.counts["N_res"] == 500 and plan.counts["N_ic"] == 100
    assert len(plan.bcd) == 6 * 5 and len(plan.bcn) == 12 * 5
    assert np.all(plan.bcd[:, 0] == -0.5)
    for pt, e in zip(plan.bcn, plan.bcn_ids):
        axis = 0 if e.startswith("x1") else 1
        assert abs(pt[axis]) == 0.5
    assert np.all(plan.residual[:, 2] > -0.5)
    # time slices exclude the initial time
    assert np.isclose(plan.bcd[:, 2].min(), 1 / 5 - 0.5)


def test_plan_scaled_counts_keep_invariants():
    counts = SampleCounts(n_res=10_000, n_ic=2000, n_bcd_x=54, n_bcn_x=310, n_t=100)
    small = counts.scaled(0.01)
    plan = build_sample_plan(SPEC, small, "lhs", seed=3, ic_fn=lambda a, b: a * 0)
    assert plan.counts["N_res"] == 100
    assert np.abs(plan.residual).max() <= 0.5


def test_ic_from_grid_without_replacement():
    g = FieldGrid(8, 4, (SPEC.L1 / 8, SPEC.L2 / 4), np.arange(32.0), "concentration")
    plan = build_sample_plan(SPEC, SampleCounts(n_res=10), "lhs", seed=0, ic_grid=g)
    assert len(plan.ic) == 24
    assert len(np.unique(plan.ic_values)) == 24
    with pytest.raises(InvalidCountError):
        build_sample_plan(SPEC, SampleCounts(n_res=10, ic_fraction=1.5), "lhs", 0, ic_grid=g)
    with pytest.raises(InvalidCountError):
        build_sample_plan(SPEC, SampleCounts(n_res=10, n_ic=40), "lhs", 0, ic_grid=g)


def test_terminal_plan_slices():
    plan = build_sample_plan(SPEC, SampleCounts(n_res=10, n_ic=5, n_t=4), "lhs", 0,
                             ic_fn=lambda a, b: a, anchor_time=0.5)
    assert np.isclose(plan.bcd[:, 2].max(), 0.25)
    assert np.all(plan.ic_points3[:, 2] == 0.5)


def test_plan_validation():
    with pytest.raises(InvalidInputError):
        SamplePlan(residual=[[0, 0, 0.7]], ic=np.zeros((0, 2)), ic_values=[], bcd=np.zeros((0, 3)),
                   bcd_ids=[], bcn=np.zeros((0, 3)), bcn_ids=[])
    with pytest.raises(InvalidInputError):
        build_sample_plan(SPEC, SampleCounts(), "random")


def test_plan_dump_round_trip(tmp_path):
    plan = build_sample_plan(SPEC, SampleCounts(n_res=50, n_ic=20, n_t=3), "adaptive_time", 1,
                             ic_fn=lambda a, b: mean_field_2d(a, b, 0.0, P))
    dump_plan(tmp_path / "plan.txt", plan)
    back = load_plan(tmp_path / "plan.txt")
    for name in ("residual", "ic", "ic_values", "bcd", "bcn", "bcd_values", "bcn_values"):
        assert np.array_equal(getattr(back, name), getattr(plan, name))
    assert list(back.bcn_ids) == list(plan.bcn_ids)
    assert back.counts == plan.counts and back.strategy == plan.strategy


def test_darcy_plan():
    dp = build_darcy_plan(SPEC, 100, 8, seed=0)
    assert dp.residual.shape == (100, 2)
    assert np.all(dp.bcd[:, 0] == 0.5)
    assert dp.bcn.shape == (24, 2) and dp.bcn_normals().shape == (24, 2)
