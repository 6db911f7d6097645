import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import synth_panel
from etadecomp import (
    BootstrapInstabilityError,
    DegenerateRegressorError,
    DimensionError,
    InputError,
    PanelDataset,
    center_panel,
    cluster_bootstrap,
    estimate_eta_epsilon,
    fe_regression,
    make_deltas,
    ols_no_intercept,
    ols_with_intercept,
    within_regression,
)
from etadecomp.errors import EstimationError


def test_no_intercept_examples():
    r = ols_no_intercept([1, 2, 3], [2, 4, 6])
    assert r.slope == 2.0 and r.r_squared == 1.0 and r.intercept == 0.0
    assert ols_no_intercept([1, 2, 3], [0, 0, 0]).slope == 0.0
    assert ols_no_intercept([1, 2], [1, 3]).slope == pytest.approx(7 / 5, rel=1e-15)


def test_no_intercept_se_by_hand():
    x, y = np.array([1.0, 2, 3, 4]), np.array([1.0, 3, 2, 5])
    b = x @ y / (x @ x)
    s2 = ((y - b * x) ** 2).sum() / 3
    r = ols_no_intercept(x, y)
    assert r.slope_se == pytest.approx(np.sqrt(s2 / (x @ x)), rel=1e-12)
    assert r.df_resid == 3
    assert r.r_squared == pytest.approx(1 - ((y - b * x) ** 2).sum() / (y @ y))


def test_with_intercept_examples():
    r = ols_with_intercept([0, 0, 1, 1], [1, 1, 3, 3])
    assert (r.slope, r.intercept, r.r_squared) == (2.0, 1.0, 1.0)
    r = ols_with_intercept([0, 1, 2, 3], [5, 5, 5, 5])
    assert r.slope == 0.0 and r.r_squared == 0.0


def test_with_intercept_group_means():
    rng = np.random.default_rng(1)
    d = rng.random(300) < 0.4
    y = rng.normal(size=300) + 2 * d
    r = ols_with_intercept(d.astype(float), y)
    assert r.slope == pytest.approx(y[d].mean() - y[~d].mean(), rel=1e-12)
    # matches numpy's least squares, including the classical SE
    X = np.column_stack([np.ones(300), d])
    coef, ssr, *_ = np.linalg.lstsq(X, y, rcond=None)
    cov = ssr[0] / 298 * np.linalg.inv(X.T @ X)
    assert r.slope_se == pytest.approx(np.sqrt(cov[1, 1]), rel=1e-10)


def test_degenerate_regressors():
    with pytest.raises(DegenerateRegressorError):
        ols_no_intercept([0, 0, 0], [1, 2, 3])
    with pytest.raises(DegenerateRegressorError):
        ols_with_intercept([2, 2, 2], [1, 2, 3])
    with pytest.raises(DimensionError):
        ols_no_intercept([1, 2], [1, 2, 3])


def test_t_stat_flagged_when_se_zero():
    r = ols_no_intercept([1, 2, 3], [2, 4, 6])
    assert r.slope_se == 0.0 and not r.t_defined and np.isnan(r.t_stat)
    r = ols_no_intercept([1, 2, 3], [2, 4, 7])
    assert r.t_defined and r.t_stat == pytest.approx(r.slope / r.slope_se)


def test_within_examples(small_panel):
    c = center_panel(small_panel)
    assert within_regression(c).slope == pytest.approx(
        fe_regression(small_panel.columns["actual_outcome"],
                      small_panel.columns["predicted_outcome"],
                      np.repeat(np.arange(40), 3)).slope, rel=1e-12)
    w = small_panel.wide()
    ident = PanelDataset.from_wide(w.actual, w.actual)
    assert within_regression(center_panel(ident)).slope == pytest.approx(1.0, rel=1e-14)
    flat = PanelDataset.from_wide(w.actual, np.repeat(w.actual[:, :1], 3, axis=1))
    assert within_regression(center_panel(flat)).slope == 0.0


def test_within_df_subtracts_units(small_panel):
    r = within_regression(center_panel(small_panel))
    assert r.df_resid == 40 * 3 - 40 - 1


def test_within_degenerate():
    ds = PanelDataset.from_wide(np.tile([[1.0, 1.0]], (3, 1)) * [[1], [2], [3]],
                                np.ones((3, 2)))
    with pytest.raises(DegenerateRegressorError):
        within_regression(center_panel(ds))


def test_t2_within_equals_diff():
    ds = synth_panel(0.3, 0.3, 0.6, var_nu=400.0, n_units=500, seed=3)
    d = make_deltas(ds)
    a = ols_no_intercept(d.delta_actual, d.delta_predicted).slope
    b = within_regression(center_panel(ds)).slope
    assert b == pytest.approx(a, rel=1e-10)


small = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(small, small), min_size=3, max_size=30),
       st.floats(0.01, 100))
def test_slope_scale_equivariance(pairs, c):
    x, y = np.array(pairs).T
    assume((x @ x) > 1e-3)
    base = ols_no_intercept(x, y).slope
    assert ols_no_intercept(x, c * y).slope == pytest.approx(c * base, rel=1e-9, abs=1e-9)
    assert ols_no_intercept(c * x, y).slope == pytest.approx(base / c, rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_within_shift_invariance(seed, T):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(6, T)) * 10
    p = 0.5 * a + rng.normal(size=(6, T))
    base = within_regression(center_panel(PanelDataset.from_wide(a, p))).slope
    sa, sp = rng.normal(size=(6, 1)) * 1e3, rng.normal(size=(6, 1)) * 1e3
    shifted = within_regression(center_panel(PanelDataset.from_wide(a + sa, p + sp))).slope
    assert shifted == pytest.approx(base, rel=1e-8)


# -- bootstrap ---------------------------------------------------------------

def eta_eps_stat(d):
    return estimate_eta_epsilon(d).value


def test_bootstrap_constant_statistic(small_panel):
    res = cluster_bootstrap(small_panel, lambda d: 3.0, 100, seed=1)
    assert res.se == 0.0 and res.point == 3.0 and res.n_failed == 0


def test_bootstrap_deterministic(small_panel):
    a = cluster_bootstrap(small_panel, eta_eps_stat, 200, seed=11)
    b = cluster_bootstrap(small_panel, eta_eps_stat, 200, seed=11)
    c = cluster_bootstrap(small_panel, eta_eps_stat, 200, seed=11, n_jobs=4)
    assert a.se == b.se == c.se
    np.testing.assert_array_equal(a.replicates, c.replicates)
    assert cluster_bootstrap(small_panel, eta_eps_stat, 200, seed=12).se != a.se


def test_bootstrap_min_replicates(small_panel):
    with pytest.raises(InputError):
        cluster_bootstrap(small_panel, eta_eps_stat, 50)


def test_bootstrap_instability(small_panel):
    calls = iter(range(10_000))

    def flaky(d):
        if next(calls) % 10 == 1:
            raise EstimationError("boom")
        return 1.0

    with pytest.raises(BootstrapInstabilityError) as info:
        cluster_bootstrap(small_panel, flaky, 100)
    assert info.value.failure_share == pytest.approx(0.1, abs=0.01)


def test_bootstrap_tolerates_rare_failures(small_panel):
    calls = iter(range(10_000))

    def rare(d):
        return float("nan") if next(calls) == 5 else 1.0

    res = cluster_bootstrap(small_panel, rare, 100)
    assert res.n_failed == 1


def test_bootstrap_ci(small_panel):
    res = cluster_bootstrap(small_panel, eta_eps_stat, 400, seed=2)
    lo, hi = res.ci(0.95)
    assert lo < res.point < hi


@pytest.mark.slow
def test_bootstrap_se_matches_monte_carlo():
    # eta_eps estimator on N=2000 panels with prediction noise
    kw = dict(eta_mu=0.5, eta_T=0.5, eta_eps=0.5, var_nu=300.0 ** 2, n_units=2000)
    draws = [estimate_eta_epsilon(synth_panel(seed=s, **kw)).value for s in range(200)]
    mc_se = np.std(draws, ddof=1)
    boot = cluster_bootstrap(synth_panel(seed=1000, **kw), eta_eps_stat, 1000, seed=0)
    assert abs(boot.se / mc_se - 1) < 0.25


@pytest.mark.slow
def test_bootstrap_se_stabilizes():
    ds = synth_panel(0.5, 0.5, 0.5, var_nu=300.0 ** 2, n_units=1000, seed=4)
    a = cluster_bootstrap(ds, eta_eps_stat, 1000, seed=0).se
    b = cluster_bootstrap(ds, eta_eps_stat, 4000, seed=0).se
    assert abs(a / b - 1) < 0.05
