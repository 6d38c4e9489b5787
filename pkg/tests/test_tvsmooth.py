import math
import time

import cvxpy as cp
import numpy as np
import pytest

from emt import errors
from emt.tautstring import TautConfig, dyadic_intervals, fit_taut_string, modality, monotone_segments
from emt.tvsmooth import (
    SmoothConfig,
    difference_matrix,
    discrete_derivative,
    format_smooth_csv,
    tv_smooth,
)


def test_discrete_derivative():
    assert discrete_derivative([0, 1, 2, 3], 1).tolist() == [1, 1, 1]
    assert discrete_derivative([0, 1, 4, 9], 2).tolist() == [2, 2]
    with pytest.raises(errors.TooShort):
        discrete_derivative([1, 2], 2)


def test_derivative_composes():
    x = np.random.default_rng(0).normal(size=30)
    d = x
    for _ in range(3):
        d = d[1:] - d[:-1]
    np.testing.assert_allclose(discrete_derivative(x, 3), d, atol=1e-12)
    np.testing.assert_allclose(difference_matrix(30, 3) @ x, d, atol=1e-12)


def bump(n=40, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    return 50 + 30 * np.exp(-0.5 * ((t - n / 2) / (n / 8)) ** 2) + rng.normal(0, 3, n)


def lp_oracle(y, fit, order):
    """The smoothing LP written directly: interval sums of residuals, no running sums."""
    n = len(y)
    f = cp.Variable(n)
    thr = math.sqrt(fit.tau * math.log(n))
    cons = []
    for starts, L in dyadic_intervals(n):
        for a in starts:
            s = cp.sum(y[a:a + L] - f[a:a + L])
            cons.append(cp.abs(s) <= thr * fit.sigma_hat * math.sqrt(L))
    for s, e, d in monotone_segments(fit):
        if d:
            cons.append(d * cp.diff(f[s:e + 1]) >= 0)
    prob = cp.Problem(cp.Minimize(cp.norm1(cp.diff(f, order + 1))), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return prob.value


@pytest.mark.parametrize("order", [1, 2])
@pytest.mark.parametrize("seed", range(3))
def test_objective_matches_lp_oracle(order, seed):
    y = bump(seed=seed)
    fit = fit_taut_string(y)
    sm = tv_smooth(y, fit, order)
    assert sm.objective == pytest.approx(lp_oracle(y, fit, order), rel=1e-4, abs=1e-7)


def test_straight_line():
    y = 3.0 + 0.5 * np.arange(60)
    # noise-free data: zero noise level makes the line the only feasible fit
    fit = fit_taut_string(y, TautConfig(sigma_mode="fixed", sigma_value=0.0))
    sm = tv_smooth(y, fit, 1)
    assert sm.objective == pytest.approx(0, abs=1e-6)
    np.testing.assert_allclose(sm.values, y, atol=1e-6)


def _daily(n=500, seed=3):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    mu = 280 + 60 * np.exp(-0.5 * ((t - 120) / 25) ** 2) + 50 * np.exp(-0.5 * ((t - 380) / 30) ** 2)
    return rng.poisson(mu).astype(float)


@pytest.fixture(scope="module")
def daily_solutions():
    y = _daily()
    fit = fit_taut_string(y)
    return y, fit, {k: tv_smooth(y, fit, k) for k in (1, 2)}


@pytest.mark.parametrize("order", [1, 2])
def test_feasibility_verified(daily_solutions, order):
    y, fit, sols = daily_solutions
    sm = sols[order]
    assert sm.max_mr <= sm.threshold + 1e-6
    assert sm.max_monotone_violation <= 1e-8
    assert sm.solver_meta["solver"].startswith("scipy.optimize.linprog")
    assert sm.solver_meta["max_bound_excess"] <= 1e-6


@pytest.mark.parametrize("order", [1, 2])
def test_smooth_residuals_not_below_string(daily_solutions, order):
    y, fit, sols = daily_solutions
    assert np.std(sols[order].residuals) >= np.std(fit.residuals) - 1e-9


@pytest.mark.parametrize("order", [1, 2])
def test_modality_preserved(daily_solutions, order):
    y, fit, sols = daily_solutions
    # plateaus of the smooth fit sit within LP tolerance of flat
    assert modality(np.round(sols[order].values, 6), rtol=1e-7) == fit.modality


def test_sparse_higher_differences(daily_solutions):
    y, fit, sols = daily_solutions
    d2 = np.abs(np.diff(sols[1].values, 2))
    d3 = np.abs(np.diff(sols[2].values, 3))
    assert np.mean(d2 > 1e-5) < 0.2
    assert np.mean(d3 > 1e-5) < 0.2


def test_runtime_500():
    y = _daily(seed=4)
    fit = fit_taut_string(y)
    t0 = time.perf_counter()
    tv_smooth(y, fit, 2)
    assert time.perf_counter() - t0 < 60


def test_meta_and_csv(daily_solutions):
    y, fit, sols = daily_solutions
    sm = sols[1]
    meta = sm.meta_text()
    assert "feasibility_tol=1e-08" in meta and "optimality_tol=1e-06" in meta
    lines = format_smooth_csv(sm, y).splitlines()
    assert lines[0] == "index,count,smooth_value,residual" and len(lines) == len(y) + 1


def test_errors():
    y = bump()
    fit = fit_taut_string(y)
    with pytest.raises(errors.ValidationError):
        tv_smooth(y, fit, 3)
    with pytest.raises(errors.ValidationError):
        tv_smooth(y[:-1], fit, 1)
    with pytest.raises(errors.SolverLimit):
        tv_smooth(_daily(), fit_taut_string(_daily()), 2, SmoothConfig(time_limit=1e-4))
