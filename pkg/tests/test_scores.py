from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from emt import errors
from emt.baselines import Baseline, Method, historical_baseline, quantile_baseline
from emt.ingest import to_weekly_panel
from emt.scores import (
    GaussianModel,
    PoissonExcessModel,
    Z_CLAMP,
    cumulative_excess,
    delta_confidence_interval,
    excess_series,
    format_scores_csv,
    interval_coverage,
    normal_approximation_gap,
    p_score_series,
    p_scores,
    population_dependence_demo,
    population_interval_coefficients,
    shifted_cumulative_excess,
    z_score_gaussian,
    z_score_poisson,
    z_score_poisson_exact,
)

from conftest import seasonal_weekly, weekly_series


@pytest.fixture
def panel_and_series(german_like):
    p = to_weekly_panel(german_like, [2016, 2017, 2018, 2019])
    return p, german_like


def test_excess_zero_when_deaths_equal_baseline():
    s = weekly_series([2019], seasonal_weekly)
    b = Baseline(Method.HISTORICAL, s.counts.astype(float), (2019,))
    ex = excess_series(s, b, 2019)
    assert np.all(ex.values == 0)


def test_excess_elementwise_oracle(panel_and_series):
    p, s = panel_and_series
    b = historical_baseline(p, p.years)
    ex = excess_series(s, b)
    assert ex.year == 2020 and ex.weeks.tolist() == list(range(1, 24))
    for w, d, v in zip(ex.weeks, ex.deaths, ex.values):
        assert v == d - b.values[w - 1]


def test_excess_plus_baseline_exact(panel_and_series):
    p, s = panel_and_series
    b = historical_baseline(p, p.years)
    ex = excess_series(s, b)
    # four-year means are multiples of 1/4, so float arithmetic is exact
    for d, base, v in zip(ex.deaths, ex.baseline, ex.values):
        assert Fraction(v) + Fraction(base) == d


def test_excess_length_mismatch(german_like):
    short = Baseline(Method.HISTORICAL, np.ones(10), (2016,))
    with pytest.raises(errors.LengthMismatch):
        excess_series(german_like, short)
    with pytest.raises(errors.LengthMismatch):
        excess_series(german_like, short, 2031)


def test_cumulative_and_shift(panel_and_series):
    p, s = panel_and_series
    b = historical_baseline(p, p.years)
    ex = excess_series(s, b)
    total = cumulative_excess(ex, (11, 23))
    assert total == pytest.approx(sum(ex.values[10:23]))
    assert cumulative_excess(ex, (11, 23), per_million=True) == pytest.approx(total * 1e6 / s.population)
    assert shifted_cumulative_excess(s, b, (11, 23), 0) == total
    assert shifted_cumulative_excess(s, b, (11, 22), 1) == pytest.approx(sum(ex.values[11:23]))
    data_mode = shifted_cumulative_excess(s, b, (11, 22), 1, mode="data")
    assert data_mode == pytest.approx(ex.deaths[10:22].sum() - b.values[11:23].sum())
    with pytest.raises(errors.RangeOutOfBounds):
        cumulative_excess(ex, (12, 11))
    with pytest.raises(errors.RangeOutOfBounds):
        cumulative_excess(ex, (20, 30))
    with pytest.raises(errors.RangeOutOfBounds):
        shifted_cumulative_excess(s, b, (11, 23), 1)


def test_p_scores_examples():
    assert p_scores([200], [200]).tolist() == [0.0]
    assert p_scores([400], [200]).tolist() == [1.0]
    assert p_scores([250], [200]).tolist() == [0.25]
    with pytest.raises(errors.ZeroBaseline):
        p_scores([1], [0])


@given(st.lists(st.tuples(st.integers(0, 10**5), st.integers(1, 10**5)), min_size=1, max_size=20), st.floats(0.01, 1000))
def test_p_score_scale_invariance(pairs, c):
    d, b = np.array(pairs, dtype=float).T
    np.testing.assert_allclose(p_scores(c * d, c * b), p_scores(d, b), rtol=1e-9, atol=1e-12)


def test_p_score_series_and_csv(panel_and_series):
    p, s = panel_and_series
    b = quantile_baseline(p, p.years, 0.1)
    ps = p_score_series(s, b)
    ex = excess_series(s, b)
    np.testing.assert_allclose(ps, ex.values / ex.baseline)
    text = format_scores_csv(ex)
    lines = text.splitlines()
    assert lines[0] == "week,deaths,baseline,excess,p_score"
    assert len(lines) == 24


def test_gaussian_z():
    m = GaussianModel(mu=0, sigma=1, n=4)
    assert z_score_gaussian(1.0, m) == 2.0
    assert z_score_gaussian(0.0, m) == 0.0
    with pytest.raises(errors.ValidationError):
        GaussianModel(0, 0, 1)


def test_gaussian_z_scales_with_root_n():
    rng = np.random.default_rng(11)
    delta, reps = 0.1, 10_000

    def mean_z(n):
        xbar = delta + rng.standard_normal(reps) / np.sqrt(n)
        return z_score_gaussian(xbar, GaussianModel(0, 1, n)).mean()

    assert mean_z(10_000) / mean_z(100) == pytest.approx(10, rel=0.1)


def test_poisson_z():
    assert z_score_poisson(400, 400) == 0
    assert z_score_poisson(420, 400) == 1.0
    assert z_score_poisson(4 * 437, 4 * 400) == pytest.approx(2 * z_score_poisson(437, 400), rel=1e-12)


def _tail_oracle(x, lam):
    mpmath.mp.dps = 50
    cdf = mpmath.fsum(mpmath.exp(-lam) * mpmath.power(lam, k) / mpmath.factorial(k) for k in range(x))
    return 1 - cdf


def test_exact_z_matches_pmf_summation():
    for x in (300, 340, 350, 360, 400):
        p = _tail_oracle(x, 350)
        expected = float(-mpmath.sqrt(2) * mpmath.erfinv(2 * p - 1))
        assert z_score_poisson_exact(x, 350) == pytest.approx(expected, abs=1e-11)


def test_exact_z_tails():
    z, flag = z_score_poisson_exact(0, 3.0, full_output=True)
    assert z == -Z_CLAMP and flag
    z, flag = z_score_poisson_exact(5000, 350, full_output=True)
    assert z == Z_CLAMP and flag
    z, flag = z_score_poisson_exact(360, 350, full_output=True)
    assert not flag


def test_exact_z_strictly_increasing():
    z = z_score_poisson_exact(np.arange(0, 800), 350)
    inner = (np.abs(z) < Z_CLAMP)
    assert np.all(np.diff(z[inner]) > 0)


def test_exact_vs_approx_gap_is_small():
    # The inclusive tail P(X >= x) sits half a count away from the continuity
    # correction, so the worst gap over |z| <= 2 is about 0.055 at lam = 350.
    x = np.arange(250, 451)
    za = z_score_poisson(x, 350)
    ze = z_score_poisson_exact(x, 350)
    gap = np.abs(ze - za)[np.abs(za) <= 2]
    assert gap.max() < 0.06


def test_normal_approximation_gap_at_350():
    assert normal_approximation_gap(350) == pytest.approx(0.014, abs=0.001)


def _grid_interval(z, lam, sigma=1.0, level=0.95):
    zstar = stats.norm.ppf(0.5 + level / 2)
    ok = None
    for step in (1e-3, 1e-6, 1e-9):
        if ok is None:
            d = np.arange(-0.99, 2.0, step)
        else:
            lo_seed, hi_seed = ok
            d = np.concatenate((np.arange(lo_seed - 2e3 * step, lo_seed + 2e3 * step, step),
                                np.arange(hi_seed - 2e3 * step, hi_seed + 2e3 * step, step)))
        inside = np.abs(d - z / np.sqrt(lam)) <= zstar * sigma * np.sqrt((1 + d) / lam)
        ok = (d[inside].min(), d[inside].max())
    return ok


def test_delta_interval_grid_oracle():
    lo, hi = delta_confidence_interval(2.0, 400)
    glo, ghi = _grid_interval(2.0, 400)
    assert lo == pytest.approx(glo, abs=1e-6)
    assert hi == pytest.approx(ghi, abs=1e-6)
    lo, hi = delta_confidence_interval(-1.5, 80, sigma_od=1.3, level=0.9)
    glo, ghi = _grid_interval(-1.5, 80, 1.3, 0.9)
    assert (lo, hi) == pytest.approx((glo, ghi), abs=1e-6)


def test_delta_interval_shrinks_like_root_lambda():
    widths = []
    for lam in (1e4, 1e6):
        lo, hi = delta_confidence_interval(0.0, lam)
        assert lo < 0 < hi
        widths.append(hi - lo)
    assert widths[0] / widths[1] == pytest.approx(10, rel=0.01)


def test_delta_interval_errors():
    with pytest.raises(errors.ValidationError):
        delta_confidence_interval(0, 100, sigma_od=0.5)
    with pytest.raises(errors.DegenerateInterval):
        delta_confidence_interval(-40, 100)


def test_population_coefficients():
    a, b = population_interval_coefficients()
    assert a == pytest.approx(72, rel=0.01)
    assert b == pytest.approx(141, rel=0.01)


def test_population_demo_null():
    rep = population_dependence_demo(0.0, 100_000, 10_000_000, seed=3, n_reps=4000)
    for r in rep.rows:
        assert abs(r.mean_z) < 0.1
        assert abs(r.mean_p) < 0.01


def test_population_demo_deterministic_and_csv():
    a = population_dependence_demo(0.2, 100_000, 10_000_000, seed=5, n_reps=300)
    b = population_dependence_demo(0.2, 100_000, 10_000_000, seed=5, n_reps=300)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == "n,delta,mean_z,mean_p,ci_lo,ci_hi,coverage"
    with pytest.raises(errors.ValidationError):
        population_dependence_demo(0.2, 1000, 10_000_000, seed=5)


def test_overdispersed_coverage():
    model = PoissonExcessModel(400, 0.2, sigma_od=1.2)
    assert 0.935 <= interval_coverage(model, 5000, seed=9) <= 0.965


def test_poisson_model_validation():
    with pytest.raises(errors.ValidationError):
        PoissonExcessModel(0)
    with pytest.raises(errors.ValidationError):
        PoissonExcessModel(1, delta=-1)
    m = PoissonExcessModel(10, 0.5)
    assert m.mean == 15
    np.testing.assert_array_equal(m.sample(1, 2, 5), m.sample(1, 2, 5))
