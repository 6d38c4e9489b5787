"""Excess deaths, P-scores, Z-scores and confidence intervals for relative excess.

Z-scores standardise excess by the noise level, and the noise level of a
count grows like the square root of the population. Two countries with the
same relative excess therefore get Z-scores differing by the square root of
their population ratio, while their P-scores agree. The helpers at the end
of the module demonstrate this by simulation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from . import _rng
from .baselines import Baseline
from .errors import (
    DegenerateInterval,
    LengthMismatch,
    RangeOutOfBounds,
    ValidationError,
    ZeroBaseline,
)
from .ingest import Cadence, MortalitySeries

# Weekly deaths per head in a large European population: 1% a year over 52 weeks.
WEEKLY_DEATH_RATE = 0.00019
Z_CLAMP = 38.0


@dataclass(frozen=True)
class ExcessSeries:
    """Weekly excess of one ISO year; ``values = deaths - baseline``."""

    year: int
    weeks: np.ndarray
    deaths: np.ndarray
    baseline: np.ndarray
    values: np.ndarray
    population: int | None = None
    baseline_ref: str = ""

    def __len__(self) -> int:
        return len(self.weeks)


def _target_year(series: MortalitySeries, year: int | None) -> int:
    if series.cadence is not Cadence.WEEKLY:
        raise ValidationError("scores need a weekly series")
    iso_year, _ = series.iso_weeks()
    return int(iso_year[-1]) if year is None else int(year)


def excess_series(series: MortalitySeries, baseline: Baseline, year: int | None = None) -> ExcessSeries:
    """Deaths minus baseline for every week of ``year`` (default: the last year in ``series``)."""
    year = _target_year(series, year)
    iso_year, iso_week = series.iso_weeks()
    mask = iso_year == year
    if not mask.any():
        raise LengthMismatch(f"series has no weeks in {year}")
    weeks = iso_week[mask]
    if weeks.max() > len(baseline.values):
        raise LengthMismatch(f"baseline has {len(baseline.values)} weeks, series reaches week {weeks.max()}")
    deaths = series.counts[mask]
    base = np.asarray(baseline.values, dtype=float)[weeks - 1]
    ref = f"{baseline.method.value}:{'-'.join(map(str, baseline.years_used))}"
    if baseline.excluded_years:
        ref += f":excl{'-'.join(map(str, baseline.excluded_years))}"
    return ExcessSeries(year, weeks, deaths, base, deaths - base, series.population, ref)


def _week_mask(excess: ExcessSeries, weeks: tuple[int, int]) -> np.ndarray:
    a, b = weeks
    if a > b:
        raise RangeOutOfBounds(f"empty week range {a}:{b}")
    wanted = np.arange(a, b + 1)
    present = np.isin(wanted, excess.weeks)
    if not present.all():
        raise RangeOutOfBounds(f"weeks {wanted[~present].tolist()} of {excess.year} not in series")
    return np.isin(excess.weeks, wanted)


def cumulative_excess(excess: ExcessSeries, weeks: tuple[int, int], per_million: bool = False) -> float:
    """Sum of weekly excess over the inclusive ISO-week range ``weeks``."""
    total = float(excess.values[_week_mask(excess, weeks)].sum())
    if per_million:
        if not excess.population:
            raise ValidationError("population needed for per-million excess")
        total *= 1e6 / excess.population
    return total


def shifted_cumulative_excess(
    series: MortalitySeries,
    baseline: Baseline,
    weeks: tuple[int, int],
    shift: int,
    year: int | None = None,
    per_million: bool = False,
    mode: str = "window",
) -> float:
    """Cumulative excess had the analysed epidemic happened ``shift`` weeks later.

    ``mode="window"`` moves the whole window: deaths and baseline both over
    ``weeks + shift``. ``mode="data"`` keeps the deaths of ``weeks`` and
    compares them with the baseline of ``weeks + shift``.
    """
    a, b = weeks[0] + shift, weeks[1] + shift
    if a < 1 or b > len(baseline.values):
        raise RangeOutOfBounds(f"shifted range {a}:{b} outside the baseline")
    ex = excess_series(series, baseline, year)
    if mode == "window":
        return cumulative_excess(ex, (a, b), per_million)
    if mode != "data":
        raise ValidationError(f"unknown shift mode {mode!r}")
    deaths = ex.deaths[_week_mask(ex, weeks)]
    base = np.asarray(baseline.values, dtype=float)[a - 1:b]
    total = float(deaths.sum() - base.sum())
    if per_million:
        if not ex.population:
            raise ValidationError("population needed for per-million excess")
        total *= 1e6 / ex.population
    return total


def p_scores(deaths, baseline) -> np.ndarray:
    """Relative excess ``(deaths - baseline) / baseline`` elementwise."""
    deaths = np.asarray(deaths, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    if np.any(baseline <= 0):
        raise ZeroBaseline("P-scores need a positive baseline")
    return (deaths - baseline) / baseline


def p_score_series(series: MortalitySeries, baseline: Baseline, year: int | None = None) -> np.ndarray:
    ex = excess_series(series, baseline, year)
    return p_scores(ex.deaths, ex.baseline)


def format_scores_csv(excess: ExcessSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("week", "deaths", "baseline", "excess", "p_score"))
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(excess.baseline > 0, excess.values / excess.baseline, np.nan)
    for row in zip(excess.weeks, excess.deaths, excess.baseline, excess.values, p):
        w.writerow((int(row[0]), int(row[1]), repr(float(row[2])), repr(float(row[3])), repr(float(row[4]))))
    return buf.getvalue()


# --------------------------------------------------------------------------
# Z-scores


@dataclass(frozen=True)
class GaussianModel:
    """Observations i.i.d. normal with mean ``mu + delta`` and known ``sigma``."""

    mu: float
    sigma: float
    n: int
    delta: float = 0.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValidationError("sigma must be positive")
        if self.n < 1:
            raise ValidationError("n must be at least 1")


@dataclass(frozen=True)
class PoissonExcessModel:
    """Counts with mean ``lam * (1 + delta)`` and variance ``sigma_od**2`` times the mean."""

    lam: float
    delta: float = 0.0
    sigma_od: float = 1.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValidationError("lambda must be positive")
        if 1 + self.delta <= 0:
            raise ValidationError("delta must exceed -1")
        if self.sigma_od < 1:
            raise ValidationError("sigma_od must be at least 1")

    @property
    def mean(self) -> float:
        return self.lam * (1 + self.delta)

    def sample(self, seed: int, replicate: int, size: int) -> np.ndarray:
        """Deterministic draws for ``(seed, replicate)``.

        With ``sigma_od > 1`` the counts are negative binomial with the
        inflated variance.
        """
        g = _rng.stream(seed, replicate)
        m = self.mean
        if self.sigma_od == 1:
            return g.poisson(m, size)
        r = m / (self.sigma_od**2 - 1)
        return g.negative_binomial(r, r / (r + m), size)


def z_score_gaussian(xbar, model: GaussianModel):
    return np.sqrt(model.n) * (np.asarray(xbar, dtype=float) - model.mu) / model.sigma


def z_score_poisson(x, lam: float):
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    return (np.asarray(x, dtype=float) - lam) / np.sqrt(lam)


def z_score_poisson_exact(x, lam: float, full_output: bool = False):
    """Z-score of a count via the exact Poisson upper-tail P-value.

    ``p = P(X >= x)`` for ``X ~ Poisson(lam)``, evaluated through the
    regularized incomplete gamma identity ``P(X >= x) = P(x, lam)`` for
    ``x >= 1``, and ``z = Phi^{-1}(1 - p)``. The complementary tail is used
    directly when ``p`` is large, so neither tail loses precision to
    cancellation. Infinite results are clamped to +-38; with
    ``full_output=True`` a boolean array marking clamped entries is
    returned too.
    """
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    x = np.asarray(x)
    if np.any(x < 0):
        raise ValidationError("counts must be non-negative")
    xf = np.asarray(x, dtype=float)
    safe = np.maximum(xf, 1.0)
    p = np.where(xf >= 1, special.gammainc(safe, lam), 1.0)
    one_minus_p = np.where(xf >= 1, special.gammaincc(safe, lam), 0.0)
    with np.errstate(divide="ignore"):
        z = np.where(p < 0.5, -special.ndtri(p), special.ndtri(one_minus_p))
    clamped = ~np.isfinite(z) | (np.abs(z) > Z_CLAMP)
    z = np.clip(np.nan_to_num(z, nan=0.0, posinf=Z_CLAMP, neginf=-Z_CLAMP), -Z_CLAMP, Z_CLAMP)
    if z.ndim == 0:
        z, clamped = float(z), bool(clamped)
    return (z, clamped) if full_output else z


def normal_approximation_gap(lam: float) -> float:
    """Kolmogorov distance between Poisson(lam) and N(lam, lam).

    The Poisson CDF is a step function, so the supremum is attained at a
    jump; both one-sided limits are checked.
    """
    sd = np.sqrt(lam)
    k = np.arange(0, int(np.ceil(lam + 40 * sd)) + 1)
    phi = stats.norm.cdf((k - lam) / sd)
    after = stats.poisson.cdf(k, lam)
    before = stats.poisson.cdf(k - 1, lam)
    return float(max(np.max(np.abs(after - phi)), np.max(np.abs(before - phi))))


# --------------------------------------------------------------------------
# confidence intervals for the relative excess


def delta_confidence_interval(z_sc: float, lam: float, sigma_od: float = 1.0, level: float = 0.95) -> tuple[float, float]:
    """Interval of relative excesses compatible with an observed Z-score.

    Solves ``|delta - z_sc/sqrt(lam)| <= z* sigma_od sqrt((1+delta)/lam)``
    where ``z*`` is the two-sided normal quantile for ``level``. Squaring
    gives a quadratic in ``delta`` whose roots are the endpoints; the value
    at ``delta = -1`` is never negative, so both roots lie on the same side
    of -1.
    """
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    if sigma_od < 1:
        raise ValidationError("sigma_od must be at least 1")
    if not 0 < level < 1:
        raise ValidationError("level must lie in (0, 1)")
    zstar = stats.norm.ppf(0.5 + level / 2)
    a = z_sc / np.sqrt(lam)
    c2 = (zstar * sigma_od) ** 2 / lam
    disc = c2 * (c2 + 4 * (1 + a))
    if disc < 0:
        raise DegenerateInterval("no real solution for delta")
    centre = a + c2 / 2
    half = np.sqrt(disc) / 2
    lo, hi = centre - half, centre + half
    if hi <= -1:
        raise DegenerateInterval("interval lies at or below delta = -1")
    return float(max(lo, -1.0)), float(hi)


def population_interval_coefficients(rate: float = WEEKLY_DEATH_RATE, level: float = 0.95) -> tuple[float, float]:
    """Coefficients (a, b) of ``|delta - a z/sqrt(n)| <= b sqrt((1+delta)/n)``
    when ``lam = rate * n``."""
    zstar = stats.norm.ppf(0.5 + level / 2)
    return float(1 / np.sqrt(rate)), float(zstar / np.sqrt(rate))


@dataclass(frozen=True)
class DemoRow:
    n: int
    delta: float
    mean_z: float
    mean_p: float
    ci_lo: float
    ci_hi: float
    coverage: float


@dataclass(frozen=True)
class DemoReport:
    rows: tuple[DemoRow, ...]
    n_reps: int
    seed: int
    sigma_od: float

    @property
    def z_ratio(self) -> float:
        return self.rows[1].mean_z / self.rows[0].mean_z

    @property
    def p_ratio(self) -> float:
        return self.rows[1].mean_p / self.rows[0].mean_p

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("n", "delta", "mean_z", "mean_p", "ci_lo", "ci_hi", "coverage"))
        for r in self.rows:
            w.writerow((r.n, repr(r.delta), repr(r.mean_z), repr(r.mean_p), repr(r.ci_lo), repr(r.ci_hi), repr(r.coverage)))
        return buf.getvalue()


def interval_coverage(model: PoissonExcessModel, n_reps: int, seed: int, level: float = 0.95, sigma_od: float | None = None) -> float:
    """Fraction of simulated weeks whose interval contains ``model.delta``."""
    sigma = model.sigma_od if sigma_od is None else sigma_od
    x = np.concatenate([model.sample(seed, r, 1) for r in range(n_reps)])
    z = (x - model.lam) / np.sqrt(model.lam)
    return float(np.mean(_covers(z, model.lam, sigma, level, model.delta)))


def _covers(z, lam, sigma_od, level, delta):
    # vectorised form of delta_confidence_interval membership
    zstar = stats.norm.ppf(0.5 + level / 2)
    a = np.asarray(z) / np.sqrt(lam)
    return np.abs(delta - a) <= zstar * sigma_od * np.sqrt((1 + delta) / lam)


def population_dependence_demo(
    delta: float,
    n_small: int,
    n_large: int,
    seed: int,
    n_reps: int = 10_000,
    sigma_od: float = 1.0,
    level: float = 0.95,
) -> DemoReport:
    """Simulate one week of deaths in two populations with equal relative excess.

    Each population has baseline ``lam = 0.00019 * n``. Replicate ``r`` of
    population ``i`` draws from the stream keyed ``(seed, 2 r + i)``.
    """
    if min(n_small, n_large) < 100_000:
        raise ValidationError("populations must be at least 1e5")
    rows = []
    for i, n in enumerate((n_small, n_large)):
        model = PoissonExcessModel(WEEKLY_DEATH_RATE * n, delta, sigma_od)
        x = np.array([model.sample(seed, 2 * r + i, 1)[0] for r in range(n_reps)], dtype=float)
        z = z_score_poisson(x, model.lam)
        p = p_scores(x, np.full_like(x, model.lam))
        mean_z = float(z.mean())
        lo, hi = delta_confidence_interval(mean_z, model.lam, sigma_od, level)
        cov = float(np.mean(_covers(z, model.lam, sigma_od, level, delta)))
        rows.append(DemoRow(int(n), float(delta), mean_z, float(p.mean()), lo, hi, cov))
    return DemoReport(tuple(rows), n_reps, seed, sigma_od)
