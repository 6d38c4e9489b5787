"""Historical-mean and low-quantile baselines.

A historical baseline is the per-week mean over a set of past years. A
quantile baseline is one constant level: the median over years of each
year's lower empirical q-quantile of weekly deaths.
"""

from __future__ import annotations

import io
import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import AllYearsExcluded, UnknownYear, ValidationError
from .ingest import Cadence, MortalitySeries, WeeklyPanel


class Method(str, Enum):
    HISTORICAL = "historical_mean"
    QUANTILE = "quantile"


@dataclass(frozen=True)
class Baseline:
    """Expected deaths per ISO week.

    ``values[w - 1]`` is the level for ISO week ``w``. Quantile baselines
    always carry 53 identical entries so they align with any year.
    """

    method: Method
    values: np.ndarray
    years_used: tuple[int, ...]
    q: float | None = None
    excluded_years: tuple[int, ...] = ()
    panel: WeeklyPanel | None = field(default=None, repr=False, compare=False)

    @property
    def weeks(self) -> np.ndarray:
        return np.arange(1, len(self.values) + 1)

    def level(self, week: int) -> float:
        return float(self.values[week - 1])

    @property
    def population(self) -> int | None:
        return None if self.panel is None else self.panel.population

    def per_million(self) -> np.ndarray:
        if not self.population:
            raise ValidationError("baseline has no population")
        return self.values * 1e6 / self.population


def _check_years(panel: WeeklyPanel, years: Iterable[int]) -> list[int]:
    years = sorted(int(y) for y in years)
    if not years:
        raise AllYearsExcluded("no years selected")
    missing = [y for y in years if y not in panel.years]
    if missing:
        raise UnknownYear(f"years {missing} not in panel {panel.years}")
    return years


def historical_baseline(panel: WeeklyPanel, years: Iterable[int]) -> Baseline:
    """Per-week mean over ``years``; week 53 averages only 53-week years."""
    years = _check_years(panel, years)
    rows = [np.asarray(panel.row(y), dtype=float) for y in years]
    base = np.mean([r[:52] for r in rows], axis=0)
    long_rows = [r[52] for r in rows if len(r) == 53]
    if long_rows:
        base = np.append(base, np.mean(long_rows))
    return Baseline(Method.HISTORICAL, base, tuple(years), panel=panel)


def lower_quantile(values, q: float) -> float:
    """The ceil(q*m)-th smallest of ``m`` values (1-based), no interpolation.

    ``q = 0`` returns the minimum.
    """
    v = np.sort(np.asarray(values, dtype=float))
    m = len(v)
    if m == 0:
        raise ValidationError("quantile of empty sample")
    # guard against q*m landing a hair above an integer
    k = math.ceil(q * m - 1e-9)
    return float(v[min(max(k, 1), m) - 1])


def per_year_quantiles(panel: WeeklyPanel, q: float) -> dict[int, float]:
    if not 0 <= q < 1:
        raise ValidationError(f"q must lie in [0, 1), got {q}")
    return {y: lower_quantile(panel.row(y), q) for y in panel.years}


def quantile_baseline(panel: WeeklyPanel, years: Iterable[int], q: float) -> Baseline:
    years = _check_years(panel, years)
    qs = per_year_quantiles(panel, q)
    level = float(np.median([qs[y] for y in years]))
    return Baseline(Method.QUANTILE, np.full(53, level), tuple(years), q=q, panel=panel)


def exclude_years(baseline: Baseline, years_to_drop: Iterable[int]) -> Baseline:
    """Recompute ``baseline`` on its year set minus ``years_to_drop``."""
    drop = sorted(int(y) for y in years_to_drop)
    if baseline.panel is None:
        raise ValidationError("baseline carries no panel to recompute from")
    unknown = [y for y in drop if y not in baseline.panel.years]
    if unknown:
        raise UnknownYear(f"years {unknown} not in panel")
    keep = [y for y in baseline.years_used if y not in drop]
    if not keep:
        raise AllYearsExcluded("every baseline year was excluded")
    if baseline.method is Method.HISTORICAL:
        new = historical_baseline(baseline.panel, keep)
    else:
        new = quantile_baseline(baseline.panel, keep, baseline.q)
    excluded = tuple(sorted(set(baseline.excluded_years) | (set(drop) & set(baseline.years_used))))
    return Baseline(new.method, new.values, new.years_used, new.q, excluded, baseline.panel)


def daily_quantile_weekly_rate(series: MortalitySeries, q: float = 0.10, population: int | None = None) -> float:
    """Weekly deaths per million implied by the q-quantile of daily deaths.

    The daily quantile is multiplied by seven and divided by the population
    in millions.
    """
    if series.cadence is not Cadence.DAILY:
        raise ValidationError("expected a daily series")
    pop = population or series.population
    if not pop:
        raise ValidationError("population required")
    return lower_quantile(series.counts, q) * 7 * 1e6 / pop


def format_baseline_csv(baseline: Baseline) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("week", "level", "method", "q", "years", "excluded"))
    q = "" if baseline.q is None else repr(float(baseline.q))
    years = " ".join(str(y) for y in baseline.years_used)
    excl = " ".join(str(y) for y in baseline.excluded_years)
    for wk, level in zip(baseline.weeks, baseline.values):
        w.writerow((int(wk), repr(float(level)), baseline.method.value, q, years, excl))
    return buf.getvalue()


def parse_baseline_csv(text: str, panel: WeeklyPanel | None = None) -> Baseline:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValidationError("empty baseline file")
    first = rows[0]
    return Baseline(
        method=Method(first["method"]),
        values=np.array([float(r["level"]) for r in rows]),
        years_used=tuple(int(y) for y in first["years"].split()),
        q=float(first["q"]) if first["q"] else None,
        excluded_years=tuple(int(y) for y in first["excluded"].split()),
        panel=panel,
    )
