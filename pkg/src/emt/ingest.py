"""Reading, validating and reshaping mortality time series.

The canonical on-disk format is a UTF-8 CSV with the header
``date,deaths,population,country,age_group``. Dates are ISO-8601 calendar
dates, deaths are plain non-negative integers. Daily files step by one day,
weekly files by seven days with every date on the Monday of its ISO week.

Bad rows are rejected, never repaired. Row numbers in errors are physical
line numbers of the file (the header is line 1).
"""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, replace
from datetime import date, timedelta
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Mapping

import numpy as np
from dateutil.easter import easter

from .errors import (
    EmptyInput,
    GapInDates,
    MissingColumn,
    NegativeCount,
    NonMonotoneDates,
    NotDaily,
    PartialYear,
    ValidationError,
)

log = logging.getLogger(__name__)

CANONICAL_COLUMNS = ("date", "deaths", "population", "country", "age_group")
REQUIRED_COLUMNS = ("date", "deaths")


class AgeGroup(str, Enum):
    ALL = "0+"
    OVER65 = "65+"
    UNDER65 = "64-"


class Cadence(str, Enum):
    DAILY = "daily"
    WEEKLY = "weekly"

    @property
    def step(self) -> int:
        return 1 if self is Cadence.DAILY else 7


def iso_weeks_in_year(year: int) -> int:
    """Number of ISO-8601 weeks (52 or 53) in ``year``."""
    return date(year, 12, 28).isocalendar()[1]


def iso_week_monday(year: int, week: int) -> date:
    return date.fromisocalendar(year, week, 1)


@dataclass(frozen=True)
class MortalitySeries:
    """Death counts at a uniform daily or weekly cadence.

    ``population`` may be ``None`` when the source carries no population
    column; per-million conversions then fail. ``trimmed`` records how many
    leading and trailing days were dropped by daily-to-weekly aggregation.
    """

    counts: np.ndarray
    start_date: date
    cadence: Cadence = Cadence.DAILY
    population: int | None = None
    country: str = ""
    age_group: AgeGroup = AgeGroup.ALL
    trimmed: tuple[int, int] = (0, 0)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size == 0:
            raise EmptyInput("series needs at least one count")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.equal(np.mod(counts, 1), 0)):
                raise ValidationError("counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise NegativeCount(f"negative count at position {int(np.argmax(counts < 0))}")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "cadence", Cadence(self.cadence))
        object.__setattr__(self, "age_group", AgeGroup(self.age_group))
        if self.population is not None and self.population <= 0:
            raise ValidationError("population must be positive")
        if self.cadence is Cadence.WEEKLY and self.start_date.weekday() != 0:
            raise ValidationError("weekly series must start on a Monday (ISO week start)")

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def values(self) -> np.ndarray:
        return self.counts

    @property
    def dates(self) -> list[date]:
        step = timedelta(days=self.cadence.step)
        return [self.start_date + i * step for i in range(len(self))]

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=self.cadence.step * (len(self) - 1))

    def iso_weeks(self) -> tuple[np.ndarray, np.ndarray]:
        """ISO (year, week) of every entry."""
        cal = [d.isocalendar() for d in self.dates]
        return np.array([c[0] for c in cal]), np.array([c[1] for c in cal])


@dataclass(frozen=True)
class RateSeries:
    """Deaths per million of population per period."""

    values: np.ndarray
    start_date: date
    cadence: Cadence
    population: int
    country: str = ""
    age_group: AgeGroup = AgeGroup.ALL

    def __len__(self) -> int:
        return len(self.values)

    @property
    def dates(self) -> list[date]:
        step = timedelta(days=self.cadence.step)
        return [self.start_date + i * step for i in range(len(self))]

    def iso_weeks(self) -> tuple[np.ndarray, np.ndarray]:
        cal = [d.isocalendar() for d in self.dates]
        return np.array([c[0] for c in cal]), np.array([c[1] for c in cal])


@dataclass(frozen=True)
class WeeklyPanel:
    """Weekly values arranged by ISO year; ``matrix[i]`` belongs to ``years[i]``."""

    years: list[int]
    matrix: list[np.ndarray]
    population: int | None = None
    country: str = ""
    age_group: AgeGroup = AgeGroup.ALL

    def __post_init__(self):
        if len(self.years) != len(self.matrix):
            raise ValidationError("years and matrix rows differ in number")
        for y, row in zip(self.years, self.matrix):
            if len(row) not in (52, 53):
                raise ValidationError(f"year {y} has {len(row)} weeks")
            if np.any(np.asarray(row) < 0):
                raise NegativeCount(f"negative entry in year {y}")

    def row(self, year: int) -> np.ndarray:
        return self.matrix[self.years.index(year)]

    def scaled(self, factor: float) -> "WeeklyPanel":
        return replace(self, matrix=[np.asarray(r, dtype=float) * factor for r in self.matrix])

    def per_million(self) -> "WeeklyPanel":
        if not self.population:
            raise ValidationError("panel has no population")
        return self.scaled(1e6 / self.population)


# --------------------------------------------------------------------------
# CSV I/O


def _open_text(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", newline=""), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline=""), False
    if isinstance(source, io.TextIOBase):
        return source, False
    # binary stream
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def _parse_int(text: str, what: str, row: int) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f"{what} {text!r} is not a plain integer", row=row) from None


def parse_mortality_csv(
    source,
    mapping: Mapping[str, str] | None = None,
    *,
    country: str | None = None,
    age_group: str | None = None,
    population: int | None = None,
    cadence: Cadence | str | None = None,
) -> MortalitySeries:
    """Parse a mortality CSV into a validated :class:`MortalitySeries`.

    Parameters
    ----------
    source : path, bytes, or text/binary stream
        UTF-8 CSV with a header row.
    mapping : dict, optional
        Maps canonical column names (``date``, ``deaths``, ``population``,
        ``country``, ``age_group``) to the names used in the file.
    country, age_group, population : optional
        Used when the file has no such column. File values take precedence.
    cadence : optional
        Only consulted for single-row files, where it cannot be inferred.
    """
    mapping = dict(mapping or {})
    handle, owned = _open_text(source)
    try:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyInput("no header row") from None
        if header and header[0].startswith("﻿"):
            header[0] = header[0][1:]
        cols = {}
        for name in CANONICAL_COLUMNS:
            actual = mapping.get(name, name)
            if actual in header:
                cols[name] = header.index(actual)
            elif name in REQUIRED_COLUMNS:
                raise MissingColumn(f"column {actual!r} not found in header", row=1)

        dates: list[date] = []
        counts: list[int] = []
        pops: set[int] = set()
        countries: set[str] = set()
        ages: set[str] = set()
        step = None
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) < len(header):
                raise ValidationError(f"expected {len(header)} fields, got {len(rec)}", row=lineno)
            try:
                d = date.fromisoformat(rec[cols["date"]].strip())
            except ValueError:
                raise ValidationError(f"bad date {rec[cols['date']]!r}", row=lineno) from None
            n = _parse_int(rec[cols["deaths"]], "deaths", lineno)
            if n < 0:
                raise NegativeCount(f"negative deaths {n}", row=lineno)
            if dates:
                delta = (d - dates[-1]).days
                if delta <= 0:
                    raise NonMonotoneDates(f"date {d} does not follow {dates[-1]}", row=lineno)
                if step is None:
                    if delta not in (1, 7):
                        raise GapInDates(f"step of {delta} days is neither daily nor weekly", row=lineno)
                    step = delta
                elif delta != step:
                    raise GapInDates(f"step of {delta} days, expected {step}", row=lineno)
            dates.append(d)
            counts.append(n)
            if "population" in cols and rec[cols["population"]].strip():
                pops.add(_parse_int(rec[cols["population"]], "population", lineno))
            if "country" in cols:
                countries.add(rec[cols["country"]].strip())
            if "age_group" in cols:
                ages.add(rec[cols["age_group"]].strip())
    finally:
        if owned:
            handle.close()

    if not counts:
        raise EmptyInput("no data rows")
    for label, values in (("population", pops), ("country", countries), ("age_group", ages)):
        if len(values) > 1:
            raise ValidationError(f"{label} must be constant within a file, found {sorted(values)}")

    if step is None:
        cad = Cadence(cadence) if cadence is not None else Cadence.DAILY
    else:
        cad = Cadence.DAILY if step == 1 else Cadence.WEEKLY
    if cad is Cadence.WEEKLY and dates[0].weekday() != 0:
        raise ValidationError("weekly dates must be Mondays (ISO week start)", row=2)
    return MortalitySeries(
        counts=np.array(counts, dtype=np.int64),
        start_date=dates[0],
        cadence=cad,
        population=pops.pop() if pops else population,
        country=countries.pop() if countries else (country or ""),
        age_group=AgeGroup(ages.pop() if ages and "" not in ages else (age_group or "0+")),
    )


def format_mortality_csv(series: MortalitySeries) -> str:
    """Canonical CSV text for ``series``; re-parses to an equal series."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CANONICAL_COLUMNS)
    pop = "" if series.population is None else str(series.population)
    for d, n in zip(series.dates, series.counts):
        w.writerow((d.isoformat(), int(n), pop, series.country, series.age_group.value))
    return buf.getvalue()


def write_mortality_csv(series: MortalitySeries, path: str | os.PathLike) -> None:
    atomic_write_text(path, format_mortality_csv(series))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary sibling file and rename it into place."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# transformations


def to_rate_per_million(series: MortalitySeries) -> RateSeries:
    if not series.population:
        raise ValidationError("series has no population; cannot convert to per-million rates")
    return RateSeries(
        values=series.counts * 1e6 / series.population,
        start_date=series.start_date,
        cadence=series.cadence,
        population=series.population,
        country=series.country,
        age_group=series.age_group,
    )


def aggregate_daily_to_weekly(series: MortalitySeries) -> MortalitySeries:
    """Sum daily counts over ISO weeks (Monday to Sunday).

    Partial weeks at either edge are dropped, never padded; the number of
    dropped days is kept in ``trimmed``.
    """
    if series.cadence is not Cadence.DAILY:
        raise NotDaily("aggregation needs a daily series")
    lead = (7 - series.start_date.weekday()) % 7
    usable = len(series) - lead
    trail = usable % 7 if usable > 0 else 0
    if usable < 7:
        raise EmptyInput("series does not contain a complete ISO week")
    if lead or trail:
        log.info("trimmed %d leading and %d trailing days of partial weeks", lead, trail)
    days = series.counts[lead:len(series) - trail]
    weekly = days.reshape(-1, 7).sum(axis=1)
    return replace(
        series,
        counts=weekly,
        start_date=series.start_date + timedelta(days=lead),
        cadence=Cadence.WEEKLY,
        trimmed=(lead, trail),
    )


def to_weekly_panel(series: MortalitySeries | RateSeries, years: Iterable[int] | None = None) -> WeeklyPanel:
    """Arrange a weekly series into one row per ISO year.

    Without ``years`` the series must cover whole ISO years exactly. With
    ``years``, only those years are extracted and each must be complete;
    other entries (e.g. a partial current year) are ignored.
    """
    if series.cadence is not Cadence.WEEKLY:
        raise ValidationError("panel needs a weekly series")
    iso_year, iso_week = series.iso_weeks()
    values = np.asarray(series.values)
    if years is None:
        if iso_week[0] != 1:
            raise PartialYear(f"series starts in week {iso_week[0]} of {iso_year[0]}")
        last = iso_year[-1]
        if iso_week[-1] != iso_weeks_in_year(int(last)):
            raise PartialYear(f"series ends in week {iso_week[-1]} of {last}")
        years = sorted(set(int(y) for y in iso_year))
    else:
        years = [int(y) for y in years]
    rows = []
    for y in years:
        mask = iso_year == y
        m = iso_weeks_in_year(y)
        if mask.sum() != m:
            raise PartialYear(f"year {y} has {int(mask.sum())} of {m} weeks")
        rows.append(values[mask])
    return WeeklyPanel(
        years=years,
        matrix=rows,
        population=series.population,
        country=series.country,
        age_group=series.age_group,
    )


def year_weeks(series: MortalitySeries, year: int) -> tuple[np.ndarray, np.ndarray]:
    """(ISO week numbers, counts) of the entries falling in ISO ``year``."""
    iso_year, iso_week = series.iso_weeks()
    mask = iso_year == year
    return iso_week[mask], series.counts[mask]


def slice_dates(series: MortalitySeries, start: date, end: date) -> MortalitySeries:
    """Entries with ``start <= date <= end``."""
    step = series.cadence.step
    i0 = max(0, -(-(start - series.start_date).days // step))
    i1 = min(len(series) - 1, (end - series.start_date).days // step)
    if i1 < i0:
        raise EmptyInput(f"no entries between {start} and {end}")
    return replace(
        series,
        counts=series.counts[i0:i1 + 1],
        start_date=series.start_date + timedelta(days=i0 * step),
    )


# --------------------------------------------------------------------------
# reporting artefacts of the source data


def _last_monday(year: int, month: int) -> date:
    d = date(year, month + 1, 1) - timedelta(days=1) if month < 12 else date(year, 12, 31)
    return d - timedelta(days=d.weekday())


def _first_monday(year: int, month: int) -> date:
    d = date(year, month, 1)
    return d + timedelta(days=(7 - d.weekday()) % 7)


def _holidays_ew(year: int) -> list[date]:
    e = easter(year)
    return [
        date(year, 1, 1),
        e - timedelta(days=2),
        e + timedelta(days=1),
        _first_monday(year, 5),
        _last_monday(year, 5),
        _last_monday(year, 8),
        date(year, 12, 25),
        date(year, 12, 26),
    ]


# Countries whose weekly registrations show holiday dips.
HOLIDAY_RULES = {"EW": _holidays_ew}


def holiday_weeks(country: str, year: int) -> set[int]:
    """ISO weeks of ``year`` containing a registration-office holiday.

    Only flags; counts are never corrected. Unknown countries have no
    flagged weeks.
    """
    rule = HOLIDAY_RULES.get(country.upper())
    if rule is None:
        return set()
    return {d.isocalendar()[1] for d in rule(year) if d.isocalendar()[0] == year}


def flag_holiday_weeks(series: MortalitySeries) -> np.ndarray:
    if series.cadence is not Cadence.WEEKLY:
        raise ValidationError("holiday flags apply to weekly series")
    iso_year, iso_week = series.iso_weeks()
    cache: dict[int, set[int]] = {}
    flags = np.zeros(len(series), dtype=bool)
    for i, (y, w) in enumerate(zip(iso_year, iso_week)):
        if y not in cache:
            cache[y] = holiday_weeks(series.country, int(y))
        flags[i] = w in cache[y]
    return flags
