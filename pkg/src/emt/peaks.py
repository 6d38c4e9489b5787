"""Epidemics as peaks of a taut-string fit.

An epidemic is a local maximum flanked by two local minima. It starts at
the right end of the preceding minimum interval, ends at the left end of
the following one and peaks at the midpoint of the maximum interval.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from .errors import ValidationError
from .tautstring import PiecewiseConstantFit


@dataclass(frozen=True)
class Epidemic:
    start_index: int
    peak_index: int
    end_index: int
    start_level: float
    peak_level: float
    end_level: float
    total_deaths: int

    @property
    def duration(self) -> int:
        return self.end_index - self.start_index


def extreme_midpoints(fit: PiecewiseConstantFit) -> list[tuple[str, int]]:
    return [(e.kind, e.midpoint) for e in fit.extreme_intervals]


def segment_epidemics(fit: PiecewiseConstantFit, counts) -> list[Epidemic]:
    """One :class:`Epidemic` per maximum with a minimum on either side.

    Start and end levels are the fitted values at the start and end
    indices, i.e. the levels of the flanking minima.
    """
    counts = np.asarray(counts)
    if len(counts) != len(fit.levels):
        raise ValidationError("counts and fit differ in length")
    ext = fit.extreme_intervals
    csum = np.concatenate(([0], np.cumsum(counts)))
    out = []
    for k in range(1, len(ext) - 1):
        lo, peak, hi = ext[k - 1], ext[k], ext[k + 1]
        if peak.kind != "max" or lo.kind != "min" or hi.kind != "min":
            continue
        s, e = lo.right, hi.left
        out.append(
            Epidemic(
                start_index=s,
                peak_index=peak.midpoint,
                end_index=e,
                start_level=float(fit.levels[s]),
                peak_level=float(peak.level),
                end_level=float(fit.levels[e]),
                total_deaths=int(csum[e + 1] - csum[s]),
            )
        )
    return out


EPIDEMIC_COLUMNS = (
    "start_date", "peak_date", "end_date", "start_level", "peak_level",
    "end_level", "duration_days", "total_deaths",
)


def index_to_date(index: int, anchor: date, step_days: int = 1) -> date:
    return anchor + timedelta(days=int(index) * step_days)


def epidemic_report(epidemics: list[Epidemic], anchor: date, step_days: int = 1) -> str:
    """CSV table of epidemics with indices converted to calendar dates.

    ``duration_days`` is the index difference times ``step_days``.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EPIDEMIC_COLUMNS)
    for ep in epidemics:
        w.writerow((
            index_to_date(ep.start_index, anchor, step_days).isoformat(),
            index_to_date(ep.peak_index, anchor, step_days).isoformat(),
            index_to_date(ep.end_index, anchor, step_days).isoformat(),
            repr(ep.start_level),
            repr(ep.peak_level),
            repr(ep.end_level),
            ep.duration * step_days,
            ep.total_deaths,
        ))
    return buf.getvalue()
