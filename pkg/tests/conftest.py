import os
import re
import time
from pathlib import Path

import numpy as np
import pytest

from emt.ingest import Cadence, MortalitySeries, iso_week_monday, iso_weeks_in_year

DATA_DIR = Path(os.environ.get("EMT_DATA", Path(__file__).resolve().parents[1] / "data"))

# (criterion, check name, passed, detail)
ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []

CRITERIA = {
    1: "10% weekly quantiles per million",
    2: "baseline sensitivity of cumulative excess",
    3: "2020 excess per million by age group",
    4: "taut-string extremes and epidemic segmentation",
    5: "overdispersion relative to Poisson",
    6: "harmonic and lag structure of residuals",
    7: "total-variation smoothing",
    8: "data-free properties",
}
SUITE_LIMIT_S = 300.0
_t0 = [0.0]
_seen = pytest.StashKey[int]()


def csv_text(rows, header="date,deaths"):
    return header + "\n" + "\n".join(",".join(str(c) for c in r) for r in rows) + "\n"


def weekly_series(years, weekly_fn, population=83_000_000, country="DE", tail_weeks=None, seed=0):
    """Weekly series covering whole ISO ``years`` plus optional partial next year."""
    rng = np.random.default_rng(seed)
    counts = []
    for y in years:
        for w in range(1, iso_weeks_in_year(y) + 1):
            counts.append(weekly_fn(y, w, rng))
    if tail_weeks:
        y = years[-1] + 1
        for w in range(1, tail_weeks + 1):
            counts.append(weekly_fn(y, w, rng))
    return MortalitySeries(
        counts=np.array(counts, dtype=np.int64),
        start_date=iso_week_monday(years[0], 1),
        cadence=Cadence.WEEKLY,
        population=population,
        country=country,
    )


def seasonal_weekly(y, w, rng):
    flu = 4000 * np.exp(-0.5 * ((w - 9) / 3.0) ** 2) * (1.5 if y == 2018 else 1.0)
    return int(rng.poisson(17000 + 2500 * np.cos(2 * np.pi * (w - 4) / 52) + flu))


def belgian_like(seed=5, n=4017, od=1.2, weekly=6.0):
    """Daily counts with seasonal trend, winter epidemics, heat spikes, weekday
    effect and negative-binomial noise inflating the Poisson SD by ``od``."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    season = 280 + 30 * np.cos(2 * np.pi * (t - 20) / 365.25)
    flu = sum(60 * np.exp(-0.5 * ((t - c) / 20) ** 2) for c in range(30, n, 365))
    heat = sum(40 * np.exp(-0.5 * ((t - c) / 4) ** 2) for c in range(200, n, 730))
    mu = season + flu + heat + weekly * np.sin(2 * np.pi * t / 7)
    r = mu / (od**2 - 1)
    return rng.negative_binomial(r, r / (r + mu)), mu


@pytest.fixture
def german_like():
    return weekly_series([2016, 2017, 2018, 2019], seasonal_weekly, tail_weeks=23, seed=3)


@pytest.fixture(scope="session")
def belgian_synthetic():
    return belgian_like()


def pytest_sessionstart(session):
    _t0[0] = time.perf_counter()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # an acceptance test that errors before reporting still counts as a failure
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "setup":
        item.stash[_seen] = len(ACCEPTANCE_RESULTS)
    m = re.match(r"test_c(\d)", item.name)
    if m and rep.when == "call" and rep.failed and len(ACCEPTANCE_RESULTS) == item.stash.get(_seen, 0):
        err = call.excinfo.typename if call.excinfo else "error"
        ACCEPTANCE_RESULTS.append((int(m.group(1)), item.name, False, f"{err}: {call.excinfo.value if call.excinfo else ''}"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit, title in CRITERIA.items():
        rows = [r for r in ACCEPTANCE_RESULTS if r[0] == crit]
        if not rows:
            tr.write_line(f"NOT RUN  criterion {crit}: {title}")
            continue
        ok = all(r[2] for r in rows)
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {crit}: {title}")
        for _, name, passed, detail in rows:
            tr.write_line(f"      {'ok  ' if passed else 'fail'}  {name}  [{detail}]")
    elapsed = time.perf_counter() - _t0[0]
    tr.write_line(f"{'PASS' if elapsed < SUITE_LIMIT_S else 'FAIL'}  full suite under {SUITE_LIMIT_S:.0f} s  [{elapsed:.1f} s]")
