"""Load a canonical CSV from ``$EMT_DATA`` or fall back to a synthetic stand-in."""

import os
from datetime import date
from pathlib import Path

import numpy as np

from emt.ingest import Cadence, MortalitySeries, iso_week_monday, iso_weeks_in_year, parse_mortality_csv

DATA_DIR = Path(os.environ.get("EMT_DATA", Path(__file__).resolve().parents[1] / "data"))


def load_or_synthesise(name: str, fallback):
    path = DATA_DIR / name
    if path.exists():
        print(f"using {path}")
        return parse_mortality_csv(path)
    print(f"{path} not found, using a synthetic series")
    return fallback()


def synthetic_weekly(population=83_000_000, seed=0, last_week=24):
    """Four seasonal years 2016-2019 and the first weeks of 2020 with a spring wave."""
    rng = np.random.default_rng(seed)
    scale = population / 83e6
    counts = []
    for y in range(2016, 2021):
        for w in range(1, iso_weeks_in_year(y) + 1):
            if y == 2020 and w > last_week:
                break
            flu = 4000 * np.exp(-0.5 * ((w - 9) / 3.0) ** 2) * (1.6 if y == 2018 else 1.0)
            covid = 3500 * np.exp(-0.5 * ((w - 15) / 2.5) ** 2) if y == 2020 else 0.0
            mu = scale * (17000 + 2500 * np.cos(2 * np.pi * (w - 4) / 52) + flu + covid)
            counts.append(rng.poisson(mu))
    return MortalitySeries(np.array(counts), iso_week_monday(2016, 1), Cadence.WEEKLY, population, "DE")


def synthetic_daily(n=4017, seed=5, od=1.2):
    """Daily counts with winter epidemics, summer heat spikes and overdispersed noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    mu = 280 + 30 * np.cos(2 * np.pi * (t - 20) / 365.25)
    mu += sum(60 * np.exp(-0.5 * ((t - c) / 20) ** 2) for c in range(30, n, 365))
    mu += sum(40 * np.exp(-0.5 * ((t - c) / 4) ** 2) for c in range(200, n, 730))
    mu += 6 * np.sin(2 * np.pi * t / 7)
    r = mu / (od**2 - 1)
    counts = rng.negative_binomial(r, r / (r + mu))
    return MortalitySeries(counts, date(2009, 1, 1), Cadence.DAILY, 11_500_000, "BE")
