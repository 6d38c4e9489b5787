"""
Baselines and cumulative excess
===============================

How much does the answer to "how many excess deaths?" depend on the
baseline? We compare the mean of previous years with the median of yearly
10% quantiles, then perturb the mean by dropping a year and by moving the
analysis window one week either way.
"""

# %%
from _data import load_or_synthesise, synthetic_weekly

from emt.baselines import exclude_years, historical_baseline, per_year_quantiles, quantile_baseline
from emt.ingest import to_weekly_panel
from emt.scores import cumulative_excess, excess_series, shifted_cumulative_excess

series = load_or_synthesise("de_all_weekly.csv", synthetic_weekly)
years = [2016, 2017, 2018, 2019]
panel = to_weekly_panel(series, years)

# %%
# The yearly 10% quantiles, per million. Their median is the quantile baseline,
# constant over the year.
q = per_year_quantiles(panel, 0.10)
for y in years:
    print(y, round(q[y] * 1e6 / series.population, 1))
qb = quantile_baseline(panel, years, 0.10)
print("quantile baseline per million:", round(qb.level(1) * 1e6 / series.population, 1))

# %%
# Excess in weeks 1-10 and 11-23 of 2020 against both baselines.
hb = historical_baseline(panel, years)
for label, b in (("quantile", qb), ("historical", hb)):
    ex = excess_series(series, b, 2020)
    print(label, [round(cumulative_excess(ex, w, per_million=True)) for w in ((1, 10), (11, 23))])

# %%
# A strong influenza season in the reference years lowers the excess. Dropping
# 2018 or sliding the window by a week changes the count substantially.
print("mean baseline, weeks 11-23 :", round(cumulative_excess(excess_series(series, hb, 2020), (11, 23))))
print("without 2018               :", round(cumulative_excess(excess_series(series, exclude_years(hb, [2018]), 2020), (11, 23))))
for shift in (-1, 1):
    print(f"window shifted {shift:+d}         :", round(shifted_cumulative_excess(series, hb, (11, 23), shift, 2020)))
