"""
Epidemics from a taut string
============================

The taut string gives the piecewise-constant fit with the fewest local
extremes whose residuals look like noise on every dyadic interval. Each
maximum flanked by two minima is read as one epidemic.
"""

# %%
import time
from pathlib import Path

from _data import load_or_synthesise, synthetic_daily

from emt.peaks import epidemic_report, segment_epidemics
from emt.plotting import emit_plot
from emt.tautstring import fit_taut_string, isotone_refine

series = load_or_synthesise("be_all_daily.csv", synthetic_daily)
y = series.counts

t0 = time.perf_counter()
fit = fit_taut_string(y)
print(f"n={len(y)} sigma={fit.sigma_hat:.2f} extremes={len(fit.extreme_intervals)} "
      f"rounds={fit.rounds} ({time.perf_counter() - t0:.2f} s)")

# %%
# Extremes alternate between minima and maxima; here are the first few.
for e in fit.extreme_intervals[:6]:
    print(e.kind, e.midpoint, round(e.level, 1))

# %%
# Epidemics with calendar dates.
print(epidemic_report(segment_epidemics(fit, y), series.start_date))

# %%
# Between extremes, isotonic regression pulls the fit closer to the data
# without changing any extreme.
ref = isotone_refine(fit, y)
print("residual SD, taut string:", round(fit.residuals.std(ddof=1), 2), "refined:", round(ref.residuals.std(ddof=1), 2))

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)
idx = list(range(len(y)))
emit_plot({"deaths": (idx, y), "fit": (idx, ref.levels)}, "line", out / "taut_string.svg",
          title="daily deaths", xlabel="day", ylabel="deaths")
