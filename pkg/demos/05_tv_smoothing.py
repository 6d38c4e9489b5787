"""
Smooth fits with the same shape
===============================

The taut string is a step function. Minimising the total variation of the
first or second derivative, subject to the same multiresolution bounds and
the same monotone pieces, gives a piecewise linear or piecewise quadratic
fit with the same extremes.
"""

# %%
from pathlib import Path

from _data import load_or_synthesise, synthetic_daily

from emt.plotting import emit_plot
from emt.tautstring import fit_taut_string, modality
from emt.tvsmooth import tv_smooth

series = load_or_synthesise("be_all_daily.csv", lambda: synthetic_daily(n=1000))
y = series.counts
fit = fit_taut_string(y)

fits = {}
for order in (1, 2):
    sm = tv_smooth(y, fit, order)
    fits[order] = sm
    print(f"order {order}: objective {sm.objective:.1f}, residual SD {sm.residuals.std(ddof=1):.2f}, "
          f"max MR {sm.max_mr:.3f} <= {sm.threshold:.3f}, {sm.seconds:.1f} s")

# %%
# Same number of local extremes as the step function.
print("modality:", fit.modality, [modality(fits[k].values.round(6), rtol=1e-7) for k in (1, 2)])

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)
idx = list(range(len(y)))
emit_plot({"deaths": (idx, y), "order 1": (idx, fits[1].values), "order 2": (idx, fits[2].values)},
          "line", out / "tv_smooth.svg", xlabel="day", ylabel="deaths")
