"""
What is left in the residuals
=============================

Residuals of the refined fit are compared with Poisson noise simulated from
the fit, then searched for periodic and autoregressive structure by greedy
selection with Gaussian-covariate P-values.
"""

# %%
from _data import load_or_synthesise, synthetic_daily

from emt.diagnostics import gaussian_stepwise_select, harmonic_candidates, lag_candidates, overdispersion_ratio
from emt.tautstring import fit_taut_string, isotone_refine

series = load_or_synthesise("be_all_daily.csv", synthetic_daily)
y = series.counts
ref = isotone_refine(fit_taut_string(y), y)

rep = overdispersion_ratio(y, ref, n_sims=100, seed=3)
print(f"SD residuals {rep.sd_residuals:.2f}, Poisson {rep.sd_poisson:.2f}, overdispersion {rep.overdispersion_pct:.1f}%")

# %%
# Harmonics: a weekday effect shows up near period 7, a leftover annual cycle near 365.
res = gaussian_stepwise_select(ref.residuals, harmonic_candidates(len(y)), 0.01)
for s in res.selected:
    print(f"{s.name:10s} period {s.scale:8.2f}  p {s.p_value:.2g}")

# %%
# Lags of the residuals themselves.
c = lag_candidates(ref.residuals, 500)
for s in gaussian_stepwise_select(c.response, c, 0.01).selected:
    print(f"{s.name:10s} p {s.p_value:.2g}")
