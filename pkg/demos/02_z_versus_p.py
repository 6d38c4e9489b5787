"""
Z-scores grow with population size, P-scores do not
====================================================

Two populations experience the same 20% excess in one week. The Z-score of
the large one is ten times that of the small one, while the P-score is the
same. The delta-method interval for the relative excess still covers the
truth at the nominal rate.
"""

# %%
import numpy as np

from emt.scores import (
    PoissonExcessModel,
    delta_confidence_interval,
    interval_coverage,
    normal_approximation_gap,
    population_dependence_demo,
    z_score_poisson,
    z_score_poisson_exact,
)

rep = population_dependence_demo(0.2, 1_000_000, 100_000_000, seed=1, n_reps=10_000)
print(rep.to_csv())
print(f"Z ratio {rep.z_ratio:.2f}, P ratio {rep.p_ratio:.3f}")

# %%
# The interval for a week with z = 4 in a population with baseline 350 deaths.
lo, hi = delta_confidence_interval(4.0, 350)
print(f"relative excess in [{lo:.3f}, {hi:.3f}]")
print("coverage:", interval_coverage(PoissonExcessModel(400, 0.2), 20_000, seed=2))

# %%
# Exact Poisson Z-scores versus the normal approximation.
x = np.arange(310, 391, 10)
print(np.column_stack((x, z_score_poisson(x, 350).round(3), z_score_poisson_exact(x, 350).round(3))))
print("largest gap for |z| <= 2:", round(normal_approximation_gap(350), 4))
