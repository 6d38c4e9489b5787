"""Excess mortality baselines, P-scores and Z-scores, and taut-string epidemic segmentation."""

from .baselines import (
    Baseline,
    exclude_years,
    historical_baseline,
    per_year_quantiles,
    quantile_baseline,
)
from .diagnostics import (
    gaussian_stepwise_select,
    harmonic_candidates,
    lag_candidates,
    overdispersion_ratio,
    simulate_poisson_from_fit,
)
from .ingest import (
    MortalitySeries,
    WeeklyPanel,
    aggregate_daily_to_weekly,
    parse_mortality_csv,
    to_rate_per_million,
    to_weekly_panel,
)
from .peaks import Epidemic, epidemic_report, extreme_midpoints, segment_epidemics
from .scores import (
    cumulative_excess,
    delta_confidence_interval,
    excess_series,
    p_score_series,
    shifted_cumulative_excess,
    z_score_gaussian,
    z_score_poisson,
    z_score_poisson_exact,
)
from .tautstring import TautConfig, fit_taut_string, isotone_refine
from .tvsmooth import tv_smooth

__version__ = "0.1.0"

__all__ = [
    "Baseline",
    "exclude_years",
    "historical_baseline",
    "per_year_quantiles",
    "quantile_baseline",
    "gaussian_stepwise_select",
    "harmonic_candidates",
    "lag_candidates",
    "overdispersion_ratio",
    "simulate_poisson_from_fit",
    "MortalitySeries",
    "WeeklyPanel",
    "aggregate_daily_to_weekly",
    "parse_mortality_csv",
    "to_rate_per_million",
    "to_weekly_panel",
    "Epidemic",
    "epidemic_report",
    "extreme_midpoints",
    "segment_epidemics",
    "cumulative_excess",
    "delta_confidence_interval",
    "excess_series",
    "p_score_series",
    "shifted_cumulative_excess",
    "z_score_gaussian",
    "z_score_poisson",
    "z_score_poisson_exact",
    "TautConfig",
    "fit_taut_string",
    "isotone_refine",
    "tv_smooth",
]
