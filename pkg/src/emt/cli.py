"""Batch command-line driver.

    emt <subcommand> --input PATH [--country CODE] [--age 0+|65+|64-]
        [--method hist|quantile] [--q FLOAT] [--years YYYY-YYYY]
        [--exclude YYYY[,YYYY]] [--weeks A:B] [--shift INT] [--tau FLOAT]
        [--nsim INT] [--seed INT] [--order 1|2] [--out DIR] [--plot]

Outputs go to ``--out`` (default ``$EMT_OUT``, else ``./emt-out``) under
fixed file names. ``$EMT_CONFIG`` may name a ``key=value`` file supplying
defaults for any flag; command-line flags win.

Exit codes: 0 success, 1 invalid input or flags, 2 computation failure.
Failures print one JSON line to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import timedelta
from pathlib import Path

import numpy as np

from . import baselines as bl
from . import diagnostics as dg
from . import ingest
from . import peaks as pk
from . import scores as sc
from . import tautstring as ts
from . import tvsmooth as tv
from .errors import ComputationError, EMTError, ValidationError
from .plotting import emit_plot

SUBCOMMANDS = (
    "ingest", "baseline", "excess", "pscore", "zscore", "peaks",
    "dispersion", "select", "smooth", "compare-zp", "report",
)
STOCHASTIC = {"dispersion", "compare-zp", "report"}
DEFAULTS = dict(method="hist", q=0.10, shift=0, tau=2.5, nsim=100, order=1, plot=False)
MAX_LAG = 500


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="emt", description="Excess mortality baselines, scores and epidemic segmentation.")
    p.add_argument("command", choices=SUBCOMMANDS, metavar="subcommand", help=", ".join(SUBCOMMANDS))
    p.add_argument("--input")
    p.add_argument("--country")
    p.add_argument("--age", choices=[a.value for a in ingest.AgeGroup])
    p.add_argument("--method", choices=["hist", "quantile"])
    p.add_argument("--q", type=float)
    p.add_argument("--years")
    p.add_argument("--exclude")
    p.add_argument("--weeks")
    p.add_argument("--shift", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--nsim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--order", type=int, choices=[1, 2])
    p.add_argument("--out")
    p.add_argument("--plot", action="store_true", default=None)
    return p


def read_config(path) -> dict:
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        cfg[k.replace("-", "_")] = v
    return cfg


_CASTS = dict(q=float, shift=int, tau=float, nsim=int, seed=int, order=int,
              plot=lambda v: v.lower() in ("1", "true", "yes", "on"))


def resolve(args: argparse.Namespace, env=os.environ) -> argparse.Namespace:
    """Merge flags, config file and defaults, then validate."""
    cfg = read_config(env["EMT_CONFIG"]) if env.get("EMT_CONFIG") else {}
    known = set(vars(args)) - {"command"}
    unknown = set(cfg) - known
    if unknown:
        raise UsageError(f"unknown config keys {sorted(unknown)}")
    for k in known:
        if getattr(args, k) is None:
            if k in cfg:
                setattr(args, k, _CASTS.get(k, str)(cfg[k]))
            elif k in DEFAULTS:
                setattr(args, k, DEFAULTS[k])
    if args.out is None:
        args.out = env.get("EMT_OUT", "emt-out")
    if args.input is None and args.command != "compare-zp":
        raise UsageError("--input is required")
    if args.command in STOCHASTIC and args.seed is None:
        raise UsageError(f"{args.command} needs --seed")
    if args.method not in ("hist", "quantile"):
        raise UsageError("--method must be hist or quantile")
    if not 0 < args.q < 1:
        raise UsageError("--q must lie in (0, 1)")
    if args.tau <= 0:
        raise UsageError("--tau must be positive")
    if args.nsim < 1:
        raise UsageError("--nsim must be positive")
    if args.order not in (1, 2):
        raise UsageError("--order must be 1 or 2")
    args.years = _parse_years(args.years) if args.years else None
    args.exclude = _parse_exclude(args.exclude) if args.exclude else []
    args.weeks = _parse_weeks(args.weeks) if args.weeks else None
    return args


def _parse_years(text: str) -> list[int]:
    try:
        if "-" in text:
            a, b = (int(t) for t in text.split("-"))
            if b < a:
                raise ValueError
            return list(range(a, b + 1))
        return [int(text)]
    except ValueError:
        raise UsageError(f"--years expects YYYY-YYYY, got {text!r}") from None


def _parse_exclude(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--exclude expects YYYY[,YYYY], got {text!r}") from None


def _parse_weeks(text: str) -> tuple[int, int]:
    try:
        a, b = (int(t) for t in text.split(":"))
    except ValueError:
        raise UsageError(f"--weeks expects A:B, got {text!r}") from None
    if not 1 <= a <= b <= 53:
        raise UsageError(f"--weeks range {text!r} outside 1..53")
    return a, b


# --------------------------------------------------------------------------
# shared steps


class Run:
    def __init__(self, args, stdout):
        self.args = args
        self.stdout = stdout
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.written: list[str] = []

    def say(self, **items):
        self.stdout.write(" ".join(f"{k}={_show(v)}" for k, v in items.items()) + "\n")

    def write(self, name: str, text: str):
        ingest.atomic_write_text(self.out / name, text)
        self.written.append(name)

    def plot(self, name: str, table, kind="line", **labels):
        if self.args.plot:
            emit_plot(table, kind, self.out / name, **labels)
            self.written.append(name)

    # data
    def series(self) -> ingest.MortalitySeries:
        a = self.args
        s = ingest.parse_mortality_csv(a.input, country=a.country, age_group=a.age)
        if a.country and s.country.upper() != a.country.upper():
            raise ValidationError(f"input is for {s.country}, not {a.country}")
        if a.age and s.age_group.value != a.age:
            raise ValidationError(f"input is age group {s.age_group.value}, not {a.age}")
        return s

    def weekly(self) -> ingest.MortalitySeries:
        s = self.series()
        return ingest.aggregate_daily_to_weekly(s) if s.cadence is ingest.Cadence.DAILY else s

    def daily(self) -> ingest.MortalitySeries:
        s = self.series()
        if s.cadence is not ingest.Cadence.DAILY:
            raise ValidationError(f"{self.args.command} needs daily data")
        return s

    def baseline(self, weekly: ingest.MortalitySeries) -> tuple[bl.Baseline, int]:
        iso_year, iso_week = weekly.iso_weeks()
        target = int(iso_year[-1])
        years = self.args.years
        if years is None:
            years = sorted({int(y) for y in iso_year if y < target})
        panel = ingest.to_weekly_panel(weekly, years)
        if self.args.method == "hist":
            base = bl.historical_baseline(panel, years)
        else:
            base = bl.quantile_baseline(panel, years, self.args.q)
        if self.args.exclude:
            base = bl.exclude_years(base, self.args.exclude)
        return base, target

    def fit(self, counts) -> ts.PiecewiseConstantFit:
        return ts.fit_taut_string(counts, ts.TautConfig(tau=self.args.tau))


def _show(v):
    if isinstance(v, float):
        return f"{v:.6g}" if abs(v) < 1e6 else f"{v:.1f}"
    return v


def _excess(run: Run):
    weekly = run.weekly()
    base, target = run.baseline(weekly)
    weeks_present, _ = ingest.year_weeks(weekly, target)
    if len(weeks_present) == 0:
        raise ValidationError(f"no data for target year {target}")
    # the target year may run past the baseline's last week
    keep = weeks_present <= len(base.values)
    first, last = int(weeks_present[keep].min()), int(weeks_present[keep].max())
    if not keep.all():
        cut = ingest.iso_week_monday(target, last) + timedelta(days=6)
        weekly = ingest.slice_dates(weekly, weekly.start_date, cut)
    ex = sc.excess_series(weekly, base, target)
    weeks = run.args.weeks or (first, last)
    return weekly, base, target, ex, weeks


def cmd_ingest(run: Run):
    s = run.series()
    run.write("series.csv", ingest.format_mortality_csv(s))
    run.say(rows=len(s), cadence=s.cadence.value, start=s.start_date.isoformat(), end=s.end_date.isoformat(),
            total=int(s.counts.sum()))
    run.plot("series.svg", {s.country or "series": (np.arange(len(s)), s.counts)}, "line",
             title="deaths", xlabel="period", ylabel="deaths")


def cmd_baseline(run: Run):
    weekly = run.weekly()
    base, _ = run.baseline(weekly)
    run.write("baseline.csv", bl.format_baseline_csv(base))
    info = dict(method=base.method.value, years=f"{base.years_used[0]}-{base.years_used[-1]}",
                excluded=",".join(map(str, base.excluded_years)) or "none")
    if base.method is bl.Method.QUANTILE:
        info.update(q=base.q, level=float(base.values[0]))
        if weekly.population:
            info["level_per_million"] = float(base.values[0]) * 1e6 / weekly.population
            qs = bl.per_year_quantiles(base.panel, base.q)
            for y in base.years_used:
                info[f"q{y}_per_million"] = qs[y] * 1e6 / weekly.population
    else:
        info.update(mean_level=float(np.mean(base.values)))
    run.say(**info)
    run.plot("baseline.svg", {weekly.country or "baseline": (base.weeks, base.values)}, "line",
             title="baseline", xlabel="ISO week", ylabel="deaths per week")


def cmd_excess(run: Run, name="excess"):
    weekly, base, target, ex, weeks = _excess(run)
    run.write(f"{name}.csv", sc.format_scores_csv(ex))
    if run.args.shift:
        total = sc.shifted_cumulative_excess(weekly, base, weeks, run.args.shift, target)
    else:
        total = sc.cumulative_excess(ex, weeks)
    info = dict(year=target, weeks=f"{weeks[0] + run.args.shift}:{weeks[1] + run.args.shift}",
                baseline=base.method.value, cumulative_excess=total)
    if weekly.population:
        info["per_million"] = total * 1e6 / weekly.population
    run.say(**info)
    label = weekly.country or "series"
    if name == "excess":
        run.plot("excess.svg", {label: (ex.weeks, ex.values)}, "points",
                 title=f"weekly excess deaths {target}", xlabel="ISO week", ylabel="deaths")
    else:
        run.plot("pscore.svg", {label: (ex.weeks, ex.values / ex.baseline)}, "points",
                 title=f"P-scores {target}", xlabel="ISO week", ylabel="P-score")


def cmd_pscore(run: Run):
    cmd_excess(run, name="pscore")


def cmd_zscore(run: Run):
    _, base, target, ex, _ = _excess(run)
    lines = ["week,deaths,baseline,z_approx,z_exact,delta_lo,delta_hi"]
    for w, d, b in zip(ex.weeks, ex.deaths, ex.baseline):
        za = float(sc.z_score_poisson(d, b))
        zx = sc.z_score_poisson_exact(int(d), float(b))
        lo, hi = sc.delta_confidence_interval(za, float(b))
        lines.append(f"{int(w)},{int(d)},{b!r},{za!r},{zx!r},{lo!r},{hi!r}")
    run.write("zscore.csv", "\n".join(lines) + "\n")
    run.say(year=target, weeks=len(ex), max_z_exact=max(float(sc.z_score_poisson_exact(int(d), float(b)))
                                                      for d, b in zip(ex.deaths, ex.baseline)))


def cmd_peaks(run: Run, series=None, fit=None):
    s = series or run.daily()
    fit = fit or run.fit(s.counts)
    eps = pk.segment_epidemics(fit, s.counts)
    run.write("fit.csv", ts.format_fit_csv(fit, s.counts))
    run.write("extremes.csv", ts.format_extremes_csv(fit))
    run.write("epidemics.csv", pk.epidemic_report(eps, s.start_date, s.cadence.step))
    run.say(n=len(s), sigma=fit.sigma_hat, extremes=fit.modality, epidemics=len(eps),
            converged=fit.converged, rounds=fit.rounds)
    x = np.arange(len(s))
    run.plot("fit.svg", {"data": (x, s.counts), "taut string": (x, fit.levels)}, "line",
             title="taut string", xlabel="day", ylabel="deaths")
    run.plot("residuals.svg", {"residuals": (x, fit.residuals)}, "line", title="residuals", xlabel="day")


def _refined(run: Run, s):
    fit = run.fit(s.counts)
    return fit, ts.isotone_refine(fit, s.counts)


def cmd_dispersion(run: Run, series=None, refined=None):
    s = series or run.daily()
    ref = refined or _refined(run, s)[1]
    rep = dg.overdispersion_ratio(s.counts, ref, run.args.nsim, run.args.seed)
    run.write("dispersion.csv", rep.to_csv())
    run.say(sd_resid=rep.sd_residuals, sd_poisson=rep.sd_poisson, overdispersion_pct=rep.overdispersion_pct)
    if run.args.plot:
        x = np.arange(len(s))
        sim = dg.simulate_poisson_from_fit(ref, run.args.seed)
        run.plot("poisson.svg", {"Poisson reconstruction": (x, sim)}, "line", title="Poisson process from fit")


def cmd_select(run: Run, series=None, refined=None):
    s = series or run.daily()
    ref = refined or _refined(run, s)[1]
    r = ref.residuals
    harm = dg.gaussian_stepwise_select(r, dg.harmonic_candidates(len(r)), 0.01)
    max_lag = min(MAX_LAG, (len(r) - 1) // 2)
    lc = dg.lag_candidates(r, max_lag)
    lags = dg.gaussian_stepwise_select(lc.response, lc, 0.01)
    run.write("selection_harmonic.csv", harm.to_csv())
    run.write("selection_lag.csv", lags.to_csv())
    run.say(harmonics=len(harm.selected), lags=len(lags.selected),
            best_harmonic=harm.selected[0].name if harm.selected else "none",
            best_lag=lags.selected[0].name if lags.selected else "none")


def cmd_smooth(run: Run, series=None, fit=None):
    s = series or run.daily()
    fit = fit or run.fit(s.counts)
    sm = tv.tv_smooth(s.counts, fit, run.args.order)
    k = run.args.order
    run.write(f"smooth_order{k}.csv", tv.format_smooth_csv(sm, s.counts))
    run.write(f"smooth_order{k}_meta.txt", sm.meta_text())
    run.say(order=k, objective=sm.objective, sd_resid=float(np.std(sm.residuals, ddof=1)),
            max_mr=sm.max_mr, threshold=sm.threshold)
    x = np.arange(len(s))
    run.plot(f"smooth_order{k}.svg", {"data": (x, s.counts), f"order {k}": (x, sm.values)}, "line",
             title=f"total variation of derivative {k}", xlabel="day")


def cmd_compare_zp(run: Run):
    rep = sc.population_dependence_demo(0.2, 1_000_000, 100_000_000, run.args.seed, n_reps=run.args.nsim)
    run.write("compare_zp.csv", rep.to_csv())
    run.say(z_ratio=rep.z_ratio, p_ratio=rep.p_ratio)
    if run.args.plot:
        run.plot("compare_zp.svg", {
            "mean Z": ([r.n for r in rep.rows], [r.mean_z for r in rep.rows]),
            "mean P": ([r.n for r in rep.rows], [r.mean_p for r in rep.rows]),
        }, "points", title="Z-scores and P-scores for equal relative excess", xlabel="population")


def cmd_report(run: Run):
    s = run.series()
    if s.cadence is ingest.Cadence.DAILY:
        fit, ref = _refined(run, s)
        cmd_peaks(run, s, fit)
        cmd_dispersion(run, s, ref)
        cmd_select(run, s, ref)
        cmd_smooth(run, s, fit)
    else:
        cmd_baseline(run)
        cmd_excess(run)
        cmd_pscore(run)
        cmd_zscore(run)


COMMANDS = {
    "ingest": cmd_ingest, "baseline": cmd_baseline, "excess": cmd_excess,
    "pscore": cmd_pscore, "zscore": cmd_zscore, "peaks": cmd_peaks,
    "dispersion": cmd_dispersion, "select": cmd_select, "smooth": cmd_smooth,
    "compare-zp": cmd_compare_zp, "report": cmd_report,
}


def _fail(stderr, code: int, exc: BaseException) -> int:
    stderr.write(json.dumps({"exit": code, "error": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def run(argv=None, stdout=None, stderr=None, env=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    env = os.environ if env is None else env
    parser = build_parser()
    try:
        args = resolve(parser.parse_args(argv), env)
        job = Run(args, stdout)
        COMMANDS[args.command](job)
    except UsageError as exc:
        stderr.write(parser.format_usage())
        return _fail(stderr, 1, exc)
    except (ValidationError, FileNotFoundError) as exc:
        return _fail(stderr, 1, exc)
    except (ComputationError, EMTError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(stderr, 2, exc)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
