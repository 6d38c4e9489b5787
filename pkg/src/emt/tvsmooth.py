"""Smooth alternatives to the taut string by linear programming.

The smooth fit minimises the total variation of its first (``order=1``,
piecewise linear result) or second (``order=2``, piecewise quadratic)
discrete derivative. It must pass the same dyadic residual test as the
taut string it starts from, and be monotone wherever the string is.

The LP is solved with HiGHS through :func:`scipy.optimize.linprog`. Interval
sums are expressed through cumulative-sum variables so each residual
constraint has two non-zeros.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import Infeasible, SolverLimit, TooShort, ValidationError
from .tautstring import PiecewiseConstantFit, dyadic_intervals, monotone_segments


def discrete_derivative(values, order: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if len(v) <= order:
        raise TooShort(f"need more than {order} values")
    return np.diff(v, n=order)


def difference_matrix(n: int, order: int) -> sparse.csr_matrix:
    """Sparse ``(n - order) x n`` matrix of ``order``-fold forward differences."""
    d = sparse.identity(n, format="csr")
    for _ in range(order):
        d = d[1:] - d[:-1]
    return d.tocsr()


@dataclass(frozen=True)
class SmoothConfig:
    feasibility_tol: float = 1e-8
    optimality_tol: float = 1e-6
    method: str = "highs"
    time_limit: float | None = None


@dataclass(frozen=True)
class SmoothFit:
    values: np.ndarray
    order: int
    objective: float
    residuals: np.ndarray
    max_mr: float
    threshold: float
    max_monotone_violation: float
    solver_meta: dict = field(default_factory=dict)
    seconds: float = 0.0

    def meta_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.solver_meta.items())


def _bounds(fit: PiecewiseConstantFit, n: int) -> tuple[np.ndarray, float]:
    thr = math.sqrt(fit.tau * math.log(max(n, 2)))
    sig = fit.sigma_local if fit.sigma_local is not None else np.full(n, fit.sigma_hat)
    return np.asarray(sig, dtype=float), thr


def residual_check(y, values, fit: PiecewiseConstantFit) -> tuple[float, float]:
    """Largest excess of an interval sum over its bound, and the largest
    normalised statistic ``|sum r| / sqrt(sum sigma^2)``."""
    r = np.asarray(y, dtype=float) - np.asarray(values, dtype=float)
    n = len(r)
    sig, thr = _bounds(fit, n)
    cr = np.concatenate(([0.0], np.cumsum(r)))
    cv = np.concatenate(([0.0], np.cumsum(sig**2)))
    worst_gap, worst_stat = -np.inf, 0.0
    for a, L in dyadic_intervals(n):
        s = np.abs(cr[a + L] - cr[a])
        sd = np.sqrt(cv[a + L] - cv[a])
        worst_gap = max(worst_gap, float(np.max(s - thr * sd)))
        with np.errstate(divide="ignore", invalid="ignore"):
            stat = np.where(sd > 0, s / sd, np.where(s > 0, np.inf, 0.0))
        worst_stat = max(worst_stat, float(np.max(stat)))
    return worst_gap, worst_stat


def monotone_violation(values, fit: PiecewiseConstantFit) -> float:
    f = np.asarray(values, dtype=float)
    worst = 0.0
    for s, e, d in monotone_segments(fit, len(f)):
        if d == 0 or e <= s:
            continue
        worst = max(worst, float(np.max(-d * np.diff(f[s:e + 1]))))
    return worst


def tv_smooth(counts, fit: PiecewiseConstantFit, order: int = 1, config: SmoothConfig | None = None) -> SmoothFit:
    """Minimise the total variation of the ``order``-th derivative.

    Variables are the fitted values ``f`` (n), their running sums ``F``
    (n + 1, ``F_0 = 0``) and slacks ``t`` bounding ``|D^(order+1) f|``.
    """
    config = config or SmoothConfig()
    if order not in (1, 2):
        raise ValidationError("order must be 1 or 2")
    y = np.asarray(counts, dtype=float)
    n = len(y)
    if n != len(fit.levels):
        raise ValidationError("counts and fit differ in length")
    if n <= order + 1:
        raise TooShort(f"need more than {order + 1} values")
    sig, thr = _bounds(fit, n)
    D = difference_matrix(n, order + 1)
    m = D.shape[0]
    nv = n + (n + 1) + m
    iF = n  # offset of F
    it = 2 * n + 1  # offset of t

    # |D f| <= t
    Dt = sparse.hstack([D, sparse.csr_matrix((m, n + 1)), -sparse.identity(m)])
    Dt2 = sparse.hstack([-D, sparse.csr_matrix((m, n + 1)), -sparse.identity(m)])
    ub_blocks = [Dt, Dt2]
    ub_rhs = [np.zeros(m), np.zeros(m)]

    # residual sums over dyadic intervals: |(Y_b - Y_a) - (F_b - F_a)| <= thr * sd
    Y = np.concatenate(([0.0], np.cumsum(y)))
    cv = np.concatenate(([0.0], np.cumsum(sig**2)))
    starts, ends = [], []
    for a, L in dyadic_intervals(n):
        starts.append(a)
        ends.append(a + L)
    a = np.concatenate(starts)
    b = np.concatenate(ends)
    k = len(a)
    rows = np.repeat(np.arange(k), 2)
    cols = np.column_stack((iF + b, iF + a)).ravel()
    vals = np.tile([1.0, -1.0], k)
    S = sparse.csr_matrix((vals, (rows, cols)), shape=(k, nv))
    bound = thr * np.sqrt(cv[b] - cv[a])
    target = Y[b] - Y[a]
    ub_blocks += [S, -S]
    ub_rhs += [target + bound, bound - target]

    # monotonicity on the string's monotone stretches: -d (f_{i+1} - f_i) <= 0
    mrows, mcols, mvals = [], [], []
    r = 0
    for s, e, d in monotone_segments(fit, n):
        if d == 0:
            continue
        for i in range(s, e):
            mrows += [r, r]
            mcols += [i + 1, i]
            mvals += [-d, d]
            r += 1
    if r:
        ub_blocks.append(sparse.csr_matrix((mvals, (mrows, mcols)), shape=(r, nv)))
        ub_rhs.append(np.zeros(r))

    A_ub = sparse.vstack(ub_blocks).tocsr()
    b_ub = np.concatenate(ub_rhs)

    # F_0 = 0, F_{i+1} - F_i - f_i = 0
    eq_rows = [0]
    eq_cols = [iF]
    eq_vals = [1.0]
    idx = np.arange(n)
    eq_rows += list(np.repeat(idx + 1, 3))
    eq_cols += list(np.column_stack((iF + idx + 1, iF + idx, idx)).ravel())
    eq_vals += [1.0, -1.0, -1.0] * n
    A_eq = sparse.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(n + 1, nv))
    b_eq = np.zeros(n + 1)

    c = np.zeros(nv)
    c[it:] = 1.0
    bounds = [(None, None)] * (2 * n + 1) + [(0, None)] * m
    options = {
        "primal_feasibility_tolerance": config.feasibility_tol,
        "dual_feasibility_tolerance": config.feasibility_tol,
    }
    if config.method in ("highs", "highs-ipm"):
        options["ipm_optimality_tolerance"] = config.optimality_tol
    if config.time_limit is not None:
        options["time_limit"] = config.time_limit
    t0 = time.perf_counter()
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method=config.method, options=options)
    elapsed = time.perf_counter() - t0
    if res.status == 2:
        raise Infeasible("smoothing LP infeasible; residual bounds do not match the fit")
    if res.status in (1, 3, 4) or not res.success:
        raise SolverLimit(f"LP solver stopped: {res.message}")
    f = res.x[:n]
    gap, stat = residual_check(y, f, fit)
    meta = {
        "solver": f"scipy.optimize.linprog/{config.method}",
        "status": res.status,
        "iterations": int(getattr(res, "nit", -1)),
        "feasibility_tol": config.feasibility_tol,
        "optimality_tol": config.optimality_tol,
        "variables": nv,
        "inequalities": A_ub.shape[0],
        "equalities": A_eq.shape[0],
        "max_bound_excess": gap,
    }
    return SmoothFit(
        values=f,
        order=order,
        objective=float(np.abs(D @ f).sum()),
        residuals=y - f,
        max_mr=stat,
        threshold=thr,
        max_monotone_violation=monotone_violation(f, fit),
        solver_meta=meta,
        seconds=elapsed,
    )


def format_smooth_csv(smooth: SmoothFit, counts) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("index", "count", "smooth_value", "residual"))
    for i, (cnt, v, r) in enumerate(zip(counts, smooth.values, smooth.residuals)):
        w.writerow((i, int(cnt), repr(float(v)), repr(float(r))))
    return buf.getvalue()
