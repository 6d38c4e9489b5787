"""Taut-string regression with multiresolution local squeezing.

The data ``y_1..y_n`` are integrated to the path ``Y_0 = 0, Y_i = y_1 + ... + y_i``.
A tube of radius ``eps_i`` is placed around each ``Y_i`` (radius zero at both
ends) and a string is pulled taut between the end points. The slopes of the
string form a piecewise constant function; among all functions whose
integral stays in the tube it has the fewest local extremes.

The tube starts wide enough for the string to be a straight line. Residuals
are then tested on dyadic intervals and the radii are halved wherever the
test fails, until every interval passes.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .errors import TooShort, ValidationError

log = logging.getLogger(__name__)

MAD_TO_SIGMA = math.sqrt(2) * 0.6745


@dataclass(frozen=True)
class TautConfig:
    """Settings for :func:`fit_taut_string`.

    ``sigma_mode`` is ``"global_mad"`` (noise level from first differences),
    ``"fixed"`` (use ``sigma_value``) or ``"poisson"`` (local scale
    ``sqrt(level)`` of the current fit, for count data with a strongly
    varying mean).
    """

    tau: float = 2.5
    max_squeeze_rounds: int = 100
    sigma_mode: str = "global_mad"
    sigma_value: float | None = None
    squeeze_factor: float = 0.5

    def __post_init__(self):
        if self.tau <= 0:
            raise ValidationError("tau must be positive")
        if self.max_squeeze_rounds < 1:
            raise ValidationError("max_squeeze_rounds must be at least 1")
        if self.sigma_mode not in ("global_mad", "fixed", "poisson"):
            raise ValidationError(f"unknown sigma_mode {self.sigma_mode!r}")
        if self.sigma_mode == "fixed" and (self.sigma_value is None or self.sigma_value < 0):
            raise ValidationError("sigma_mode 'fixed' needs a non-negative sigma_value")
        if not 0 < self.squeeze_factor < 1:
            raise ValidationError("squeeze_factor must lie in (0, 1)")


@dataclass(frozen=True)
class Extreme:
    kind: str  # "min" or "max"
    left: int
    right: int
    level: float

    @property
    def midpoint(self) -> int:
        return (self.left + self.right) // 2


@dataclass(frozen=True)
class PiecewiseConstantFit:
    levels: np.ndarray
    knot_indices: np.ndarray
    extreme_intervals: tuple[Extreme, ...]
    residuals: np.ndarray
    sigma_hat: float
    tau: float = 2.5
    converged: bool = True
    rounds: int = 0
    radii: np.ndarray | None = field(default=None, repr=False)
    sigma_local: np.ndarray | None = field(default=None, repr=False)

    @property
    def modality(self) -> int:
        return len(self.extreme_intervals)

    @property
    def threshold(self) -> float:
        return math.sqrt(self.tau * math.log(len(self.levels)))


# --------------------------------------------------------------------------
# noise level and multiresolution test


def estimate_sigma(counts) -> float:
    """Noise scale from the median absolute first difference."""
    y = np.asarray(counts, dtype=float)
    if len(y) < 3:
        raise TooShort("need at least 3 values to estimate sigma")
    return float(np.median(np.abs(np.diff(y))) / MAD_TO_SIGMA)


def dyadic_intervals(n: int):
    """Yield ``(starts, length)`` for every dyadic length up to ``n``.

    Intervals of length ``L = 2**k`` start at multiples of ``max(1, L // 2)``.
    """
    length = 1
    while length <= n:
        step = max(1, length // 2)
        yield np.arange(0, n - length + 1, step), length
        length *= 2


def multiresolution_statistics(residuals, sigma=1.0):
    """Normalised interval sums ``|sum r| / sqrt(sum sigma_i**2)`` per dyadic interval.

    Returns ``(starts, lengths, stats)`` as flat arrays.
    """
    r = np.asarray(residuals, dtype=float)
    n = len(r)
    cr = np.concatenate(([0.0], np.cumsum(r)))
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
    cv = np.concatenate(([0.0], np.cumsum(sig**2)))
    starts, lengths, values = [], [], []
    for a, L in dyadic_intervals(n):
        s = np.abs(cr[a + L] - cr[a])
        var = cv[a + L] - cv[a]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(var > 0, s / np.sqrt(np.maximum(var, 0)), np.where(s > 0, np.inf, 0.0))
        starts.append(a)
        lengths.append(np.full(len(a), L))
        values.append(z)
    return np.concatenate(starts), np.concatenate(lengths), np.concatenate(values)


def multiresolution_violations(residuals, sigma, tau: float = 2.5, atol: float = 1e-9) -> list[tuple[int, int]]:
    """Dyadic intervals ``(left, right)`` (inclusive) failing the residual test.

    An interval fails when ``|sum r| / sqrt(|I|) > sigma * sqrt(tau log n)``;
    ``sigma`` may be an array of per-point scales, in which case ``sigma *
    sqrt(|I|)`` becomes ``sqrt(sum sigma_i**2)``.
    """
    r = np.asarray(residuals, dtype=float)
    n = len(r)
    if n == 0:
        return []
    sig = np.asarray(sigma, dtype=float)
    if np.any(sig < 0):
        raise ValidationError("sigma must be non-negative")
    thr = math.sqrt(tau * math.log(max(n, 2)))
    cr = np.concatenate(([0.0], np.cumsum(r)))
    sig_b = np.broadcast_to(sig, (n,))
    cv = np.concatenate(([0.0], np.cumsum(sig_b**2)))
    out = []
    for a, L in dyadic_intervals(n):
        s = np.abs(cr[a + L] - cr[a])
        bound = thr * np.sqrt(np.maximum(cv[a + L] - cv[a], 0.0)) + atol * math.sqrt(L)
        bad = a[s > bound]
        out.extend((int(i), int(i + L - 1)) for i in bad)
    return sorted(out)


# --------------------------------------------------------------------------
# the string itself


@numba.njit(cache=True)
def _taut_path(lower, upper):
    """Vertices of the shortest path from (0, lower[0]) to (n, lower[n])
    with lower[i] <= path(i) <= upper[i] at every integer i.

    Funnel algorithm: the lower chain is concave, the upper chain convex,
    both rooted at the current apex. A new upper point below the first edge
    of the lower chain forces the path over that lower vertex (and vice
    versa), which becomes the new apex.
    """
    n = len(lower) - 1
    px = np.empty(n + 1, np.int64)
    py = np.empty(n + 1, np.float64)
    lox = np.empty(n + 2, np.int64)
    loy = np.empty(n + 2, np.float64)
    hix = np.empty(n + 2, np.int64)
    hiy = np.empty(n + 2, np.float64)
    ax = 0
    ay = lower[0]
    px[0] = ax
    py[0] = ay
    m = 1
    lox[0] = ax
    loy[0] = ay
    lh = 0
    lt = 0
    hix[0] = ax
    hiy[0] = ay
    hh = 0
    ht = 0
    for j in range(1, n + 1):
        # upper point
        v = upper[j]
        moved = False
        while lt > lh and (v - ay) * (lox[lh + 1] - ax) < (loy[lh + 1] - ay) * (j - ax):
            lh += 1
            ax = lox[lh]
            ay = loy[lh]
            px[m] = ax
            py[m] = ay
            m += 1
            moved = True
        if moved:
            hh = 0
            ht = 0
            hix[0] = ax
            hiy[0] = ay
        while ht > hh and (v - hiy[ht - 1]) * (hix[ht] - hix[ht - 1]) <= (hiy[ht] - hiy[ht - 1]) * (j - hix[ht - 1]):
            ht -= 1
        ht += 1
        hix[ht] = j
        hiy[ht] = v
        # lower point
        v = lower[j]
        moved = False
        while ht > hh and (v - ay) * (hix[hh + 1] - ax) > (hiy[hh + 1] - ay) * (j - ax):
            hh += 1
            ax = hix[hh]
            ay = hiy[hh]
            px[m] = ax
            py[m] = ay
            m += 1
            moved = True
        if moved:
            lh = 0
            lt = 0
            lox[0] = ax
            loy[0] = ay
        while lt > lh and (v - loy[lt - 1]) * (lox[lt] - lox[lt - 1]) >= (loy[lt] - loy[lt - 1]) * (j - lox[lt - 1]):
            lt -= 1
        lt += 1
        lox[lt] = j
        loy[lt] = v
    if lt - lh >= ht - hh:
        for k in range(lh + 1, lt + 1):
            px[m] = lox[k]
            py[m] = loy[k]
            m += 1
    else:
        for k in range(hh + 1, ht + 1):
            px[m] = hix[k]
            py[m] = hiy[k]
            m += 1
    return px[:m], py[:m]


def taut_string_levels(y, radii) -> np.ndarray:
    """Derivative of the taut string through the tube ``cumsum(y) +- radii``.

    ``radii`` has length ``n + 1`` (one per knot of the integrated path);
    its end values are ignored and treated as zero.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    Y = np.concatenate(([0.0], np.cumsum(y)))
    eps = np.array(radii, dtype=float)
    eps[0] = eps[-1] = 0.0
    px, py = _taut_path(Y - eps, Y + eps)
    slopes = np.diff(py) / np.diff(px)
    return np.repeat(slopes, np.diff(px)).astype(float)[:n]


# --------------------------------------------------------------------------
# structure of a piecewise constant function


def level_runs(levels, rtol: float = 1e-9) -> list[tuple[int, int, float]]:
    """Maximal runs ``(left, right, level)`` of (numerically) equal levels."""
    f = np.asarray(levels, dtype=float)
    scale = max(1.0, float(np.max(np.abs(f)))) if len(f) else 1.0
    change = np.flatnonzero(np.abs(np.diff(f)) > rtol * scale) + 1
    bounds = np.concatenate(([0], change, [len(f)]))
    return [(int(a), int(b - 1), float(np.mean(f[a:b]))) for a, b in zip(bounds[:-1], bounds[1:])]


def find_extremes(levels, rtol: float = 1e-9) -> tuple[Extreme, ...]:
    """Interior local extremes of a piecewise constant function, in order."""
    runs = level_runs(levels, rtol)
    out = []
    for k in range(1, len(runs) - 1):
        prev, (a, b, v), nxt = runs[k - 1][2], runs[k], runs[k + 1][2]
        if v < prev and v < nxt:
            out.append(Extreme("min", a, b, v))
        elif v > prev and v > nxt:
            out.append(Extreme("max", a, b, v))
    return tuple(out)


def modality(values, rtol: float = 1e-9) -> int:
    """Number of interior local extremes of ``values``."""
    return len(find_extremes(values, rtol))


def _make_fit(y, levels, sigma, tau, converged, rounds, radii, sigma_local=None) -> PiecewiseConstantFit:
    runs = level_runs(levels)
    knots = np.array([a for a, _, _ in runs[1:]], dtype=np.int64)
    return PiecewiseConstantFit(
        levels=levels,
        knot_indices=knots,
        extreme_intervals=find_extremes(levels),
        residuals=y - levels,
        sigma_hat=sigma,
        tau=tau,
        converged=converged,
        rounds=rounds,
        radii=radii,
        sigma_local=sigma_local,
    )


def fit_taut_string(counts, config: TautConfig | None = None) -> PiecewiseConstantFit:
    """Taut-string fit satisfying the multiresolution residual conditions.

    If ``config.max_squeeze_rounds`` is exhausted the last fit is returned
    with ``converged=False``.
    """
    config = config or TautConfig()
    y = np.asarray(counts, dtype=float)
    n = len(y)
    if n < 4:
        raise TooShort("taut string needs at least 4 values")
    if config.sigma_mode == "fixed":
        sigma = float(config.sigma_value)
    else:
        sigma = estimate_sigma(y)
    Y = np.concatenate(([0.0], np.cumsum(y)))
    line = np.arange(n + 1) * (Y[-1] / n)
    radii = np.full(n + 1, float(np.max(np.abs(Y - line))) + 1.0)
    radii[0] = radii[-1] = 0.0
    atol = 1e-9 * max(1.0, float(np.max(np.abs(y))))
    converged = False
    levels = None
    sig_arr = sigma
    rounds = 0
    for rounds in range(1, config.max_squeeze_rounds + 1):
        levels = taut_string_levels(y, radii)
        if config.sigma_mode == "poisson":
            sig_arr = np.sqrt(np.maximum(levels, 1.0))
        bad = multiresolution_violations(y - levels, sig_arr, config.tau, atol=atol)
        if not bad:
            converged = True
            break
        mark = np.zeros(n + 2, dtype=np.int64)
        for a, b in bad:
            mark[a] += 1
            mark[b + 2] -= 1
        hit = np.cumsum(mark)[: n + 1] > 0
        radii[hit] *= config.squeeze_factor
        radii[0] = radii[-1] = 0.0
    if not converged:
        log.warning("taut string: violations remain after %d squeeze rounds", rounds)
    sig_local = sig_arr if config.sigma_mode == "poisson" else None
    return _make_fit(y, levels, sigma, config.tau, converged, rounds, radii.copy(), sig_local)


# --------------------------------------------------------------------------
# isotone refinement


def pava(y, weights=None, increasing: bool = True) -> np.ndarray:
    """Weighted least-squares monotone fit by pooling adjacent violators.

    Violating blocks are merged into their left neighbour first.
    """
    y = np.asarray(y, dtype=float)
    if not increasing:
        return -pava(-y, weights, True)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    means: list[float] = []
    wts: list[float] = []
    sizes: list[int] = []
    for yi, wi in zip(y, w):
        means.append(yi)
        wts.append(wi)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, s2 = means.pop(), wts.pop(), sizes.pop()
            wsum = wts[-1] + w2
            means[-1] = (means[-1] * wts[-1] + m2 * w2) / wsum
            wts[-1] = wsum
            sizes[-1] += s2
    return np.repeat(means, sizes)


def bounded_isotonic(y, lo: float = -np.inf, hi: float = np.inf, increasing: bool = True) -> np.ndarray:
    """Monotone least-squares fit with every value inside ``[lo, hi]``.

    Clipping the unconstrained solution is optimal for box constraints.
    """
    if len(y) == 0:
        return np.asarray(y, dtype=float)
    return np.clip(pava(y, increasing=increasing), lo, hi)


def isotone_refine(fit: PiecewiseConstantFit, counts) -> PiecewiseConstantFit:
    """Replace the string between consecutive extremes by monotone least squares.

    Extreme intervals keep their taut-string levels. Between a minimum and
    the following maximum the fit is the non-decreasing least-squares fit
    bounded by the two extreme levels (non-increasing from a maximum to a
    minimum). The edge pieces are bounded on their extreme side only.
    """
    y = np.asarray(counts, dtype=float)
    n = len(y)
    if n != len(fit.levels):
        raise ValidationError("counts and fit differ in length")
    ext = fit.extreme_intervals
    out = np.array(fit.levels, dtype=float)
    if not ext:
        first, last = out[0], out[-1]
        if first != last:
            out = pava(y, increasing=last > first)
        return replace(fit, levels=out, residuals=y - out, knot_indices=_knots(out))
    for e in ext:
        out[e.left:e.right + 1] = e.level
    # leading piece runs towards the first extreme
    e0 = ext[0]
    if e0.left > 0:
        seg = y[: e0.left]
        if e0.kind == "min":
            out[: e0.left] = bounded_isotonic(seg, lo=e0.level, increasing=False)
        else:
            out[: e0.left] = bounded_isotonic(seg, hi=e0.level, increasing=True)
    for a, b in zip(ext[:-1], ext[1:]):
        s, t = a.right + 1, b.left
        if t > s:
            up = a.kind == "min"
            lo, hi = min(a.level, b.level), max(a.level, b.level)
            out[s:t] = bounded_isotonic(y[s:t], lo, hi, increasing=up)
    e1 = ext[-1]
    if e1.right < n - 1:
        seg = y[e1.right + 1:]
        if e1.kind == "min":
            out[e1.right + 1:] = bounded_isotonic(seg, lo=e1.level, increasing=True)
        else:
            out[e1.right + 1:] = bounded_isotonic(seg, hi=e1.level, increasing=False)
    return replace(fit, levels=out, residuals=y - out, knot_indices=_knots(out))


def _knots(levels) -> np.ndarray:
    return np.array([a for a, _, _ in level_runs(levels)[1:]], dtype=np.int64)


def monotone_segments(fit: PiecewiseConstantFit, n: int | None = None) -> list[tuple[int, int, int]]:
    """Index ranges ``(start, stop, direction)`` on which the fit is monotone.

    Ranges split at extreme midpoints and share their end points;
    ``direction`` is +1 (non-decreasing), -1 or 0 (constant fit).
    """
    n = len(fit.levels) if n is None else n
    ext = fit.extreme_intervals
    if not ext:
        d = np.sign(fit.levels[-1] - fit.levels[0])
        return [(0, n - 1, int(d))]
    cuts = [0] + [e.midpoint for e in ext] + [n - 1]
    dirs = [(-1 if ext[0].kind == "min" else 1)]
    for e in ext:
        dirs.append(1 if e.kind == "min" else -1)
    return [(cuts[k], cuts[k + 1], dirs[k]) for k in range(len(cuts) - 1) if cuts[k + 1] > cuts[k]]


# --------------------------------------------------------------------------
# export


def format_fit_csv(fit: PiecewiseConstantFit, counts) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("index", "count", "level", "residual"))
    for i, (c, f, r) in enumerate(zip(counts, fit.levels, fit.residuals)):
        w.writerow((i, int(c), repr(float(f)), repr(float(r))))
    return buf.getvalue()


def format_extremes_csv(fit: PiecewiseConstantFit) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("kind", "left", "right", "midpoint", "level"))
    for e in fit.extreme_intervals:
        w.writerow((e.kind, e.left, e.right, e.midpoint, repr(float(e.level))))
    return buf.getvalue()
