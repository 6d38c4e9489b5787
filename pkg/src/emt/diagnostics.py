"""Residual diagnostics: overdispersion and leftover periodic or lag structure."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _rng
from .errors import DegenerateDesign, LagTooLarge, NegativeLevel, ValidationError
from .tautstring import PiecewiseConstantFit


def _levels(fit) -> np.ndarray:
    levels = np.asarray(fit.levels if isinstance(fit, PiecewiseConstantFit) else fit, dtype=float)
    if np.any(levels < -1e-9):
        raise NegativeLevel("Poisson means must be non-negative")
    return np.maximum(levels, 0.0)


def simulate_poisson_from_fit(fit, seed: int, replicate: int = 0) -> np.ndarray:
    """Independent Poisson counts with the fitted levels as means.

    Count ``i`` depends only on ``(seed, replicate, i)``: it inverts the
    Poisson CDF at the i-th uniform of the Philox stream for that key.
    """
    mean = _levels(fit)
    u = _rng.uniforms(seed, replicate, len(mean))
    return _rng.poisson_inverse(u, mean)


@dataclass(frozen=True)
class DispersionReport:
    sd_residuals: float
    sd_poisson: float
    n_sims: int
    seed: int

    @property
    def overdispersion_pct(self) -> float:
        return 100.0 * (self.sd_residuals / self.sd_poisson - 1.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("sd_resid", "sd_poisson", "overdispersion_pct", "n_sims", "seed"))
        w.writerow((repr(self.sd_residuals), repr(self.sd_poisson), repr(self.overdispersion_pct), self.n_sims, self.seed))
        return buf.getvalue()


def overdispersion_ratio(counts, fit, n_sims: int = 100, seed: int = 0) -> DispersionReport:
    """Compare residual spread with that of Poisson data generated from the fit.

    Standard deviations use ``ddof=1``; the Poisson figure is the mean over
    ``n_sims`` simulated series.
    """
    if n_sims < 1:
        raise ValidationError("n_sims must be at least 1")
    y = np.asarray(counts, dtype=float)
    mean = _levels(fit)
    if len(y) != len(mean):
        raise ValidationError("counts and fit differ in length")
    sd_res = float(np.std(y - mean, ddof=1))
    sds = [np.std(simulate_poisson_from_fit(mean, seed, r) - mean, ddof=1) for r in range(n_sims)]
    sd_poi = float(np.mean(sds))
    if sd_poi <= 0:
        raise ValidationError("fit gives a degenerate Poisson model (all means zero)")
    return DispersionReport(sd_res, sd_poi, n_sims, seed)


# --------------------------------------------------------------------------
# candidate covariates


@dataclass(frozen=True)
class CandidateSet:
    """Candidate covariates as columns of ``matrix`` (centred, unit norm).

    ``scale`` is the period in samples for harmonics and the lag for lag
    candidates. Lag sets carry the response aligned on their common support.
    """

    names: tuple[str, ...]
    scale: np.ndarray
    matrix: np.ndarray
    response: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.names)


def _normalise(m: np.ndarray) -> np.ndarray:
    m = m - m.mean(axis=0)
    norms = np.linalg.norm(m, axis=0)
    if np.any(norms < 1e-12):
        raise DegenerateDesign("constant candidate covariate")
    return m / norms


def harmonic_candidates(n: int) -> CandidateSet:
    """``sin(pi j t / n)`` and ``cos(pi j t / n)`` for ``t = 1..n``, ``j = 1..n//2``."""
    if n < 4:
        raise ValidationError("need n >= 4")
    t = np.arange(1, n + 1)
    js = np.arange(1, n // 2 + 1)
    arg = np.pi * np.outer(t, js) / n
    matrix = _normalise(np.hstack((np.sin(arg), np.cos(arg))))
    names = tuple(f"sin {j}" for j in js) + tuple(f"cos {j}" for j in js)
    period = 2.0 * n / js
    return CandidateSet(names, np.concatenate((period, period)), matrix)


def lag_candidates(residuals, max_lag: int) -> CandidateSet:
    """Lagged copies of ``residuals`` for lags ``1..max_lag``."""
    r = np.asarray(residuals, dtype=float)
    n = len(r)
    if max_lag < 1 or max_lag >= n / 2:
        raise LagTooLarge(f"max_lag must lie in [1, n/2), got {max_lag} for n={n}")
    cols = np.column_stack([r[max_lag - lag:n - lag] for lag in range(1, max_lag + 1)])
    return CandidateSet(
        names=tuple(f"lag {lag}" for lag in range(1, max_lag + 1)),
        scale=np.arange(1, max_lag + 1, dtype=float),
        matrix=_normalise(cols),
        response=r[max_lag:],
    )


# --------------------------------------------------------------------------
# stepwise selection


@dataclass(frozen=True)
class Selected:
    name: str
    scale: float
    p_value: float
    coefficient: float


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple[Selected, ...]
    cutoff: float
    steps: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("step", "covariate", "period_or_lag", "p_value", "coefficient"))
        for i, s in enumerate(self.selected, start=1):
            w.writerow((i, s.name, repr(s.scale), repr(s.p_value), repr(s.coefficient)))
        return buf.getvalue()


def gaussian_stepwise_select(response, candidates: CandidateSet, cutoff: float = 0.01, max_steps: int | None = None) -> SelectionResult:
    """Greedy forward selection with Gaussian-covariate P-values.

    With ``k`` covariates already in the model, a candidate whose squared
    correlation with the current residual is ``r2`` gets the P-value
    ``min(1, q * P(B >= r2))``, ``B ~ Beta(1/2, (n - k - 1)/2)``, where ``q``
    counts the remaining candidates: the chance that the best of ``q``
    independent Gaussian covariates would do as well. The best candidate
    enters if its P-value is at most ``cutoff``; the residual and the
    remaining candidates are then projected off it.
    """
    y = np.asarray(response, dtype=float)
    n = len(y)
    if len(candidates) == 0:
        raise ValidationError("no candidates")
    if candidates.matrix.shape[0] != n:
        raise ValidationError("response and candidates differ in length")
    C = np.array(candidates.matrix, dtype=float)
    if np.any(np.linalg.norm(C, axis=0) < 1e-12):
        raise DegenerateDesign("zero candidate column")
    e = y - y.mean()
    active = np.ones(C.shape[1], dtype=bool)
    chosen: list[Selected] = []
    k = 0
    limit = max_steps if max_steps is not None else C.shape[1]
    while k < limit and n - k - 1 > 2:
        norms2 = np.einsum("ij,ij->j", C, C)
        active &= norms2 > 1e-10
        if not active.any():
            break
        ee = float(e @ e)
        if ee <= 0:
            break
        idx = np.flatnonzero(active)
        proj = e @ C[:, idx]
        r2 = np.clip(proj**2 / (norms2[idx] * ee), 0.0, 1.0)
        tail = special.betaincc(0.5, (n - k - 1) / 2.0, r2)
        p = np.minimum(1.0, len(idx) * tail)
        best = int(np.argmin(p))
        if p[best] > cutoff:
            break
        j = idx[best]
        u = C[:, j] / np.sqrt(norms2[j])
        coef = float(proj[best] / norms2[j])
        e = e - (u @ e) * u
        C -= np.outer(u, u @ C)
        active[j] = False
        chosen.append(Selected(candidates.names[j], float(candidates.scale[j]), float(p[best]), coef))
        k += 1
    return SelectionResult(tuple(chosen), cutoff, k)
