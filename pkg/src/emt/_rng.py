"""Counter-based random streams.

Every stream is a Philox4x64 generator keyed by ``(seed, replicate)``. The
i-th uniform of a stream is a pure function of the key and ``i``, so results
do not depend on how replicates are scheduled across workers.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

_MASK64 = (1 << 64) - 1


def stream(seed: int, replicate: int = 0) -> np.random.Generator:
    if seed < 0 or replicate < 0:
        raise ValueError("seed and replicate must be non-negative")
    key = ((int(seed) & _MASK64) << 64) | (int(replicate) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def uniforms(seed: int, replicate: int, size: int) -> np.ndarray:
    return stream(seed, replicate).random(size)


def poisson_inverse(u: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Poisson variates by inverting the CDF at uniforms ``u``."""
    mean = np.broadcast_to(np.asarray(mean, dtype=float), np.shape(u))
    out = np.zeros(np.shape(u), dtype=np.int64)
    pos = mean > 0
    if np.any(pos):
        draws = stats.poisson.ppf(u[pos], mean[pos])
        out[pos] = np.maximum(draws, 0).astype(np.int64)
    return out
