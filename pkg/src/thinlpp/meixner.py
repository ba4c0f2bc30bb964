"""Exact law of G(N, k) for geometric weights (Meixner ensemble sum).

Weights follow P[X = h] = (1 - q) q^h on {0, 1, ...}.  For N >= k,

    P[G(N, k) <= t] = Z^{-1} sum_{h in N^k, max h_i <= t + k - 1}
                      prod_{i<j} (h_i - h_j)^2 prod_i C(h_i + N - k, h_i) q^{h_i}.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp

from .weights import ConfigurationError

MAX_ROWS = 3
MAX_CUTOFF = 60


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class MeixnerParams:
    N: int
    k: int
    q: float

    def __post_init__(self) -> None:
        if not 0.0 < self.q < 1.0:
            raise DomainError("q must lie in (0, 1)")
        if self.k < 1 or self.N < self.k:
            raise DomainError("need N >= k >= 1")


def _log_terms(params: MeixnerParams, cutoff: int) -> np.ndarray:
    """Log-weights of all h in {0..cutoff}^k with distinct entries (others vanish)."""
    n, k, q = params.N, params.k, params.q
    h = np.arange(cutoff + 1, dtype=float)
    single = gammaln(h + n - k + 1) - gammaln(h + 1) - gammaln(n - k + 1) + h * math.log(q)
    grids = np.meshgrid(*([h] * k), indexing="ij")
    total = sum(single[g.astype(int)] for g in grids)
    for i, j in itertools.combinations(range(k), 2):
        with np.errstate(divide="ignore"):
            total = total + 2.0 * np.log(np.abs(grids[i] - grids[j]))
    return total


@lru_cache(maxsize=64)
def log_partition(params: MeixnerParams, tol: float = 1e-14) -> float:
    """log Z by extending the cutoff until the relative increment drops below ``tol``."""
    cutoff = 16
    prev = -math.inf
    while True:
        cur = float(logsumexp(_log_terms(params, cutoff)))
        if prev > -math.inf and cur - prev < tol:
            return cur
        prev = cur
        cutoff = int(cutoff * 1.5) + 8
        if cutoff > 5000:
            raise ConfigurationError("normalising sum did not settle")


def exact_cdf(params: MeixnerParams, t: int) -> float:
    """P[G(N, k) <= t], by direct summation (k <= 3, t + k - 1 <= 60)."""
    if params.k > MAX_ROWS or t + params.k - 1 > MAX_CUTOFF:
        raise ConfigurationError("Meixner sum is limited to k <= 3 and t + k - 1 <= 60")
    if t < 0:
        return 0.0
    cutoff = t + params.k - 1
    terms = _log_terms(params, cutoff)
    value = math.exp(float(logsumexp(terms)) - log_partition(params))
    return min(1.0, value)


def negative_binomial_cdf(n: int, q: float, t: int) -> float:
    """CDF of a sum of ``n`` geometric weights (the k = 1 case), by convolution."""
    pmf = np.array([(1 - q) * q**h for h in range(t + 1)])
    out = np.zeros(t + 1)
    out[0] = 1.0
    for _ in range(n):
        out = np.convolve(out, pmf)[: t + 1]
    return float(out.sum())


def omega(gamma: float, q: float) -> float:
    """Limit of E[G([gamma N], N)] / N: (1 + sqrt(gamma q))^2 / (1 - q) - 1."""
    if gamma < 1 or not 0 < q < 1:
        raise DomainError("need gamma >= 1 and q in (0, 1)")
    return (1.0 + math.sqrt(gamma * q)) ** 2 / (1.0 - q) - 1.0


def sigma(gamma: float, q: float) -> float:
    """Fluctuation scale of G([gamma N], N) on the N^(1/3) scale."""
    if gamma < 1 or not 0 < q < 1:
        raise DomainError("need gamma >= 1 and q in (0, 1)")
    return (
        q ** (1 / 6)
        * gamma ** (-1 / 6)
        / (1 - q)
        * (math.sqrt(gamma) + math.sqrt(q)) ** (2 / 3)
        * (1 + math.sqrt(gamma * q)) ** (2 / 3)
    )
