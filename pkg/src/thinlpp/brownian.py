"""Brownian last-passage time L(N, k) and the GUE largest eigenvalue.

L(N, k) is realised two ways: by the grid recurrence on discretised Brownian
paths, and through the identity in law between L(1, k) and the largest
eigenvalue of a k x k GUE matrix with density proportional to
``exp(-tr H^2 / 2)`` (diagonal entries N(0, 1), E|H_ij|^2 = 1), so that
``lambda_max / sqrt(k) -> 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import ndimage, stats

from . import _kernels
from .lattice import _run_blocks
from .weights import ConfigurationError, SeedPath, as_generator

KS_C_ALPHA_1PCT = math.sqrt(-0.5 * math.log(0.01 / 2))  # 1.6276


@dataclass
class BrownianGrid:
    """``k`` independent Brownian paths on ``[0, horizon]`` at step ``delta``.

    ``increments[r, m]`` is ``B^(r)_{(m+1) delta} - B^(r)_{m delta}``.
    """

    horizon: float
    delta: float
    increments: np.ndarray

    @property
    def k(self) -> int:
        return self.increments.shape[0]

    @property
    def steps(self) -> int:
        return self.increments.shape[1]

    def paths(self) -> np.ndarray:
        """Path values at the grid points, ``B_0 = 0`` included: shape ``(k, steps + 1)``."""
        out = np.zeros((self.k, self.steps + 1))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out

    def row_modulus(self, window: float) -> np.ndarray:
        return np.array([modulus_statistic(p, self.delta, window) for p in self.paths()])


def grid_steps(horizon: float, delta: float) -> int:
    m = int(round(horizon / delta))
    if m < 1 or abs(m * delta - horizon) > 1e-9 * max(1.0, horizon):
        raise ConfigurationError("horizon must be a positive integer multiple of delta")
    return m


def brownian_grid(k: int, horizon: float, delta: float, seed) -> BrownianGrid:
    m = grid_steps(horizon, delta)
    rng = as_generator(seed)
    return BrownianGrid(horizon, delta, math.sqrt(delta) * rng.standard_normal((k, m)))


def refine(grid: BrownianGrid, seed) -> BrownianGrid:
    """Halve the step by inserting Brownian-bridge midpoints into the same paths."""
    rng = as_generator(seed)
    d = grid.increments
    first = 0.5 * d + math.sqrt(grid.delta / 4.0) * rng.standard_normal(d.shape)
    fine = np.empty((grid.k, 2 * grid.steps))
    fine[:, 0::2] = first
    fine[:, 1::2] = d - first
    return BrownianGrid(grid.horizon, grid.delta / 2.0, fine)


def brownian_passage(grid: BrownianGrid) -> float:
    """sup over grid-valued u in U(N, k) of sum_r (B^(r)_{u_r} - B^(r)_{u_{r-1}})."""
    if grid.increments.size == 0:
        raise ConfigurationError("empty Brownian grid")
    return float(_kernels.brownian_rows(np.ascontiguousarray(grid.increments)))


def _brownian_block(k: int, m: int, delta: float, count: int, seed: SeedPath) -> np.ndarray:
    return _kernels.brownian_gaussian(seed.generator(), count, m, k, math.sqrt(delta))


def sample_brownian_passage(
    k: int, horizon: float, delta: float, replicates: int, seed: SeedPath | int, threads: int = 1
) -> np.ndarray:
    """Independent draws of the grid Brownian last-passage time, increments streamed."""
    m = grid_steps(horizon, delta)
    seed = seed if isinstance(seed, SeedPath) else SeedPath(seed)
    return _run_blocks(lambda c, s: _brownian_block(k, m, delta, c, s), replicates, seed, threads)


# -- GUE ------------------------------------------------------------------

@dataclass(frozen=True)
class GueSampleSpec:
    k: int
    method: Literal["tridiagonal", "dense-small"] = "tridiagonal"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        if self.method not in ("tridiagonal", "dense-small"):
            raise ConfigurationError(f"unknown GUE method {self.method!r}")
        if self.method == "dense-small" and self.k > 64:
            raise ConfigurationError("dense-small sampler is limited to k <= 64")


@dataclass
class GueDraws:
    values: np.ndarray
    flagged: int = 0


def _tridiagonal_block(k: int, count: int, seed: SeedPath) -> np.ndarray:
    rng = seed.generator()
    diag = rng.standard_normal((count, k))
    # squared off-diagonal chi_{2(k-i)} / sqrt(2) is Gamma(k - i, 1)
    off2 = rng.standard_gamma(np.arange(k - 1, 0, -1, dtype=float), size=(count, k - 1))
    return _kernels.tridiagonal_lambda_max(diag, off2, 1e-14)


def _dense_block(k: int, count: int, seed: SeedPath) -> np.ndarray:
    rng = seed.generator()
    a = rng.standard_normal((count, k, k)) + 1j * rng.standard_normal((count, k, k))
    h = 0.5 * (a + np.conj(np.swapaxes(a, 1, 2)))
    return np.linalg.eigvalsh(h)[:, -1]


def sample_L1k_gue(spec: GueSampleSpec, replicates: int, seed: SeedPath | int, threads: int = 1) -> GueDraws:
    """Draws of lambda_max for the k x k GUE, i.e. of L(1, k).

    ``tridiagonal`` uses the beta = 2 Hermite tridiagonal model (N(0, 1)
    diagonal, chi_{2(k-i)} / sqrt(2) off-diagonal) with Sturm bisection;
    ``dense-small`` diagonalises full Hermitian matrices.
    """
    seed = seed if isinstance(seed, SeedPath) else SeedPath(seed)
    block = _tridiagonal_block if spec.method == "tridiagonal" else _dense_block
    values = _run_blocks(lambda c, s: block(spec.k, c, s), replicates, seed, threads)
    bad = ~np.isfinite(values)
    return GueDraws(values[~bad], int(bad.sum()))


# -- modulus of continuity ----------------------------------------------------

def modulus_statistic(path: np.ndarray, delta: float, window: float) -> float:
    """max |B_s - B_t| over grid times with |s - t| < window.

    Sliding max/min over ``ceil(window / delta)`` consecutive grid points.
    """
    if window < delta:
        raise ConfigurationError("window must be at least delta")
    path = np.asarray(path, dtype=float)
    size = min(max(1, math.ceil(window / delta - 1e-9)), path.shape[-1])
    hi = ndimage.maximum_filter1d(path, size, axis=-1, mode="nearest")
    lo = ndimage.minimum_filter1d(path, size, axis=-1, mode="nearest")
    return (hi - lo).max(axis=-1)


def check_brownian_scaling(
    k: int, horizon: float, delta: float, replicates: int, seed: SeedPath | int
) -> float:
    """KS distance between sqrt(N) L(1, k) and L(N, k) on matched grids.

    The horizon-N grid uses step ``delta * N`` so both suprema range over the
    same number of grid points.
    """
    seed = seed if isinstance(seed, SeedPath) else SeedPath(seed)
    unit = math.sqrt(horizon) * sample_brownian_passage(k, 1.0, delta, replicates, seed.child(0))
    wide = sample_brownian_passage(k, horizon, delta * horizon, replicates, seed.child(1))
    return float(stats.ks_2samp(unit, wide).statistic)


def ks_critical(n: int, m: int, alpha_coefficient: float = KS_C_ALPHA_1PCT) -> float:
    """Asymptotic two-sample KS critical value (default level 1%)."""
    return alpha_coefficient * math.sqrt((n + m) / (n * m))
