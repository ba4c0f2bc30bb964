"""Compiled inner loops shared by the lattice and Brownian simulators."""

from __future__ import annotations

import numba
import numpy as np

NEG_INF = -np.inf


@numba.njit(cache=True, nogil=True)
def lattice_rows(weights):
    """Last-passage value for one ``(k, N)`` weight array with an O(k) buffer."""
    k, n = weights.shape
    g = np.full(k, NEG_INF)
    g[0] = 0.0  # seeds G(1, 1) = X_1^(1)
    for i in range(n):
        for j in range(k):
            a = g[j]
            if j > 0 and g[j - 1] > a:
                a = g[j - 1]
            g[j] = a + weights[j, i]
    return g[k - 1]


@numba.njit(cache=True, nogil=True)
def lattice_table(weights):
    """Full table ``G[j, i]`` (0-based) for path recovery."""
    k, n = weights.shape
    table = np.empty((k, n))
    for i in range(n):
        for j in range(k):
            if i == 0 and j == 0:
                a = 0.0
            else:
                a = NEG_INF
                if i > 0:
                    a = table[j, i - 1]
                if j > 0 and table[j - 1, i] > a:
                    a = table[j - 1, i]
            table[j, i] = a + weights[j, i]
    return table


@numba.njit(cache=True, nogil=True)
def lattice_chunk(x, g):
    """Advance the lattice recurrence for a block of replicates.

    ``x`` has shape ``(R, C, k)`` (replicate, column, row) and ``g`` holds the
    current column ``G(i, .)`` for each replicate, shape ``(R, k)``.
    """
    r_count, c_count, k = x.shape
    for r in range(r_count):
        for c in range(c_count):
            prev = NEG_INF
            for j in range(k):
                a = g[r, j]
                if prev > a:
                    a = prev
                prev = a + x[r, c, j]
                g[r, j] = prev


@numba.njit(cache=True, nogil=True)
def brownian_chunk(x, f):
    """Advance the Brownian grid recurrence ``F_r(m) = max(F_{r-1}(m), F_r(m-1) + d)``.

    Unlike the lattice recurrence an up-move does not collect a second
    increment: row ``r`` owns the increments on ``(u_{r-1}, u_r]``.
    """
    r_count, c_count, k = x.shape
    for r in range(r_count):
        for c in range(c_count):
            below = NEG_INF
            for j in range(k):
                a = f[r, j] + x[r, c, j]
                if below > a:
                    a = below
                f[r, j] = a
                below = a


@numba.njit(cache=True, nogil=True)
def brownian_rows(increments):
    k, m = increments.shape
    f = np.zeros(k)
    for c in range(m):
        below = NEG_INF
        for j in range(k):
            a = f[j] + increments[j, c]
            if below > a:
                a = below
            f[j] = a
            below = a
    return f[k - 1]


@numba.njit(cache=True, nogil=True)
def tridiagonal_lambda_max(diag, off2, tol):
    """Largest eigenvalue of many symmetric tridiagonal matrices by Sturm bisection.

    ``diag`` is ``(R, k)``; ``off2`` holds the squared off-diagonals, ``(R, k-1)``.
    Returns NaN for a matrix whose bisection fails to bracket.
    """
    r_count, k = diag.shape
    out = np.empty(r_count)
    for r in range(r_count):
        # Gershgorin bounds
        lo = np.inf
        hi = -np.inf
        for i in range(k):
            rad = 0.0
            if i > 0:
                rad += np.sqrt(off2[r, i - 1])
            if i < k - 1:
                rad += np.sqrt(off2[r, i])
            if diag[r, i] - rad < lo:
                lo = diag[r, i] - rad
            if diag[r, i] + rad > hi:
                hi = diag[r, i] + rad
        scale = max(abs(lo), abs(hi), 1.0)
        ok = False
        for _ in range(200):
            if hi - lo <= tol * scale:
                ok = True
                break
            mid = 0.5 * (lo + hi)
            # count eigenvalues < mid (LDL^T pivots)
            count = 0
            d = diag[r, 0] - mid
            if d < 0.0:
                count += 1
            for i in range(1, k):
                if d == 0.0:
                    d = 1e-300
                d = diag[r, i] - mid - off2[r, i - 1] / d
                if d < 0.0:
                    count += 1
            if count == k:
                hi = mid
            else:
                lo = mid
        out[r] = 0.5 * (lo + hi) if ok else np.nan
    return out


# Fused sampling: Gaussian weights drawn inside the loop from a numpy Generator,
# which avoids materialising the weight blocks (roughly 3x faster).

@numba.njit(cache=True, nogil=True)
def lattice_gaussian(rng, count, n, k, sd):
    """``count`` draws of G(N, k) with N(0, sd^2) weights."""
    out = np.empty(count)
    g = np.empty(k)
    for r in range(count):
        g[:] = NEG_INF
        g[0] = 0.0
        for _ in range(n):
            prev = NEG_INF
            for j in range(k):
                a = g[j]
                if prev > a:
                    a = prev
                prev = a + sd * rng.standard_normal()
                g[j] = prev
        out[r] = g[k - 1]
    return out


@numba.njit(cache=True, nogil=True)
def brownian_gaussian(rng, count, m, k, sd):
    """``count`` draws of the grid Brownian passage time over ``m`` steps of variance sd^2."""
    out = np.empty(count)
    f = np.empty(k)
    for r in range(count):
        f[:] = 0.0
        for _ in range(m):
            below = NEG_INF
            for j in range(k):
                a = f[j] + sd * rng.standard_normal()
                if below > a:
                    a = below
                f[j] = a
                below = a
        out[r] = f[k - 1]
    return out
