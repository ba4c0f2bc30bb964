"""Directed last-passage percolation on the lattice rectangle [1, N] x [1, k].

Weights are stored as a ``(k, N)`` array: ``weights[j - 1, i - 1]`` is
``X_i^(j)``, row ``j``, column ``i``.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .weights import ConfigurationError, SeedPath, WeightSpec, as_generator

ENUMERATION_LIMIT = 10**6
BLOCK_REPLICATES = 4096
_CHUNK_CELLS = 1 << 21


@dataclass
class PassageResult:
    value: float
    path: list[tuple[int, int]] | None = None
    up_steps: list[int] | None = None

    def to_json(self) -> str:
        out: dict = {"value": self.value}
        if self.path is not None:
            out["path"] = [list(site) for site in self.path]
        return json.dumps(out)


def _as_weights(instance) -> np.ndarray:
    w = np.ascontiguousarray(instance, dtype=float)
    if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
        raise ConfigurationError("instance must be a (k, N) array with k, N >= 1")
    return w


def passage_time(instance, want_path: bool = False) -> PassageResult:
    """G(N, k) by the recurrence G(i,j) = max(G(i-1,j), G(i,j-1)) + X_i^(j).

    Without ``want_path`` only one column of the table is kept.  Path recovery
    prefers the up-step on exact ties.
    """
    w = _as_weights(instance)
    if not want_path:
        return PassageResult(float(_kernels.lattice_rows(w)))
    table = _kernels.lattice_table(w)
    k, n = w.shape
    i, j = n - 1, k - 1
    path = [(n, k)]
    while i > 0 or j > 0:
        if j > 0 and (i == 0 or table[j - 1, i] >= table[j, i - 1]):
            j -= 1
        else:
            i -= 1
        path.append((i + 1, j + 1))
    path.reverse()
    return PassageResult(float(table[k - 1, n - 1]), path, up_steps_of(path, n, k))


def up_steps_of(path: list[tuple[int, int]], n: int, k: int) -> list[int]:
    """Encode a path by the columns of its up-jumps: 0 = u_0 <= ... <= u_k = N."""
    u = [0] * (k + 1)
    u[k] = n
    for (i0, j0), (i1, j1) in zip(path, path[1:]):
        if j1 == j0 + 1:
            u[j0] = i0
    return u


def path_count(n: int, k: int) -> int:
    return math.comb(n + k - 2, k - 1)


def _guard(n: int, k: int) -> None:
    if path_count(n, k) > ENUMERATION_LIMIT:
        raise ConfigurationError(
            f"{path_count(n, k)} paths exceed the enumeration limit {ENUMERATION_LIMIT}"
        )


def passage_time_bruteforce(instance) -> PassageResult:
    """Exhaustive maximum over all up/right paths (test oracle)."""
    w = _as_weights(instance)
    k, n = w.shape
    _guard(n, k)
    best_value, best_path = -math.inf, None
    steps = n + k - 2
    for ups in itertools.combinations(range(steps), k - 1):
        i = j = 1
        total = w[0, 0]
        path = [(1, 1)]
        up_set = set(ups)
        for s in range(steps):
            if s in up_set:
                j += 1
            else:
                i += 1
            total += w[j - 1, i - 1]
            path.append((i, j))
        if total > best_value:
            best_value, best_path = total, path
    return PassageResult(float(best_value), best_path, up_steps_of(best_path, n, k))


def passage_time_variational(instance) -> float:
    """sup over integer u of sum_r [S^(r)_{u_r} - S^(r)_{u_{r-1} - 1}].

    ``S_{-1} = S_0 = 0``.  Up-jump columns range over ``1 <= u_1 <= ... <= N``:
    a jump at column 0 does not correspond to a path through (1, 1).
    """
    w = _as_weights(instance)
    k, n = w.shape
    _guard(n, k)
    # S[r, m + 1] = S_m^(r), so index 0 holds S_{-1} and index 1 holds S_0
    s = np.zeros((k, n + 2))
    np.cumsum(w, axis=1, out=s[:, 2:])
    best = -math.inf
    for inner in itertools.combinations_with_replacement(range(1, n + 1), k - 1):
        u = (0, *inner, n)
        total = 0.0
        for r in range(1, k + 1):
            total += s[r - 1, u[r] + 1] - s[r - 1, u[r - 1]]
        best = max(best, total)
    return float(best)


def _passage_block(spec: WeightSpec, n: int, k: int, count: int, seed: SeedPath) -> np.ndarray:
    rng = seed.generator()
    if spec.is_gaussian:
        return _kernels.lattice_gaussian(rng, count, n, k, 1.0)
    g = np.full((count, k), -np.inf)
    g[:, 0] = 0.0
    cols = max(1, _CHUNK_CELLS // (count * k))
    done = 0
    while done < n:
        c = min(cols, n - done)
        x = spec.draw(rng, (count, c, k))
        _kernels.lattice_chunk(x, g)
        done += c
    return g[:, k - 1].copy()


def _run_blocks(fn, replicates: int, seed: SeedPath, threads: int) -> np.ndarray:
    sizes = [min(BLOCK_REPLICATES, replicates - b) for b in range(0, replicates, BLOCK_REPLICATES)]
    jobs = [(size, seed.child(b)) for b, size in enumerate(sizes)]
    if threads <= 1 or len(jobs) == 1:
        parts = [fn(size, s) for size, s in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    return np.concatenate(parts) if parts else np.empty(0)


def sample_passage(
    spec: WeightSpec, n: int, k: int, replicates: int, seed: SeedPath | int, threads: int = 1
) -> np.ndarray:
    """``replicates`` independent draws of G(N, k).

    Weights are streamed column by column; replicate block ``b`` uses stream
    ``seed.child(b)`` so the output does not depend on ``threads``.
    """
    if replicates < 1:
        raise ConfigurationError("replicates must be >= 1")
    if n < 1 or k < 1:
        raise ConfigurationError("N and k must be >= 1")
    seed = seed if isinstance(seed, SeedPath) else SeedPath(seed)
    return _run_blocks(lambda c, s: _passage_block(spec, n, k, c, s), replicates, seed, threads)


def random_instance(spec: WeightSpec, n: int, k: int, seed) -> np.ndarray:
    return spec.draw(as_generator(seed), (k, n))


def load_instance_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return _as_weights(rows)
