from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from thinlpp import brownian as B
from thinlpp.weights import ConfigurationError, SeedPath

# E lambda_max of the 2 x 2 GUE: half the gap is chi_3 / sqrt(2) distributed
GUE2_MEAN = 2.0 / math.sqrt(math.pi)


def grid_sup_oracle(incs: np.ndarray) -> float:
    """Exhaustive sup over grid switch points (k = 2 or 3)."""
    k, m = incs.shape
    paths = np.concatenate((np.zeros((k, 1)), np.cumsum(incs, axis=1)), axis=1)
    best = -np.inf
    if k == 2:
        for u in range(m + 1):
            best = max(best, paths[0, u] + paths[1, m] - paths[1, u])
    else:
        for u1 in range(m + 1):
            for u2 in range(u1, m + 1):
                best = max(best, paths[0, u1] + paths[1, u2] - paths[1, u1] + paths[2, m] - paths[2, u2])
    return float(best)


def test_zero_increments():
    assert B.brownian_passage(B.BrownianGrid(1.0, 0.1, np.zeros((3, 10)))) == 0.0


def test_single_row_is_endpoint(rng):
    g = B.brownian_grid(1, 2.0, 0.01, SeedPath(1))
    assert B.brownian_passage(g) == pytest.approx(g.paths()[0, -1], abs=1e-12)


def test_empty_grid():
    with pytest.raises(ConfigurationError):
        B.brownian_passage(B.BrownianGrid(1.0, 0.1, np.zeros((2, 0))))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 3), st.integers(1, 25), st.integers(0, 2**32 - 1))
def test_grid_recurrence_matches_exhaustive_sup(k, m, seed):
    incs = np.random.default_rng(seed).standard_normal((k, m))
    assert B.brownian_passage(B.BrownianGrid(float(m), 1.0, incs)) == pytest.approx(grid_sup_oracle(incs), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_refinement_is_monotone(k, seed):
    coarse = B.brownian_grid(k, 1.0, 1 / 64, SeedPath(seed))
    fine = B.refine(coarse, SeedPath(seed, (1,)))
    assert np.allclose(fine.paths()[:, ::2], coarse.paths(), atol=1e-12)
    assert B.brownian_passage(fine) >= B.brownian_passage(coarse) - 1e-12


def test_streamed_sampler_matches_materialised_grids():
    draws = B.sample_brownian_passage(3, 1.0, 0.01, 5000, 2)
    direct = [B.brownian_passage(B.brownian_grid(3, 1.0, 0.01, SeedPath(3, (i,)))) for i in range(5000)]
    assert stats.ks_2samp(draws, direct).pvalue > 1e-3


def test_gue_k1_is_standard_normal():
    d = B.sample_L1k_gue(B.GueSampleSpec(1), 100_000, 1)
    assert d.flagged == 0
    assert stats.kstest(d.values, "norm").pvalue > 0.01


def test_gue_k2_mean_matches_closed_form():
    d = B.sample_L1k_gue(B.GueSampleSpec(2), 200_000, 2).values
    assert abs(d.mean() - GUE2_MEAN) < 4 * d.std() / math.sqrt(d.size)


def test_gue_k50_mean_interval():
    d = B.sample_L1k_gue(B.GueSampleSpec(50), 100_000, 3)
    assert d.flagged == 0
    assert 1.85 <= d.values.mean() / math.sqrt(50) <= 2.0
    dense = B.sample_L1k_gue(B.GueSampleSpec(50, "dense-small"), 2000, 4).values
    assert abs(dense.mean() - d.values.mean()) < 4 * dense.std() / math.sqrt(dense.size)


def test_tridiagonal_matches_dense_k8():
    tri = B.sample_L1k_gue(B.GueSampleSpec(8), 100_000, 5).values
    dense = B.sample_L1k_gue(B.GueSampleSpec(8, "dense-small"), 100_000, 6).values
    assert stats.ks_2samp(tri, dense).statistic < 0.01


def test_dense_guard():
    with pytest.raises(ConfigurationError):
        B.GueSampleSpec(65, "dense-small")
    with pytest.raises(ConfigurationError):
        B.GueSampleSpec(0)


def test_sampler_threads_deterministic():
    a = B.sample_L1k_gue(B.GueSampleSpec(5), 10_000, 7, threads=1).values
    b = B.sample_L1k_gue(B.GueSampleSpec(5), 10_000, 7, threads=2).values
    assert np.array_equal(a, b)


@pytest.mark.xfail(strict=True, reason="grid maximum at delta=1e-3 sits about 0.026 below L(1,2); see README")
def test_grid_mean_k2_at_coarse_delta():
    d = B.sample_brownian_passage(2, 1.0, 1e-3, 100_000, 8)
    assert abs(d.mean() - GUE2_MEAN) < 3 * d.std() / math.sqrt(d.size)


def test_grid_mean_k2_extrapolated():
    # grid bias is proportional to sqrt(delta); extrapolate from delta and delta / 4
    coarse = B.sample_brownian_passage(2, 1.0, 1e-3, 100_000, 9)
    fine = B.sample_brownian_passage(2, 1.0, 2.5e-4, 100_000, 10)
    est = 2 * fine.mean() - coarse.mean()
    se = math.sqrt(4 * fine.var() + coarse.var()) / math.sqrt(100_000)
    assert abs(est - GUE2_MEAN) < 3 * se


def test_modulus_trivial_cases(rng):
    assert B.modulus_statistic(np.zeros(101), 0.01, 2.0) == 0.0
    path = np.concatenate(([0.0], np.cumsum(rng.standard_normal(400) * 0.1)))
    assert B.modulus_statistic(path, 0.01, 10.0) == pytest.approx(path.max() - path.min())
    with pytest.raises(ConfigurationError):
        B.modulus_statistic(path, 0.01, 0.001)


def test_modulus_matches_pairwise_oracle(rng):
    path = np.concatenate(([0.0], np.cumsum(rng.standard_normal(300))))
    delta, window = 0.1, 2.0
    lag = math.ceil(window / delta)  # grid pairs with |s - t| < window
    best = max(abs(path[i] - path[j]) for i in range(path.size) for j in range(i, min(path.size, i + lag)))
    assert B.modulus_statistic(path, delta, window) == pytest.approx(best)


def test_modulus_reflection_bound():
    n, delta, reps = 100, 0.01, 10_000
    stats_ = np.empty(reps)
    root = SeedPath(12)
    for r in range(reps):
        g = B.brownian_grid(1, float(n), delta, root.child(r))
        stats_[r] = g.row_modulus(2.0)[0]
    for t in (4.0, 5.0, 6.0):
        bound = 4 * n * stats.norm.sf(t / 2 / math.sqrt(3.0))
        p = np.mean(stats_ >= t)
        assert p <= min(1.0, bound) + 3 * math.sqrt(max(p * (1 - p), 1e-12) / reps)


@pytest.mark.parametrize("k,n", [(3, 4), (1, 4), (2, 1)])
def test_brownian_scaling(k, n):
    d = B.check_brownian_scaling(k, float(n), 1e-3, 10_000, SeedPath(13, (k, n)))
    assert d < B.ks_critical(10_000, 10_000)
