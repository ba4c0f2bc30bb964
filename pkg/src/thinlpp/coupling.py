"""Coupling weights with Brownian paths.

The Skorokhod embedding used here is the randomised two-point one: draw
``a <= 0 <= b`` with joint law proportional to ``(b - a) mu(da) mu(db)`` and
run a Brownian motion until it leaves ``(a, b)``.  Then ``B_T ~ mu`` and
``E T = E X^2 = 1``.  Exit times are simulated on a grid of step ``delta``
with a Brownian-bridge test for crossings between grid points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import stats

from .brownian import brownian_passage, BrownianGrid, modulus_statistic
from .lattice import passage_time
from .weights import ConfigurationError, SeedPath, WeightSpec, as_generator

MAX_DELTA = 1e-3
MEMORY_BUDGET = 50_000_000  # grid values held at once
_BUFFER = 1 << 16


# -- two-point pair sampling ---------------------------------------------------

@dataclass
class _TwoPoint:
    p_zero: float
    p_neg: float
    p_pos: float
    neg: object
    pos: object
    neg_biased: object
    pos_biased: object


def _discrete_table(spec: WeightSpec) -> tuple[np.ndarray, np.ndarray]:
    if spec.family == "geometric":
        q = spec.params["q"]
        hmax = int(math.ceil(math.log(1e-18) / math.log(q)))
        raw = np.arange(hmax + 1, dtype=float)
        pmf = (1 - q) * q**raw
    else:
        raw = np.asarray(spec.params["values"], float)
        pmf = np.asarray(spec.params["probs"], float)
    values = (raw - spec.loc) / spec.scale
    pmf = pmf / pmf.sum()
    values[np.abs(values) < 1e-12] = 0.0
    return values, pmf


def _choice(values, weights):
    weights = weights / weights.sum()
    return lambda rng, n: rng.choice(values, size=n, p=weights)


def _rejection(draw, accept_prob):
    def sampler(rng, n):
        out = np.empty(n)
        filled = 0
        while filled < n:
            x = draw(rng, 2 * (n - filled) + 16)
            x = x[rng.random(x.size) < accept_prob(x)]
            take = min(x.size, n - filled)
            out[filled : filled + take] = x[:take]
            filled += take
        return out

    return sampler


def two_point_law(spec: WeightSpec) -> _TwoPoint:
    """Per-family samplers for the two sides of a centred law and their size-biased versions."""
    degenerate = spec.family == "user-table" and abs(spec.mean) < 1e-12 and spec.variance < 1e-24
    if not (spec.normalized or degenerate):
        raise ConfigurationError("Skorokhod embedding needs a centred, unit-variance law")
    fam = spec.family
    if fam == "standard-normal":
        half = lambda rng, n: np.abs(rng.standard_normal(n))
        rayleigh = lambda rng, n: np.sqrt(2.0 * rng.standard_exponential(n))
        return _TwoPoint(0.0, 0.5, 0.5, lambda r, n: -half(r, n), half, lambda r, n: -rayleigh(r, n), rayleigh)
    if fam == "rademacher":
        one = lambda rng, n: np.ones(n)
        neg = lambda rng, n: -np.ones(n)
        return _TwoPoint(0.0, 0.5, 0.5, neg, one, neg, one)
    if fam == "weibull-symmetric":
        g, s = spec.params["gamma"], spec.scale
        side = lambda rng, n: rng.weibull(g, n) / s
        biased = lambda rng, n: rng.standard_gamma(1.0 + 1.0 / g, n) ** (1.0 / g) / s
        return _TwoPoint(0.0, 0.5, 0.5, lambda r, n: -side(r, n), side, lambda r, n: -biased(r, n), biased)
    if fam == "centered-exponential":
        # standardised law is E - 1 with E ~ Exp(1)
        c = -math.expm1(-1.0)
        trunc = lambda rng, n: -np.log1p(-rng.random(n) * c)  # E given E < 1
        neg = lambda rng, n: trunc(rng, n) - 1.0
        neg_biased = _rejection(neg, lambda x: -x)
        pos = lambda rng, n: rng.standard_exponential(n)
        pos_biased = lambda rng, n: rng.standard_gamma(2.0, n)
        return _TwoPoint(0.0, c, 1.0 - c, neg, pos, neg_biased, pos_biased)
    if fam in ("geometric", "user-table"):
        values, pmf = _discrete_table(spec)
        neg_m, pos_m = values < 0, values > 0
        if not neg_m.any():
            nothing = lambda rng, n: np.zeros(n)
            return _TwoPoint(1.0, 0.0, 0.0, nothing, nothing, nothing, nothing)
        return _TwoPoint(
            float(pmf[values == 0].sum()),
            float(pmf[neg_m].sum()),
            float(pmf[pos_m].sum()),
            _choice(values[neg_m], pmf[neg_m]),
            _choice(values[pos_m], pmf[pos_m]),
            _choice(values[neg_m], pmf[neg_m] * -values[neg_m]),
            _choice(values[pos_m], pmf[pos_m] * values[pos_m]),
        )
    raise ConfigurationError(f"no embedding for family {fam!r}")


def sample_pairs(spec: WeightSpec, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``n`` barrier pairs ``(a, b)``; ``a = b = 0`` encodes the atom at zero (T = 0)."""
    law = two_point_law(spec)
    a = np.zeros(n)
    b = np.zeros(n)
    nonzero = rng.random(n) >= law.p_zero
    m = int(nonzero.sum())
    if m == 0:
        return a, b
    size_biased_pos = rng.random(m) < law.p_neg / (law.p_neg + law.p_pos)
    n1 = int(size_biased_pos.sum())
    a_nz = np.empty(m)
    b_nz = np.empty(m)
    a_nz[size_biased_pos] = law.neg(rng, n1)
    b_nz[size_biased_pos] = law.pos_biased(rng, n1)
    a_nz[~size_biased_pos] = law.neg_biased(rng, m - n1)
    b_nz[~size_biased_pos] = law.pos(rng, m - n1)
    a[nonzero] = a_nz
    b[nonzero] = b_nz
    return a, b


# -- exit-time kernels -------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _crossed(x, y, lo, hi, delta, v):
    """+1 / -1 if the step x -> y left (lo, hi) (endpoint or bridge crossing), else 0."""
    if y >= hi:
        return 1
    if y <= lo:
        return -1
    p_hi = math.exp(-2.0 * (hi - x) * (hi - y) / delta)
    p_lo = math.exp(-2.0 * (x - lo) * (y - lo) / delta)
    if v < p_hi:
        return 1
    if v < p_hi + p_lo:
        return -1
    return 0


@numba.njit(cache=True, nogil=True)
def _exit_kernel(a, b, delta, z, u, state, out_steps, out_side):
    """Exit steps of independent walks from (a_i, b_i), consuming buffers ``z``, ``u``.

    ``state = [next replicate, position, steps so far]``; returns the number
    of buffer entries used.
    """
    i = int(state[0])
    x = state[1]
    steps = int(state[2])
    sd = math.sqrt(delta)
    j = 0
    n = z.size
    while i < a.size:
        if a[i] == 0.0 and b[i] == 0.0:
            out_steps[i] = 0
            out_side[i] = 0
            i += 1
            continue
        if j >= n:
            break
        y = x + sd * z[j]
        side = _crossed(x, y, a[i], b[i], delta, u[j])
        j += 1
        steps += 1
        if side != 0:
            out_steps[i] = steps
            out_side[i] = side
            i += 1
            x = 0.0
            steps = 0
        else:
            x = y
    state[0] = i
    state[1] = x
    state[2] = steps
    return j


@numba.njit(cache=True, nogil=True)
def _path_kernel(a, b, delta, z, u, state, path, hit_steps):
    """One Brownian path embedding the pairs ``(a_i, b_i)`` in sequence.

    On exit the path value is set to the barrier, so the partial sums are
    path values at the recorded hit steps.  ``state = [next pair, steps
    written, start value of the current embedding]``; stops when the
    buffers or ``path`` run out.
    """
    i = int(state[0])
    n_path = int(state[1])
    base = state[2]
    sd = math.sqrt(delta)
    j = 0
    while i < a.size:
        lo = base + a[i]
        hi = base + b[i]
        if a[i] == 0.0 and b[i] == 0.0:
            hit_steps[i] = n_path - 1
            i += 1
            continue
        if j >= z.size or n_path >= path.size:
            break
        x = path[n_path - 1]
        y = x + sd * z[j]
        side = _crossed(x, y, lo, hi, delta, u[j])
        j += 1
        if side == 1:
            y = hi
        elif side == -1:
            y = lo
        path[n_path] = y
        n_path += 1
        if side != 0:
            hit_steps[i] = n_path - 1
            base = y
            i += 1
    state[0] = i
    state[1] = n_path
    state[2] = base
    return j


def _check_delta(delta: float) -> None:
    if not 0.0 < delta <= MAX_DELTA:
        raise ConfigurationError(f"embedding resolution must satisfy 0 < delta <= {MAX_DELTA}")


# -- single embeddings ------------------------------------------------------------

@dataclass
class EmbeddingResult:
    stopped_value: float
    stopping_time: float
    path_fragment: np.ndarray | None = None


def skorokhod_embed(
    spec: WeightSpec, replicates: int, delta: float = MAX_DELTA, seed: SeedPath | int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Independent embeddings from 0: returns ``(T, B_T)`` arrays."""
    _check_delta(delta)
    rng = as_generator(seed)
    a, b = sample_pairs(spec, rng, replicates)
    steps = np.zeros(replicates, dtype=np.int64)
    side = np.zeros(replicates, dtype=np.int64)
    state = np.zeros(3)
    while state[0] < replicates:
        z = rng.standard_normal(_BUFFER)
        u = rng.random(_BUFFER)
        _exit_kernel(a, b, delta, z, u, state, steps, side)
    value = np.where(side > 0, b, np.where(side < 0, a, 0.0))
    # a crossing happened somewhere inside the final step
    t = np.where(steps > 0, (steps - 0.5) * delta, 0.0)
    return t, value


def skorokhod_embed_once(
    spec: WeightSpec, delta: float = MAX_DELTA, seed: SeedPath | int = 0, keep_path: bool = False
) -> EmbeddingResult:
    if not keep_path:
        t, v = skorokhod_embed(spec, 1, delta, seed)
        return EmbeddingResult(float(v[0]), float(t[0]))
    path, hits, pairs = _embed_along_path(spec, 1, delta, as_generator(seed), 0)
    n = int(hits[0])
    return EmbeddingResult(float(path[n]), n * delta, path[: n + 1].copy())


def _embed_along_path(spec, count, delta, rng, min_steps):
    """Grid path (``path[0] = 0``) embedding ``count`` draws, extended to ``min_steps``."""
    a, b = sample_pairs(spec, rng, count)
    cap = max(min_steps, int(count / delta * 1.25)) + 2
    path = np.zeros(cap + 1)
    hits = np.zeros(count, dtype=np.int64)
    state = np.array([0.0, 1.0, 0.0])  # path[0] = 0 is already written
    while state[0] < count:
        if state[1] >= path.size:
            path = np.concatenate((path, np.zeros(path.size)))
        z = rng.standard_normal(_BUFFER)
        u = rng.random(_BUFFER)
        _path_kernel(a, b, delta, z, u, state, path, hits)
    n_path = int(state[1])
    if n_path - 1 < min_steps:
        extra = min_steps - (n_path - 1)
        if path.size < n_path + extra:
            path = np.concatenate((path, np.zeros(n_path + extra - path.size)))
        path[n_path : n_path + extra] = path[n_path - 1] + np.cumsum(math.sqrt(delta) * rng.standard_normal(extra))
        n_path += extra
    return path[:n_path], hits, (a, b)


def marginal_ks(spec: WeightSpec, stopped: np.ndarray) -> tuple[float, float]:
    """One-sample KS statistic of stopped values against the exact CDF, and its p-value.

    For discrete laws both CDFs are step functions with jumps at the atoms,
    so the supremum is taken over the atoms; the continuous-law p-value is
    then conservative.
    """
    stopped = np.asarray(stopped, dtype=float)
    if spec.family not in ("geometric", "user-table", "rademacher"):
        res = stats.kstest(stopped, spec.cdf)
        return float(res.statistic), float(res.pvalue)
    if spec.family == "rademacher":
        atoms = np.array([-1.0, 1.0])
    else:
        atoms, _ = _discrete_table(spec)
    atoms = np.unique(np.concatenate((atoms, np.unique(stopped))))
    emp = np.searchsorted(np.sort(stopped), atoms, side="right") / stopped.size
    d = float(np.abs(emp - spec.cdf(atoms)).max())
    return d, float(stats.kstwo.sf(d, stopped.size))


# -- partial sums and the coupling gap --------------------------------------------

@dataclass
class PartialSumEmbedding:
    partial_sums: np.ndarray  # S_1 .. S_N
    brownian_at_integers: np.ndarray  # B_1 .. B_N
    gap: float  # max_i |S_i - B_i|
    tau_walk_max: np.ndarray  # running max_i |sum_{l<=i} (tau_l - 1)|
    path: np.ndarray  # grid values on [0, N] at step delta, B_0 = 0 first
    delta: float

    @property
    def weights(self) -> np.ndarray:
        return np.diff(self.partial_sums, prepend=0.0)


def _steps_per_unit(delta: float) -> int:
    spu = int(round(1.0 / delta))
    if abs(spu * delta - 1.0) > 1e-9:
        raise ConfigurationError("1/delta must be an integer so integer times are grid points")
    return spu


def embed_partial_sums(spec: WeightSpec, n: int, delta: float = MAX_DELTA, seed: SeedPath | int = 0) -> PartialSumEmbedding:
    """Embed S_1..S_N into one Brownian path by iterated stopping times.

    Gaussian weights use the exact coupling ``X_i = B_i - B_{i-1}`` (gap 0).
    """
    _check_delta(delta)
    spu = _steps_per_unit(delta)
    if (n * spu + 1) > MEMORY_BUDGET:
        raise ConfigurationError("path exceeds the memory budget")
    rng = as_generator(seed)
    if spec.is_gaussian:
        path = np.zeros(n * spu + 1)
        np.cumsum(math.sqrt(delta) * rng.standard_normal(n * spu), out=path[1:])
        b_int = path[spu::spu].copy()
        s = b_int.copy()
        tau_walk = np.zeros(n)
        return PartialSumEmbedding(s, b_int, 0.0, tau_walk, path, delta)
    path, hits, _ = _embed_along_path(spec, n, delta, rng, n * spu)
    s = path[hits]
    b_int = path[spu : n * spu + 1 : spu]
    tau = np.diff(hits, prepend=0) * delta
    tau_walk = np.maximum.accumulate(np.abs(np.cumsum(tau - 1.0)))
    gap = float(np.abs(s - b_int).max())
    return PartialSumEmbedding(s, b_int, gap, tau_walk, path[: n * spu + 1].copy(), delta)


@dataclass
class CouplingGapStats:
    Y_k: float
    Z_k: float
    G_minus_L: float
    G: float
    L: float

    @property
    def holds(self) -> bool:
        return abs(self.G_minus_L) <= self.Y_k + self.Z_k + 1e-9 * (1.0 + abs(self.G) + abs(self.L))


def coupling_gap_stats(
    spec: WeightSpec, n: int, k: int, delta: float = MAX_DELTA, seed: SeedPath | int = 0, window: float = 2.0
) -> CouplingGapStats:
    """Couple k rows with k Brownian paths; G, grid L and the two gap terms."""
    spu = _steps_per_unit(delta)
    if n * k * spu > MEMORY_BUDGET:
        raise ConfigurationError("N * k / delta exceeds the memory budget")
    seed = seed if isinstance(seed, SeedPath) else SeedPath(seed)
    rows, incs = [], []
    y = z = 0.0
    for r in range(k):
        emb = embed_partial_sums(spec, n, delta, seed.child(r))
        rows.append(emb.weights)
        incs.append(np.diff(emb.path))
        y += 2.0 * float(np.abs(emb.partial_sums - emb.brownian_at_integers).max())
        z += 2.0 * float(modulus_statistic(emb.path, delta, window))
    g = passage_time(np.array(rows)).value
    ell = brownian_passage(BrownianGrid(float(n), delta, np.array(incs)))
    stats_ = CouplingGapStats(y, z, g - ell, g, ell)
    if not stats_.holds:
        raise AssertionError(f"coupling inequality violated: |G-L|={abs(g - ell)} > Y+Z={y + z}")
    return stats_


# -- deviation bounds ---------------------------------------------------------------

def fuk_nagaev_bound(x: float, y: float, n: int, sigma2: float, tail_prob_at_y: float) -> float:
    """N P[|X| > y] + 2 exp(-x^2 / (2 (N sigma^2 + x y / 3)))."""
    if min(x, y, n, sigma2) <= 0 or tail_prob_at_y < 0:
        raise ConfigurationError("fuk_nagaev_bound needs positive arguments")
    return n * tail_prob_at_y + 2.0 * math.exp(-(x * x) / (2.0 * (n * sigma2 + x * y / 3.0)))


def reflection_modulus_bound(t: float, n: float, window: float = 2.0) -> float:
    """4 N P[B_{window+1} >= t / 2], the bound on the windowed modulus tail."""
    return 4.0 * n * float(stats.norm.sf(t / 2.0 / math.sqrt(window + 1.0)))


def default_split_exponents(gamma: float) -> tuple[float, float]:
    """Window exponent beta and truncation exponent delta for Weibull-like tails."""
    return (4 * gamma + 4) / (3 * gamma + 2), (2 * gamma + 4) / (3 * gamma + 2)


def stretched_exponent_fit(samples: np.ndarray, upper_fraction: float = 0.1, min_tail: int = 1000) -> float:
    """Exponent theta in P[T > t] ~ exp(-c t^theta) from the upper tail.

    Least squares of log(-log S(t)) on log t over the top ``upper_fraction``
    order statistics, leaving out the last 20 (noisy) ones.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    start = int(math.floor(n * (1.0 - upper_fraction)))
    stop = n - 20
    if stop - start < min_tail:
        raise ConfigurationError("too few tail samples; widen replicates")
    surv = 1.0 - np.arange(start + 1, stop + 1) / n
    t = x[start:stop]
    keep = t > 0
    slope, _ = np.polyfit(np.log(t[keep]), np.log(-np.log(surv[keep])), 1)
    return float(slope)


def exponential_tail_slope(samples: np.ndarray, upper_fraction: float = 0.1) -> float:
    """Slope of log P[T > t] against t over the upper tail (negative for light tails)."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    start = int(math.floor(n * (1.0 - upper_fraction)))
    stop = n - 20
    surv = 1.0 - np.arange(start + 1, stop + 1) / n
    slope, _ = np.polyfit(x[start:stop], np.log(surv), 1)
    return float(slope)


@dataclass
class SawyerReport:
    theta: float
    theta_hat: float
    mean_T: float
    mean_T_se: float
    mean_BT2: float
    davis_p2_holds: bool


def sawyer_tail_check(
    spec: WeightSpec, replicates: int, seed: SeedPath | int = 0, delta: float = MAX_DELTA
) -> SawyerReport:
    """Tail exponent of the embedding time against theta = gamma / (2 + gamma).

    Also reports the p = 2 moment comparison E T <= E B_T^2 / a_2 with
    a_2 = 1 (the Wald identity E T = E B_T^2).
    """
    if not spec.tail_class.startswith("subexp"):
        raise ConfigurationError("sawyer_tail_check needs a subexp(gamma) law")
    gamma = spec.params["gamma"]
    t, v = skorokhod_embed(spec, replicates, delta, seed)
    theta_hat = stretched_exponent_fit(t)
    mean_t = float(t.mean())
    se = float(t.std(ddof=1) / math.sqrt(t.size))
    bt2 = float(np.mean(v**2))
    bt2_se = float(np.std(v**2, ddof=1) / math.sqrt(v.size))
    davis = mean_t <= bt2 + 4.0 * math.hypot(se, bt2_se)
    return SawyerReport(gamma / (2.0 + gamma), theta_hat, mean_t, se, bt2, davis)
