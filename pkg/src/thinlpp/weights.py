"""Weight laws for the lattice model and reproducible random streams.

A :class:`WeightSpec` is a raw law (one of a handful of families) plus an
affine standardisation ``(raw - loc) / scale``.  Moment metadata and the tail
class are derived from the family, so experiment code can check which regime
a law belongs to before running.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import special, stats


class ConfigurationError(ValueError):
    """Invalid distribution parameters or experiment configuration."""


@dataclass(frozen=True)
class SeedPath:
    """Splittable seed: a master seed plus a path of stream identifiers.

    Two different paths under the same master seed give independent streams
    (numpy ``SeedSequence`` spawn keys); the same pair always gives the same
    draws.
    """

    master_seed: int
    stream_path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigurationError("master_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "stream_path", tuple(int(s) for s in self.stream_path))

    def child(self, *ids: int) -> SeedPath:
        return SeedPath(self.master_seed, self.stream_path + tuple(ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=self.stream_path)
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(seed: SeedPath | np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedPath):
        return seed.generator()
    return SeedPath(0 if seed is None else seed).generator()


_ATOM_TOL = 1e-9

# family -> tail class; raw laws are documented in ``_raw_moments``
_TAIL_CLASS = {
    "standard-normal": "gaussian",
    "geometric": "finite-mgf",
    "exponential": "finite-mgf",
    "centered-exponential": "finite-mgf",
    "rademacher": "finite-mgf",
    "weibull-symmetric": "subexp",
    "user-table": "finite-mgf",
}


@dataclass(frozen=True)
class WeightSpec:
    """A weight distribution: ``X = (raw - loc) / scale``.

    Raw laws:

    * ``standard-normal``: N(0, 1).
    * ``geometric``: P[h] = (1 - q) q^h on {0, 1, 2, ...}.
    * ``exponential`` / ``centered-exponential``: Exp(rate); the second name
      is the label given after standardisation.
    * ``rademacher``: +-1 with probability 1/2.
    * ``weibull-symmetric``: R * W with R Rademacher and W Weibull(gamma),
      unit scale, ``0 < gamma < 1``.
    * ``user-table``: finite table of ``values`` with ``probs``.
    """

    family: str
    params: dict[str, Any] = field(default_factory=dict)
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in _TAIL_CLASS:
            raise ConfigurationError(f"unknown weight family {self.family!r}")
        p = self.params
        if self.family == "geometric":
            q = p.get("q")
            if q is None or not 0.0 < q < 1.0:
                raise ConfigurationError("geometric weights need q in (0, 1)")
        elif self.family in ("exponential", "centered-exponential"):
            if not p.get("rate", 1.0) > 0.0:
                raise ConfigurationError("exponential rate must be positive")
        elif self.family == "weibull-symmetric":
            g = p.get("gamma")
            if g is None or not 0.0 < g < 1.0:
                raise ConfigurationError("weibull-symmetric needs gamma in (0, 1)")
        elif self.family == "user-table":
            values = np.asarray(p.get("values", ()), dtype=float)
            probs = np.asarray(p.get("probs", ()), dtype=float)
            if values.ndim != 1 or values.size == 0 or values.shape != probs.shape:
                raise ConfigurationError("user-table needs matching values and probs")
            if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, abs_tol=1e-12):
                raise ConfigurationError("user-table probs must be a probability vector")
        if not self.scale > 0.0:
            raise ConfigurationError("scale must be positive")

    # -- moments -----------------------------------------------------------
    def _raw_moments(self) -> tuple[float, float]:
        p = self.params
        if self.family == "standard-normal":
            return 0.0, 1.0
        if self.family == "geometric":
            q = p["q"]
            return q / (1 - q), q / (1 - q) ** 2
        if self.family in ("exponential", "centered-exponential"):
            r = p.get("rate", 1.0)
            return 1.0 / r, 1.0 / r**2
        if self.family == "rademacher":
            return 0.0, 1.0
        if self.family == "weibull-symmetric":
            return 0.0, float(special.gamma(1.0 + 2.0 / p["gamma"]))
        values = np.asarray(p["values"], dtype=float)
        probs = np.asarray(p["probs"], dtype=float)
        m = float(probs @ values)
        return m, float(probs @ (values - m) ** 2)

    @property
    def mean(self) -> float:
        m, _ = self._raw_moments()
        return (m - self.loc) / self.scale

    @property
    def variance(self) -> float:
        _, v = self._raw_moments()
        return v / self.scale**2

    @property
    def normalized(self) -> bool:
        return abs(self.mean) < 1e-12 and abs(self.variance - 1.0) < 1e-12

    @property
    def tail_class(self) -> str:
        tc = _TAIL_CLASS[self.family]
        if tc == "subexp":
            return f"subexp({self.params['gamma']:g})"
        return tc

    @property
    def is_gaussian(self) -> bool:
        return self.family == "standard-normal" and self.loc == 0.0 and self.scale == 1.0

    # -- sampling ----------------------------------------------------------
    def draw_raw(self, rng: np.random.Generator, size: Any) -> np.ndarray:
        p = self.params
        if self.family == "standard-normal":
            return rng.standard_normal(size)
        if self.family == "geometric":
            return rng.geometric(1.0 - p["q"], size) - 1.0
        if self.family in ("exponential", "centered-exponential"):
            return rng.standard_exponential(size) / p.get("rate", 1.0)
        if self.family == "rademacher":
            return 2.0 * rng.integers(0, 2, size) - 1.0
        if self.family == "weibull-symmetric":
            w = rng.weibull(p["gamma"], size)
            return np.where(rng.integers(0, 2, size) == 1, w, -w)
        return rng.choice(np.asarray(p["values"], float), size=size, p=np.asarray(p["probs"], float))

    def draw(self, rng: np.random.Generator, size: Any) -> np.ndarray:
        x = self.draw_raw(rng, size)
        if self.loc != 0.0 or self.scale != 1.0:
            x = (x - self.loc) / self.scale
        return x

    # -- distribution function (used by goodness-of-fit checks) ------------
    def cdf(self, x: Any) -> np.ndarray:
        # atoms are matched with a small tolerance: standardising and undoing it is not exact
        y = np.asarray(x, dtype=float) * self.scale + self.loc
        p = self.params
        if self.family == "standard-normal":
            return stats.norm.cdf(y)
        if self.family == "geometric":
            h = np.floor(y + _ATOM_TOL)
            return np.where(h < 0, 0.0, 1.0 - p["q"] ** (np.maximum(h, 0) + 1))
        if self.family in ("exponential", "centered-exponential"):
            return np.where(y < 0, 0.0, -np.expm1(-p.get("rate", 1.0) * np.maximum(y, 0)))
        if self.family == "rademacher":
            return np.where(y < -1, 0.0, np.where(y < 1, 0.5, 1.0))
        if self.family == "weibull-symmetric":
            t = 0.5 * np.exp(-np.abs(y) ** p["gamma"])
            return np.where(y < 0, t, 1.0 - t)
        values = np.asarray(p["values"], float)
        probs = np.asarray(p["probs"], float)
        return (probs[None, :] * (values[None, :] <= y.reshape(-1, 1) + _ATOM_TOL)).sum(axis=1).reshape(y.shape)

    # -- (de)serialisation -------------------------------------------------
    def to_config(self) -> dict[str, Any]:
        params = {k: (list(v) if isinstance(v, (tuple, np.ndarray)) else v) for k, v in self.params.items()}
        family = "exponential" if self.family == "centered-exponential" else self.family
        return {"family": family, "params": params, "normalized": self.normalized}

    @classmethod
    def from_config(cls, cfg: dict[str, Any]) -> WeightSpec:
        params = dict(cfg.get("params", {}))
        if "values" in params:
            params["values"] = tuple(params["values"])
            params["probs"] = tuple(params["probs"])
        spec = cls(cfg["family"], params)
        return normalize(spec) if cfg.get("normalized", False) else spec


def normalize(spec: WeightSpec) -> WeightSpec:
    """Affine standardisation to mean 0 and variance 1."""
    m, v = spec._raw_moments()
    if not v > 0.0:
        raise ConfigurationError("cannot standardise a law with zero variance")
    family = "centered-exponential" if spec.family == "exponential" else spec.family
    loc = 0.0 if m == 0.0 else m
    return WeightSpec(family, dict(spec.params), loc=loc, scale=math.sqrt(v))


def standard_normal() -> WeightSpec:
    return WeightSpec("standard-normal")


def geometric(q: float) -> WeightSpec:
    return WeightSpec("geometric", {"q": q})


def centered_exponential(rate: float = 1.0) -> WeightSpec:
    return normalize(WeightSpec("exponential", {"rate": rate}))


def rademacher() -> WeightSpec:
    return WeightSpec("rademacher")


def weibull_symmetric(gamma: float, normalized: bool = True) -> WeightSpec:
    spec = WeightSpec("weibull-symmetric", {"gamma": gamma})
    return normalize(spec) if normalized else spec


def user_table(values: Sequence[float], probs: Sequence[float]) -> WeightSpec:
    return WeightSpec("user-table", {"values": tuple(map(float, values)), "probs": tuple(map(float, probs))})


def sample(spec: WeightSpec, seed: SeedPath | np.random.Generator | int, n: int) -> np.ndarray:
    """``n`` i.i.d. draws of ``spec``; deterministic given ``(spec, seed)``."""
    if n < 0:
        raise ConfigurationError("n must be non-negative")
    return spec.draw(as_generator(seed), n)
