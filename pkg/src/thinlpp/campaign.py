"""Monte-Carlo tail campaigns: schedules, tail estimates and rate regressions."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import optimize

from . import rates
from .brownian import GueSampleSpec, sample_L1k_gue
from .lattice import sample_passage
from .weights import ConfigurationError, SeedPath, WeightSpec

log = logging.getLogger(__name__)

CSV_HEADER = ["k", "N", "epsilon", "side", "successes", "replicates", "p_hat", "ci_low", "ci_high", "rate", "regime"]
SCHEMA_VERSION = 1
WILSON_Z = 1.959963984540054
MIN_REPLICATES = 1000
POWER_ALPHA_MAX = 3.0 / 7.0
REGIMES = ("thin-log", "thin-power", "cube-root", "gue", "free")


# -- schedules -------------------------------------------------------------------

def _power_n(k: int, alpha: float) -> int:
    """Smallest N with floor(N^alpha) >= k."""
    n = max(1, math.floor(k ** (1.0 / alpha)))
    while math.floor(n**alpha + 1e-12) < k:
        n += 1
    return n


def expand_schedule(schedule: Any) -> tuple[list[tuple[int, int]], float | None]:
    """Turn a schedule (explicit pairs or a rule) into (k, N) pairs.

    Rules: ``{"rule": "klogk", "c", "k"}`` gives N = c k ceil(log k);
    ``{"rule": "power", "alpha", "k" | "N"}`` ties k = floor(N^alpha);
    ``{"rule": "cubic", "c", "k"}`` gives N = c k^3.  Returns the pairs and
    the power exponent when there is one.
    """
    if schedule is None:
        return [], None
    if isinstance(schedule, (list, tuple)):
        return [(int(k), int(n)) for k, n in schedule], None
    rule = schedule.get("rule")
    if rule == "klogk":
        c = float(schedule.get("c", 40))
        return [(int(k), int(round(c * k * math.ceil(math.log(k))))) for k in schedule["k"]], None
    if rule == "power":
        alpha = float(schedule["alpha"])
        if not 0 < alpha < 1:
            raise ConfigurationError("power rule needs 0 < alpha < 1")
        if "N" in schedule:
            pairs = [(math.floor(n**alpha + 1e-12), int(n)) for n in schedule["N"]]
        else:
            pairs = [(int(k), _power_n(int(k), alpha)) for k in schedule["k"]]
        return pairs, alpha
    if rule == "cubic":
        c = float(schedule.get("c", 1))
        return [(int(k), int(round(c * k**3))) for k in schedule["k"]], None
    raise ConfigurationError(f"unknown schedule rule {rule!r}")


@dataclass
class ExperimentConfig:
    weight: WeightSpec
    schedule: list[tuple[int, int]]
    epsilons: list[float]
    side: str = "right"
    source: str = "lattice"
    replicates: int = 10_000
    master_seed: int = 0
    out: str = "campaign-out"
    regime: str = "free"
    threads: int = 1
    alpha: float | None = None
    raw_schedule: Any = None

    def __post_init__(self) -> None:
        if self.side not in ("right", "left"):
            raise ConfigurationError("side must be 'right' or 'left'")
        if self.source not in ("lattice", "gue"):
            raise ConfigurationError("source must be 'lattice' or 'gue'")
        if self.regime not in REGIMES:
            raise ConfigurationError(f"regime must be one of {REGIMES}")
        if self.replicates < MIN_REPLICATES:
            raise ConfigurationError(f"replicates must be >= {MIN_REPLICATES}")
        if any(e <= 0 for e in self.epsilons) or not self.epsilons:
            raise ConfigurationError("epsilons must be positive")
        if self.side == "left" and any(e >= 1 for e in self.epsilons):
            raise ConfigurationError("left-tail epsilons must lie in (0, 1)")
        for k, n in self.schedule:
            if k < 1 or n < 1:
                raise ConfigurationError("schedule points need k, N >= 1")
            if self.source == "gue" and n != 1:
                raise ConfigurationError("the GUE source realises L(1, k): use N = 1")
        self.check_regime()

    def check_regime(self) -> None:
        """Refuse schedules that do not fit the declared regime."""
        for k, n in self.schedule:
            if self.regime == "thin-log" and n > 1 and k * math.log(n) / n > 1.0:
                raise ConfigurationError(f"(k={k}, N={n}) has k log N / N > 1")
            if self.regime == "thin-power":
                alpha = self.alpha if self.alpha is not None else math.log(k) / math.log(n) if n > 1 else 0.0
                if alpha >= POWER_ALPHA_MAX:
                    raise ConfigurationError(f"power regime needs alpha < 3/7, got {alpha:.4f}")
            if self.regime == "cube-root" and k**3 > n:
                raise ConfigurationError(f"(k={k}, N={n}) has k^3 > N")
            if self.regime == "gue" and self.source != "gue":
                raise ConfigurationError("regime 'gue' needs source 'gue'")

    @classmethod
    def from_dict(cls, cfg: dict[str, Any]) -> ExperimentConfig:
        weight = WeightSpec.from_config(cfg.get("weight", {"family": "standard-normal"}))
        pairs, alpha = expand_schedule(cfg.get("schedule"))
        eps = cfg.get("epsilon", cfg.get("epsilons"))
        eps = [float(e) for e in (eps if isinstance(eps, (list, tuple)) else [eps])]
        return cls(
            weight=weight,
            schedule=pairs,
            epsilons=eps,
            side=cfg.get("side", "right"),
            source=cfg.get("source", "lattice"),
            replicates=int(cfg.get("replicates", 10_000)),
            master_seed=int(cfg.get("master_seed", 0)),
            out=str(cfg.get("out", "campaign-out")),
            regime=cfg.get("regime", "free"),
            threads=int(cfg.get("threads", 1)),
            alpha=alpha,
            raw_schedule=cfg.get("schedule"),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "weight": self.weight.to_config(),
            "schedule": self.raw_schedule if self.raw_schedule is not None else [list(p) for p in self.schedule],
            "points": [list(p) for p in self.schedule],
            "epsilon": self.epsilons,
            "side": self.side,
            "source": self.source,
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "out": self.out,
            "regime": self.regime,
            "threads": self.threads,
        }


def load_config(path: str | Path) -> dict[str, Any]:
    """Read a JSON or YAML config file."""
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        return yaml.safe_load(text) or {}
    return json.loads(text)


# -- estimates ----------------------------------------------------------------

@dataclass
class TailEstimate:
    k: int
    N: int
    epsilon: float
    side: str
    successes: int
    replicates: int
    p_hat: float
    ci_low: float
    ci_high: float
    rate: float
    regime: str = "free"

    @property
    def flagged(self) -> bool:
        return self.successes == 0

    def row(self) -> list[str]:
        return [
            str(self.k),
            str(self.N),
            repr(self.epsilon),
            self.side,
            str(self.successes),
            str(self.replicates),
            repr(self.p_hat),
            repr(self.ci_low),
            repr(self.ci_high),
            repr(self.rate),
            self.regime,
        ]


def wilson_interval(successes: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Wilson score interval; with no successes the upper end is the rule-of-three 3/n."""
    if n <= 0 or not 0 <= successes <= n:
        raise ConfigurationError("need 0 <= successes <= n and n > 0")
    if successes == 0:
        return 0.0, 3.0 / n
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half))


def threshold(k: int, n: int, epsilon: float, side: str) -> float:
    sign = 1.0 if side == "right" else -1.0
    return 2.0 * math.sqrt(n * k) * (1.0 + sign * epsilon)


def tail_from_draws(draws: np.ndarray, k: int, n: int, epsilon: float, side: str, regime: str = "free") -> TailEstimate:
    thr = threshold(k, n, epsilon, side)
    hits = int(np.count_nonzero(draws >= thr if side == "right" else draws <= thr))
    total = int(draws.size)
    p_hat = hits / total
    lo, hi = wilson_interval(hits, total)
    speed = k if side == "right" else k * k
    rate = -math.log(p_hat) / speed if hits else math.nan
    return TailEstimate(k, n, epsilon, side, hits, total, p_hat, lo, hi, rate, regime)


def draw_point(cfg: ExperimentConfig, k: int, n: int, seed: SeedPath) -> np.ndarray:
    if cfg.source == "gue":
        return sample_L1k_gue(GueSampleSpec(k), cfg.replicates, seed, cfg.threads).values
    return sample_passage(cfg.weight, n, k, cfg.replicates, seed, cfg.threads)


def estimate_tail(cfg: ExperimentConfig, k: int, n: int, epsilon: float, seed: SeedPath | int = 0) -> TailEstimate:
    """Tail probability of G(N, k) (or L(1, k)) beyond 2 sqrt(N k)(1 +- eps)."""
    seed = seed if isinstance(seed, SeedPath) else SeedPath(seed)
    return tail_from_draws(draw_point(cfg, k, n, seed), k, n, epsilon, cfg.side, cfg.regime)


# -- regressions -----------------------------------------------------------------

def rate_regression(estimates: list[TailEstimate], side: str) -> dict[str, float]:
    """Least squares of -log p_hat on k (right) or k^2 (left) over unflagged points."""
    pts = sorted((e for e in estimates if not e.flagged), key=lambda e: e.k)
    ks = [e.k for e in pts]
    if len(pts) < 4 or len(set(ks)) < 4:
        raise ConfigurationError("rate regression needs at least 4 unflagged points with distinct k")
    x = np.array(ks, dtype=float) ** (1 if side == "right" else 2)
    y = -np.log([e.p_hat for e in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2, "points": len(pts)}


def epsilon_exponent_fit(estimates: list[TailEstimate]) -> dict[str, float]:
    """Fit -log p_hat = a + b eps^c at a fixed k over unflagged points.

    The additive ``a`` absorbs the polynomial prefactor of the tail, which a
    plain log-log slope would fold into the exponent.
    """
    pts = sorted((e for e in estimates if not e.flagged), key=lambda e: e.epsilon)
    if len({e.k for e in estimates}) > 1:
        raise ConfigurationError("epsilon fit needs a single k")
    if len(pts) < 4:
        raise ConfigurationError("epsilon fit needs at least 4 unflagged points")
    eps = np.array([e.epsilon for e in pts])
    y = -np.log([e.p_hat for e in pts])
    sigma = np.array([math.sqrt((1 - e.p_hat) / e.successes) for e in pts])  # delta-method s.e. of log p
    model = lambda e, a, b, c: a + b * e**c
    (a, b, c), _ = optimize.curve_fit(model, eps, y, p0=(0.0, y[-1], 1.5), sigma=sigma, maxfev=20000)
    slope = float(np.polyfit(np.log(eps), np.log(y), 1)[0])
    return {"exponent": float(c), "a": float(a), "b": float(b), "loglog_slope": slope, "points": len(pts)}


def reference_rate(epsilon: float, side: str) -> float:
    return rates.j_gue(epsilon) if side == "right" else rates.i_gue(epsilon)


# -- campaigns --------------------------------------------------------------------

@dataclass
class CampaignResult:
    estimates: list[TailEstimate]
    regression: dict[str, Any]
    failures: list[dict[str, Any]] = field(default_factory=list)


def estimates_csv(estimates: list[TailEstimate]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for e in estimates:
        writer.writerow(e.row())
    return buf.getvalue()


def read_estimates(path: str | Path) -> list[TailEstimate]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        TailEstimate(
            int(r["k"]), int(r["N"]), float(r["epsilon"]), r["side"], int(r["successes"]), int(r["replicates"]),
            float(r["p_hat"]), float(r["ci_low"]), float(r["ci_high"]), float(r["rate"]), r["regime"],
        )
        for r in rows
    ]


def run_campaign(cfg: ExperimentConfig, out: str | Path | None = None) -> CampaignResult:
    """Run every schedule point, then write estimates.csv, regression.json and meta.json.

    Point ``p`` draws from stream ``(master_seed, p)`` and all epsilons share
    those draws, so reruns with the same seed are byte-identical.
    """
    out_dir = Path(out if out is not None else cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    root = SeedPath(cfg.master_seed)
    estimates: list[TailEstimate] = []
    failures = []
    for p, (k, n) in enumerate(cfg.schedule):
        try:
            draws = draw_point(cfg, k, n, root.child(p))
        except Exception as exc:  # recorded, campaign continues
            log.warning("point (k=%d, N=%d) failed: %s", k, n, exc)
            failures.append({"k": k, "N": n, "error": repr(exc)})
            continue
        for eps in cfg.epsilons:
            estimates.append(tail_from_draws(draws, k, n, eps, cfg.side, cfg.regime))
        log.info("point k=%d N=%d done", k, n)

    regression: dict[str, Any] = {"side": cfg.side, "by_epsilon": {}, "epsilon_fit": {}}
    for eps in cfg.epsilons:
        subset = [e for e in estimates if e.epsilon == eps]
        entry: dict[str, Any] = {"reference": reference_rate(eps, cfg.side)}
        try:
            entry.update(rate_regression(subset, cfg.side))
            entry["relative_error"] = entry["slope"] / entry["reference"] - 1.0
        except ConfigurationError as exc:
            entry["error"] = str(exc)
        regression["by_epsilon"][repr(eps)] = entry
    for k in sorted({e.k for e in estimates}):
        subset = [e for e in estimates if e.k == k]
        if len(subset) < 2:
            continue
        try:
            regression["epsilon_fit"][str(k)] = epsilon_exponent_fit(subset)
        except (ConfigurationError, RuntimeError) as exc:
            regression["epsilon_fit"][str(k)] = {"error": str(exc)}

    (out_dir / "estimates.csv").write_text(estimates_csv(estimates))
    (out_dir / "regression.json").write_text(json.dumps(regression, indent=2, sort_keys=True))
    meta = {
        "schema_version": SCHEMA_VERSION,
        "csv_header": CSV_HEADER,
        "config": cfg.to_dict(),
        "point_seeds": [{"k": k, "N": n, "stream": [cfg.master_seed, p]} for p, (k, n) in enumerate(cfg.schedule)],
        "failures": failures,
        "wall_time_s": time.perf_counter() - start,
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return CampaignResult(estimates, regression, failures)


