from __future__ import annotations

import json
import math

import numpy as np
import pytest
from scipy import stats

from thinlpp import campaign as CP
from thinlpp import weights as W
from thinlpp.weights import ConfigurationError


def make_cfg(**over):
    base = {
        "weight": {"family": "standard-normal"},
        "schedule": [[1, 100]],
        "epsilon": 0.1,
        "side": "right",
        "replicates": 10_000,
        "master_seed": 3,
    }
    base.update(over)
    return CP.ExperimentConfig.from_dict(base)


@pytest.mark.parametrize("p,n", [(0.01, 1000), (0.3, 200), (0.002, 5000)])
def test_wilson_coverage(p, n):
    rng = np.random.default_rng(int(p * 1e4) + n)
    hits = rng.binomial(n, p, size=1000)
    covered = 0
    for h in hits:
        lo, hi = CP.wilson_interval(int(h), n)
        covered += lo <= p <= hi
    assert covered >= 930


def test_wilson_contains_estimate():
    for s in (1, 5, 50, 99, 100):
        lo, hi = CP.wilson_interval(s, 100)
        assert lo <= s / 100 <= hi


def test_rule_of_three():
    assert CP.wilson_interval(0, 10**6) == (0.0, 3e-6)
    est = CP.tail_from_draws(np.zeros(10**6), 1, 1, 0.5, "right")
    assert est.flagged and est.ci_high == 3e-6 and math.isnan(est.rate)


def test_impossible_event_flagged():
    cfg = make_cfg(weight={"family": "rademacher"}, schedule=[[2, 10]], replicates=5000)
    # G <= N + k - 1 = 11 < 2 sqrt(20) (1 + eps) for eps = 0.3
    est = CP.estimate_tail(cfg, 2, 10, 0.3, 1)
    assert est.successes == 0 and est.flagged and est.p_hat == 0.0


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.3])
def test_gaussian_single_row_exact(eps):
    cfg = make_cfg(replicates=100_000)
    est = CP.estimate_tail(cfg, 1, 100, eps, 2)
    exact = stats.norm.sf(2 * (1 + eps))
    assert abs(est.p_hat - exact) < 3 * math.sqrt(exact * (1 - exact) / est.replicates)
    assert est.rate == pytest.approx(-math.log(est.p_hat))


def test_normalisation_sanity_campaign(tmp_path):
    cfg = make_cfg(schedule=[[1, 10], [1, 100], [1, 1000]], epsilon=[0.1, 0.2], replicates=50_000)
    res = CP.run_campaign(cfg, tmp_path)
    for e in res.estimates:
        exact = stats.norm.sf(2 * (1 + e.epsilon))
        assert abs(e.p_hat - exact) < 3.5 * math.sqrt(exact * (1 - exact) / e.replicates)


def test_left_side_rate_uses_k_squared():
    est = CP.tail_from_draws(np.array([0.0, 10.0, 10.0, 10.0]), 2, 8, 0.5, "left")
    assert est.successes == 1
    assert est.rate == pytest.approx(-math.log(0.25) / 4)


def _synthetic(ks, probs, side="right", eps=0.3):
    return [CP.TailEstimate(k, 10 * k, eps, side, 10, 1000, p, p, p, 0.0) for k, p in zip(ks, probs)]


def test_rate_regression_exact_data():
    ks = [4, 5, 6, 7, 8]
    c = 0.647
    fit = CP.rate_regression(_synthetic(ks, [math.exp(-c * k) for k in ks]), "right")
    assert abs(fit["slope"] - c) < 1e-6 and fit["r2"] == pytest.approx(1.0)
    fit = CP.rate_regression(_synthetic(ks, [math.exp(-0.1 * k * k - 1) for k in ks], "left"), "left")
    assert fit["slope"] == pytest.approx(0.1) and fit["intercept"] == pytest.approx(1.0)


def test_rate_regression_refuses_few_points():
    with pytest.raises(ConfigurationError):
        CP.rate_regression(_synthetic([4, 5, 6], [0.1, 0.05, 0.01]), "right")
    flagged = _synthetic([4, 5, 6, 7], [0.1, 0.05, 0.01, 0.001])
    flagged[-1] = CP.TailEstimate(7, 70, 0.3, "right", 0, 1000, 0.0, 0.0, 0.003, math.nan)
    with pytest.raises(ConfigurationError):
        CP.rate_regression(flagged, "right")


def test_epsilon_fit_recovers_exponent():
    eps = np.arange(0.2, 0.85, 0.1)
    y = 1.3 + 30 * eps**1.5
    ests = [CP.TailEstimate(10, 317, float(e), "right", 100, 10**6, math.exp(-v), 0, 1, 0.0) for e, v in zip(eps, y)]
    fit = CP.epsilon_exponent_fit(ests)
    assert fit["exponent"] == pytest.approx(1.5, abs=1e-3)
    with pytest.raises(ConfigurationError):
        CP.epsilon_exponent_fit(ests[:3])


def test_schedule_rules():
    pairs, _ = CP.expand_schedule({"rule": "klogk", "c": 40, "k": [4, 8, 12]})
    assert pairs == [(4, 320), (8, 960), (12, 1440)]
    pairs, alpha = CP.expand_schedule({"rule": "power", "alpha": 0.4, "k": [10]})
    assert alpha == 0.4 and pairs == [(10, 317)]
    assert math.floor(317**0.4) == 10 and math.floor(316**0.4) == 9
    pairs, _ = CP.expand_schedule({"rule": "power", "alpha": 0.4, "N": [1000]})
    assert pairs == [(15, 1000)]
    pairs, _ = CP.expand_schedule({"rule": "cubic", "c": 2, "k": [2, 3]})
    assert pairs == [(2, 16), (3, 54)]
    with pytest.raises(ConfigurationError):
        CP.expand_schedule({"rule": "nope"})


def test_regime_validation():
    with pytest.raises(ConfigurationError):
        make_cfg(schedule={"rule": "power", "alpha": 0.45, "k": [10]}, regime="thin-power")
    make_cfg(schedule={"rule": "power", "alpha": 0.4, "k": [10]}, regime="thin-power")
    with pytest.raises(ConfigurationError):
        make_cfg(schedule=[[50, 60]], regime="thin-log")
    with pytest.raises(ConfigurationError):
        make_cfg(schedule=[[5, 100]], regime="cube-root")
    with pytest.raises(ConfigurationError):
        make_cfg(regime="gue")
    with pytest.raises(ConfigurationError):
        make_cfg(source="gue", schedule=[[3, 10]])
    with pytest.raises(ConfigurationError):
        make_cfg(replicates=10)
    with pytest.raises(ConfigurationError):
        make_cfg(side="left", epsilon=1.5)


def test_empty_schedule(tmp_path):
    cfg = make_cfg(schedule=[])
    res = CP.run_campaign(cfg, tmp_path)
    assert res.estimates == []
    assert (tmp_path / "estimates.csv").read_text() == ",".join(CP.CSV_HEADER) + "\n"
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["schema_version"] == CP.SCHEMA_VERSION and meta["config"]["master_seed"] == 3
    json.loads((tmp_path / "regression.json").read_text())


def test_campaign_rows_and_determinism(tmp_path):
    cfg = make_cfg(schedule={"rule": "klogk", "c": 5, "k": [2, 3, 4, 5]}, epsilon=[0.1], regime="thin-log", replicates=4000)
    CP.run_campaign(cfg, tmp_path / "a")
    cfg2 = make_cfg(schedule={"rule": "klogk", "c": 5, "k": [2, 3, 4, 5]}, epsilon=[0.1], regime="thin-log", replicates=4000, threads=2)
    CP.run_campaign(cfg2, tmp_path / "b")
    a = (tmp_path / "a" / "estimates.csv").read_bytes()
    assert a == (tmp_path / "b" / "estimates.csv").read_bytes()
    rows = CP.read_estimates(tmp_path / "a" / "estimates.csv")
    assert [(r.k, r.N) for r in rows] == [(2, 10), (3, 30), (4, 40), (5, 50)]
    assert all(r.regime == "thin-log" and r.ci_low <= r.p_hat <= r.ci_high for r in rows)


def test_partial_failure_recorded(tmp_path, monkeypatch):
    real = CP.draw_point

    def flaky(cfg, k, n, seed):
        if k == 3:
            raise RuntimeError("boom")
        return real(cfg, k, n, seed)

    monkeypatch.setattr(CP, "draw_point", flaky)
    res = CP.run_campaign(make_cfg(schedule=[[2, 10], [3, 10], [4, 10]], replicates=2000), tmp_path)
    assert [e.k for e in res.estimates] == [2, 4]
    assert res.failures[0]["k"] == 3
    assert json.loads((tmp_path / "meta.json").read_text())["failures"][0]["k"] == 3


def test_gue_source_left_side(tmp_path):
    cfg = make_cfg(source="gue", schedule=[[2, 1], [3, 1]], side="left", epsilon=0.5, regime="gue", replicates=20_000)
    res = CP.run_campaign(cfg, tmp_path)
    assert all(0 < e.p_hat < 1 for e in res.estimates)


def test_config_files(tmp_path):
    y = tmp_path / "c.yaml"
    y.write_text("weight: {family: rademacher}\nschedule: [[2, 10]]\nepsilon: 0.2\nreplicates: 1000\n")
    cfg = CP.ExperimentConfig.from_dict(CP.load_config(y))
    assert cfg.weight == W.rademacher() and cfg.schedule == [(2, 10)]
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"weight": {"family": "geometric", "params": {"q": 0.5}, "normalized": True}, "schedule": [], "epsilon": [0.1]}))
    cfg = CP.ExperimentConfig.from_dict(CP.load_config(j))
    assert cfg.weight.normalized
