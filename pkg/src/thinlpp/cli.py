"""Command-line entry point: ``thinlpp {simulate,rates,oracle,embed,campaign}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import brownian, campaign, coupling, lattice, meixner, rates
from .weights import ConfigurationError, SeedPath, WeightSpec, normalize


def _weight(args) -> WeightSpec:
    params = {}
    for item in args.param or []:
        key, _, value = item.partition("=")
        if key in ("values", "probs"):
            params[key] = tuple(float(v) for v in value.split(","))
        else:
            params[key] = float(value)
    spec = WeightSpec(args.weight, params)
    return normalize(spec) if args.normalize and not spec.normalized else spec


def _writer(out: str | None):
    if out is None or out == "-":
        return sys.stdout, False
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    return open(out, "w", newline=""), True


def _emit(rows: list[dict], out: str | None) -> None:
    fh, close = _writer(out)
    try:
        if rows:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    finally:
        if close:
            fh.close()


def cmd_simulate(args) -> int:
    seed = SeedPath(args.seed)
    if args.instance:
        res = lattice.passage_time(lattice.load_instance_csv(args.instance), want_path=args.path)
        print(res.to_json())
        return 0
    if args.source == "lattice":
        draws = lattice.sample_passage(_weight(args), args.N, args.k, args.replicates, seed, args.threads)
    elif args.source == "brownian":
        draws = brownian.sample_brownian_passage(args.k, float(args.N), args.delta, args.replicates, seed, args.threads)
    else:
        gue = brownian.sample_L1k_gue(brownian.GueSampleSpec(args.k, args.gue_method), args.replicates, seed, args.threads)
        draws = gue.values
    _emit([{"replicate": i, "value": repr(float(v))} for i, v in enumerate(draws)], args.out)
    print(f"mean={draws.mean():.6g} sd={draws.std(ddof=1) if draws.size > 1 else 0.0:.6g} n={draws.size}", file=sys.stderr)
    return 0


def cmd_rates(args) -> int:
    rows = []
    for eps in args.eps:
        row = {"epsilon": eps, "j_gue": rates.j_gue(eps)}
        row["i_gue"] = rates.i_gue(eps, node_count=args.nodes) if 0 < eps <= 1 else float("nan")
        rows.append(row)
    _emit(rows, args.out)
    return 0


def cmd_oracle(args) -> int:
    params = meixner.MeixnerParams(args.N, args.k, args.q)
    spec = WeightSpec("geometric", {"q": args.q})
    draws = lattice.sample_passage(spec, args.N, args.k, args.replicates, SeedPath(args.seed), args.threads) if args.replicates else None
    rows = []
    for t in range(args.tmax + 1):
        exact = meixner.exact_cdf(params, t)
        row = {"t": t, "exact": exact}
        if draws is not None:
            emp = float(np.mean(draws <= t))
            se = max(np.sqrt(exact * (1 - exact) / draws.size), 1e-300)
            row.update({"monte_carlo": emp, "z": (emp - exact) / se})
        rows.append(row)
    _emit(rows, args.out)
    return 0


def cmd_embed(args) -> int:
    spec = _weight(args)
    seed = SeedPath(args.seed)
    if args.gap:
        rows = []
        for r in range(args.replicates):
            st = coupling.coupling_gap_stats(spec, args.N, args.k, args.delta, seed.child(r))
            rows.append({"replicate": r, "G": st.G, "L": st.L, "G_minus_L": st.G_minus_L, "Y_k": st.Y_k, "Z_k": st.Z_k})
        _emit(rows, args.out)
        return 0
    t, v = coupling.skorokhod_embed(spec, args.replicates, args.delta, seed)
    _emit([{"replicate": i, "T": repr(float(a)), "B_T": repr(float(b))} for i, (a, b) in enumerate(zip(t, v))], args.out)
    d, p = coupling.marginal_ks(spec, v)
    print(f"E[T]={t.mean():.6g} (se {t.std(ddof=1) / np.sqrt(t.size):.2g}) KS={d:.4g} p={p:.3g}", file=sys.stderr)
    return 0


def cmd_campaign(args) -> int:
    cfg_dict = campaign.load_config(args.config)
    if args.seed is not None:
        cfg_dict["master_seed"] = args.seed
    if args.threads is not None:
        cfg_dict["threads"] = args.threads
    if args.out is not None:
        cfg_dict["out"] = args.out
    cfg = campaign.ExperimentConfig.from_dict(cfg_dict)
    result = campaign.run_campaign(cfg)
    print(json.dumps(result.regression, indent=2, sort_keys=True))
    return 1 if result.failures else 0


def _add_weight_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--weight", default="standard-normal", help="weight family")
    p.add_argument("--param", action="append", help="family parameter key=value (values/probs comma separated)")
    p.add_argument("--normalize", action="store_true", help="standardise to mean 0, variance 1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thinlpp", description="Last-passage percolation in thin rectangles")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_default=0):
        p.add_argument("--seed", type=int, default=seed_default)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", default=None, help="output file (default stdout)")

    p = sub.add_parser("simulate", help="draws of G(N, k), grid L(N, k) or GUE lambda_max")
    common(p)
    _add_weight_args(p)
    p.add_argument("--source", choices=["lattice", "brownian", "gue"], default="lattice")
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--gue-method", choices=["tridiagonal", "dense-small"], default="tridiagonal")
    p.add_argument("--instance", help="CSV weight array (k rows, N columns): print G as JSON")
    p.add_argument("--path", action="store_true", help="with --instance, include the maximising path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rates", help="table of J_GUE and I_GUE")
    common(p)
    p.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.2, 0.3, 0.5, 0.8])
    p.add_argument("--nodes", type=int, default=800)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("oracle", help="exact geometric-weight CDF against Monte-Carlo")
    common(p)
    p.add_argument("--N", type=int, default=4)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--tmax", type=int, default=12)
    p.add_argument("--replicates", type=int, default=100_000, help="0 for the exact column only")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("embed", help="Skorokhod embedding draws or coupling-gap statistics")
    common(p)
    _add_weight_args(p)
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--gap", action="store_true", help="per-replicate G, L, Y_k, Z_k instead of (T, B_T)")
    p.add_argument("--N", type=int, default=50)
    p.add_argument("--k", type=int, default=2)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("campaign", help="run a tail campaign from a JSON or YAML config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_campaign)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
