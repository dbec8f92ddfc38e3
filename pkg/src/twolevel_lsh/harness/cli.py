"""Command-line entry point: ``twolevel-lsh {build,query,bench,rho,demo-minhash,gen}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from ..two_level import TwoLevelIndex, TwoLevelParams, build
from .bench import BenchmarkConfig, estimate_rho_report, rho_report, run_recall
from .datasets import gen_planted, gen_planted_hamming, read_fvecs, write_fvecs, write_ivecs
from .minhash import minhash_demo

log = logging.getLogger("twolevel_lsh")

DEFAULTS = {
    "n": 10_000, "d": 64, "c": 2.0, "tau": 2.0**0.5, "variant": "meb", "param_mode": "empirical",
    "tables": None, "trials": 20_000, "seed": 0, "jl": "off", "out": None,
}


def _common(p: argparse.ArgumentParser) -> None:
    # defaults are None so that config-file values are only overridden by explicit flags
    p.add_argument("--config", help="JSON file of option values")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--c", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--variant", choices=["meb", "pivot"])
    p.add_argument("--param-mode", dest="param_mode", choices=["analytic", "empirical"])
    p.add_argument("--tables", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jl", choices=["on", "off"])
    p.add_argument("--out")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twolevel-lsh", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build an index from an fvecs file")
    _common(p)
    p.add_argument("--data", required=True)

    p = sub.add_parser("query", help="query a saved index")
    _common(p)
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)

    p = sub.add_parser("bench", help="recall benchmark on a planted instance")
    _common(p)
    p.add_argument("--queries-count", dest="n_queries", type=int)
    p.add_argument("--no-classic", dest="classic", action="store_false", default=None)

    p = sub.add_parser("rho", help="empirical rho of a family")
    _common(p)
    p.add_argument("--family", choices=["spherical", "ball-carving"])
    p.add_argument("--eta", type=float)

    p = sub.add_parser("demo-minhash", help="min-hash collision rate versus Jaccard")
    _common(p)
    p.add_argument("--s", type=int)
    p.add_argument("--overlap", type=int)

    p = sub.add_parser("gen", help="write a planted instance as fvecs/ivecs")
    _common(p)
    p.add_argument("--queries-count", dest="n_queries", type=int)
    p.add_argument("--hamming", action="store_true", default=None)
    p.add_argument("--radius", type=int, help="Hamming radius r (with --hamming)")
    return parser


_EXTRA_DEFAULTS = {"n_queries": 100, "classic": True, "family": "spherical", "eta": 1.0,
                   "s": 10, "overlap": 5, "hamming": False, "radius": 4}


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then explicit flags."""
    opts = dict(DEFAULTS)
    opts.update({k: v for k, v in _EXTRA_DEFAULTS.items() if hasattr(args, k)})
    allowed = set(opts) | {k for k in vars(args) if k not in ("config", "command", "verbose")}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise SystemExit("config file must hold a JSON object")
        unknown = sorted(set(cfg) - allowed)
        if unknown:
            raise SystemExit(f"unknown config keys: {', '.join(unknown)}")
        opts.update(cfg)
    opts.update({k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command", "verbose")})
    return opts


def _params(o: dict, n: int | None = None) -> TwoLevelParams:
    return TwoLevelParams(c=o["c"], tau=o["tau"], variant=o["variant"], param_mode=o["param_mode"],
                          tables_override=o["tables"], calibration_trials=o["trials"], seed=o["seed"],
                          jl=o["jl"] == "on", n=n)


def cmd_build(o: dict) -> int:
    data = read_fvecs(o["data"])
    index = build(data, _params(o))
    out = o["out"] or "index.npz"
    index.save(out)
    print(f"built {index.R} tables (k={index.plan.k}, T={index.plan.T}) over {data.n} points -> {out}")
    return 0


def cmd_query(o: dict) -> int:
    index = TwoLevelIndex.load(o["index"])
    Q = read_fvecs(o["queries"]).points
    res = index.query_many(Q)
    rows = np.array([[-1 if r.answer is None else r.answer, r.points_examined, r.tables_probed,
                      r.annuli_probed] for r in res], dtype=np.int64).reshape(-1, 4)
    out = o["out"] or "answers.ivecs"
    write_ivecs(out, rows)
    print(f"{int((rows[:, 0] >= 0).sum())}/{len(rows)} queries answered -> {out}")
    return 0


def cmd_bench(o: dict) -> int:
    cfg = BenchmarkConfig(n=o["n"], d=o["d"], c=o["c"], tau=o["tau"], variant=o["variant"],
                          param_mode=o["param_mode"], trials=o["trials"], seed=o["seed"],
                          tables=o["tables"], jl=o["jl"] == "on", n_queries=o["n_queries"],
                          classic=o["classic"], out=o["out"])
    print(run_recall(cfg).to_text())
    return 0


def cmd_rho(o: dict) -> int:
    entry = estimate_rho_report(o["family"], o["c"], o["d"], o["trials"], o["seed"], eta=o["eta"])
    report = rho_report(entry, o["seed"])
    if o["out"]:
        report.write(o["out"])
    print(report.to_text())
    return 0


def cmd_minhash(o: dict) -> int:
    e = minhash_demo(o["s"], o["overlap"], o["trials"], o["seed"])
    print(f"s={e.s} overlap={e.overlap}: collision {e.estimate.p_hat:.5f} +/- {e.estimate.stderr:.5f}, "
          f"jaccard {e.jaccard:.5f}, (1-x)/(1+x) {e.l1_form:.5f}, within 3 sigma: {e.within()}")
    return 0


def cmd_gen(o: dict) -> int:
    prefix = o["out"] or "planted"
    if o["hamming"]:
        inst = gen_planted_hamming(o["n"], o["d"], o["c"], o["radius"], o["seed"], o["n_queries"])
    else:
        inst = gen_planted(o["n"], o["d"], o["c"], o["seed"], o["n_queries"])
    write_fvecs(f"{prefix}_base.fvecs", inst.dataset)
    write_fvecs(f"{prefix}_query.fvecs", inst.queries)
    write_ivecs(f"{prefix}_gt.ivecs", inst.planted[:, None])
    print(f"wrote {prefix}_base.fvecs ({inst.dataset.n} x {inst.dataset.dim}), {prefix}_query.fvecs, "
          f"{prefix}_gt.ivecs; euclidean c={inst.c:.4g} r={inst.r:.4g}")
    return 0


COMMANDS = {"build": cmd_build, "query": cmd_query, "bench": cmd_bench, "rho": cmd_rho,
            "demo-minhash": cmd_minhash, "gen": cmd_gen}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](resolve(args))
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
