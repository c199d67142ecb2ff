"""Command-line interface: ``pathwise-monotone <subcommand> [options]``.

Subcommands ``sew``, ``young``, ``localtime``, ``solve``, ``run <config>`` and
``table <config>``; global options ``--seed``, ``--out`` and ``--tol``.  The
exit status is 0 exactly when every audit of the invoked command passes,
1 when an audit fails and 2 for invalid input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from ..grid_paths import PathError, TimeGrid, generate_fbm
from ..monotone_pde import DriverError, SolverError, solve
from ..occupation import SpatialBins, local_time, occupation_formula_check
from ..sewing import SewingError, power_germ, sew
from ..young import pair
from .config import ConfigError, ScenarioConfig, parse_config, validate
from .scenarios import (
    _energy_ok,
    _energy_rows,
    _jsonable,
    build_driver,
    build_triple,
    convergence_table,
    initial_pair,
    run_scenario,
    smooth_product_germ,
)

STUDY_RATES = {
    "heat": (0.9, 1.1),
    "sewing_left_point": (0.9, math.inf),
}


def _emit(payload: dict) -> None:
    print(json.dumps(_jsonable(payload), indent=2, sort_keys=True))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sew(args) -> int:
    grid = TimeGrid(0.0, 1.0, args.n)
    if args.germ == "product":
        germ, exact = smooth_product_germ()
    else:
        germ, exact = power_germ(args.exponent), 0.0
    res = sew(germ, grid, tol=args.tol, max_level=args.max_level, remainder_lags=None)
    value = float(res.sewn.values[-1, 0])
    err = abs(value - exact)
    thr = 1e-6 * (1 + abs(exact)) if args.germ == "product" else 1e-10
    out = _out_dir(args)
    res.sewn.to_csv(out / "sewn.csv", kind="sewn")
    res.diagnostics_to_csv(out / "sewing_diagnostics.csv")
    ok = bool(res.converged and err <= thr)
    _emit({"germ": germ.name, "value": value, "oracle": exact, "error": err, "threshold": thr,
           "levels_used": res.levels_used, "converged": res.converged, "passed": ok})
    return 0 if ok else 1


def cmd_young(args) -> int:
    X = generate_fbm(args.seed, args.H, TimeGrid(0.0, 1.0, args.n))
    S = pair(X, X, tol=args.tol)
    x = X.scalar
    gap = abs(S.scalar[-1] - 0.5 * (x[-1] ** 2 - x[0] ** 2))
    thr = 1e-3 * float(np.max(np.abs(x))) ** 2
    out = _out_dir(args)
    S.to_csv(out / "young_pairing.csv", kind="young_pairing")
    ok = bool(gap <= thr)
    _emit({"seed": args.seed, "H": args.H, "n": args.n, "chain_rule_gap": gap, "threshold": thr, "passed": ok})
    return 0 if ok else 1


def cmd_localtime(args) -> int:
    w = generate_fbm(args.seed, args.H, TimeGrid(0.0, 1.0, args.n))
    bins = SpatialBins.covering(w, args.m)
    L = local_time(w, bins)
    rep = occupation_formula_check(lambda z: z**2, w, w.grid.n, bins)
    out = _out_dir(args)
    L.to_csv(out / "local_time.csv", every=max(1, args.n // 64))
    ok = bool(rep.relative_gap <= 1e-2 and abs(L.mass(w.grid.n) - w.grid.length) <= 1e-12)
    _emit({"seed": args.seed, "H": args.H, "bins": args.m, "time_side": rep.time_side,
           "space_side": rep.space_side, "relative_gap": rep.relative_gap, "passed": ok})
    return 0 if ok else 1


def cmd_solve(args) -> int:
    cfg = ScenarioConfig(
        scenario="S1", operator=args.operator, p=args.p, m=args.m, driver=args.driver, H=args.H,
        n=args.n, d=args.d, seeds=[args.seed], newton_tol=args.newton_tol,
    )
    errs = validate(cfg)
    if errs:
        raise ConfigError(errs)
    triple = build_triple(cfg)
    grid = TimeGrid(0.0, cfg.T, cfg.n)
    u0, _ = initial_pair(triple)
    driver = build_driver(cfg, triple, grid, args.seed)
    rep = solve(triple, driver, u0, grid, newton_tol=cfg.newton_tol)
    out = _out_dir(args)
    rep.to_csv(out / "trace.csv")
    rep.to_json(out / "report.json")
    ok = bool(rep.finite and _energy_ok(_energy_rows(rep, triple.ip)) and rep.bound_audit["finite"])
    _emit({**rep.summary(), "passed": ok})
    return 0 if ok else 1


def _load_config(args) -> ScenarioConfig:
    cfg = parse_config(Path(args.config).read_text())
    if args.seed_given:
        cfg.seeds = [args.seed]
    if args.tol_given:
        cfg.tol = args.tol
    return cfg


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = args.out if args.out_given else cfg.out
    manifest = run_scenario(cfg, out)
    failed = {
        str(r["seed"]): [k for k, v in r["flags"].items() if not v] for r in manifest.runs
    }
    _emit({"scenario": manifest.scenario, "config_hash": manifest.config_hash,
           "manifest": str(Path(manifest.out_dir) / "manifest.json"),
           "failed_flags": {k: v for k, v in failed.items() if v}, "passed": manifest.passed})
    return 0 if manifest.passed else 1


def cmd_table(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out if args.out_given else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"table_{cfg.study}.csv"
    rows = convergence_table(cfg, path=path)
    rates = [r["rate"] for r in rows if r["rate"] not in ("", "exact")]
    if cfg.study == "chain_rule_identity":
        ok = all(r["rate"] == "exact" for r in rows)
    else:
        lo, hi = STUDY_RATES[cfg.study]
        ok = bool(rates) and all(lo <= r <= hi for r in rates)
    _emit({"study": cfg.study, "table": str(path), "rows": rows, "passed": ok})
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 1)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default runs)")
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS, help="sewing tolerance (default 1e-10)")
    parser = argparse.ArgumentParser(prog="pathwise-monotone", parents=[common], description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sew", parents=[common], help="sew a smooth product germ or a power germ")
    p.add_argument("--germ", choices=("product", "power"), default="product")
    p.add_argument("--exponent", type=float, default=2.0)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--max-level", type=int, default=14)
    p.set_defaults(func=cmd_sew)

    p = sub.add_parser("young", parents=[common], help="Young chain-rule check on a scalar fBm")
    p.add_argument("--H", type=float, default=0.75)
    p.add_argument("--n", type=int, default=2**14)
    p.set_defaults(func=cmd_young)

    p = sub.add_parser("localtime", parents=[common], help="local time field and occupation-times check")
    p.add_argument("--H", type=float, default=0.4)
    p.add_argument("--n", type=int, default=2**14)
    p.add_argument("--m", type=int, default=512)
    p.set_defaults(func=cmd_localtime)

    p = sub.add_parser("solve", parents=[common], help="single semi-implicit solve with audits")
    p.add_argument("--operator", choices=("p_laplace", "porous_medium", "zero"), default="p_laplace")
    p.add_argument("--p", type=float, default=3.0)
    p.add_argument("--m", type=float, default=2.0)
    p.add_argument("--driver", choices=("additive_fbm", "young", "linear_mult", "none"), default="additive_fbm")
    p.add_argument("--H", type=float, default=0.75)
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--newton-tol", type=float, default=1e-12)
    p.set_defaults(func=cmd_solve)

    for name, fn, helptext in (("run", cmd_run, "run a scenario config"), ("table", cmd_table, "convergence table")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("config", help="YAML scenario config")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = hasattr(args, "seed")
    args.out_given = hasattr(args, "out")
    args.tol_given = hasattr(args, "tol")
    args.seed = getattr(args, "seed", 1)
    args.out = getattr(args, "out", "runs")
    args.tol = getattr(args, "tol", 1e-10)
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    except (PathError, SewingError, DriverError, SolverError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
