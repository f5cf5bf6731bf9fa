"""``ogp-lab`` command line.

Exit codes: 0 ok, 2 configuration or input error, 3 budget exceeded.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import harness as hs
from . import io as kio
from . import rules as _rules
from .factor_graph import build_factor_graph
from .ksat import count_satisfied, sample_formula

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3


def _ensemble(args) -> tuple[int, int, int, float | None]:
    if args.n is None or args.k is None:
        raise hs.ConfigError("--n and --k are required")
    if (args.m is None) == (args.alpha is None):
        raise hs.ConfigError("give exactly one of --m or --alpha")
    m = math.floor(args.alpha * args.n) if args.alpha is not None else args.m
    return args.n, m, args.k, args.alpha


def _add_ensemble(p, need_k=True):
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=need_k)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--m", type=int)
    g.add_argument("--alpha", type=float)


def _rule_params(pairs) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise hs.ConfigError(f"rule parameter {item!r} is not key=value")
        out[key] = hs._value(val)
    return out


def _config(kind, args, rule, params=None, seeds=(), **options) -> hs.ExperimentConfig:
    n, m, k, alpha = _ensemble(args)
    return hs.ExperimentConfig(kind=kind, n=n, m=m, k=k, alpha=alpha, rule=rule,
                               rule_params=params or {}, seeds=tuple(seeds),
                               kappa=getattr(args, "kappa", None), D=getattr(args, "D", None),
                               options={key: v for key, v in options.items() if v is not None})


def _seeds(values) -> tuple:
    return hs.parse_seeds(",".join(values))


def _records_status(records) -> int:
    return EXIT_BUDGET if any(r.status == "budget_exceeded" for r in records) else EXIT_OK


# ------------------------------------------------------------------ gen


def cmd_gen(args) -> int:
    if args.input:
        data = Path(args.input)
        if data.suffix == ".ksat" or data.read_bytes()[:5] == kio.MAGIC:
            phi = kio.read_binary(data)
        else:
            phi = kio.read_dimacs(data, strict=args.strict)
    else:
        n, m, k, _ = _ensemble(args)
        phi = sample_formula(n, m, k, [args.seed, 0])
    if args.format == "binary":
        if not args.out:
            raise hs.ConfigError("binary output needs --out")
        kio.write_binary(phi, args.out)
    else:
        text = kio.to_dimacs(phi, allow_dups=args.allow_dups)
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
    if args.graph_dump:
        g = build_factor_graph(phi, [args.seed, 1])
        Path(args.graph_dump).write_text(g.dump())
    return EXIT_OK


# ------------------------------------------------------------------ run


def cmd_run(args) -> int:
    if args.config:
        cfg = hs.load_config(args.config)
        records = hs.run_experiment(cfg, args.out or cfg.outputs.get("records"))
        for r in records:
            print(json.dumps({"seed": r.seed, "status": r.status, **{
                key: v for key, v in r.metrics.items() if not isinstance(v, (list, dict))}}))
        return _records_status(records)
    if not args.rule:
        raise hs.ConfigError("run needs --config or --rule")
    from .local_engine import (LocalRule, MemoryRule, r_local_simulation, run_local,
                               run_local_memory, run_sequential_local)

    n, m, k, _ = _ensemble(args)
    params = _rule_params(args.param)
    try:
        rule = _rules.get_rule(args.rule, **params)
    except TypeError as exc:
        raise hs.ConfigError(f"rule {args.rule!r} rejects parameters {params}: {exc}") from None
    phi = sample_formula(n, m, k, [args.seed, 0])
    g = build_factor_graph(phi, [args.seed, 1])
    engine = args.engine
    t0 = time.perf_counter()
    if engine == "local":
        if not isinstance(rule, LocalRule):
            raise hs.ConfigError(f"rule {args.rule!r} is a memory rule; use --engine memory")
        x = hs.apply_rule(rule, g)
    elif engine == "memory":
        if not isinstance(rule, MemoryRule):
            raise hs.ConfigError(f"rule {args.rule!r} is not a memory rule")
        x = run_local_memory(rule, g)
    elif engine == "sequential":
        if not isinstance(rule, LocalRule) or rule.codomain != "probability":
            raise hs.ConfigError("the sequential engine needs a probability-valued local rule")
        x = run_sequential_local(rule, g)
    elif engine.startswith("simulate:"):
        if not isinstance(rule, MemoryRule):
            raise hs.ConfigError("simulate:R needs a memory rule")
        try:
            R = int(engine.split(":", 1)[1])
        except ValueError:
            raise hs.ConfigError(f"bad engine {engine!r}") from None
        try:
            x = run_local(r_local_simulation(rule, R), g)
        except ValueError as exc:
            raise hs.ConfigError(str(exc)) from None
    else:
        raise hs.ConfigError(f"unknown engine {engine!r}")
    wall = time.perf_counter() - t0
    sat = hs.sat_eta_objective(x, phi, args.eta)
    out = {
        "manifest": _rules.manifest(args.rule, **params), "engine": engine,
        "n": n, "m": m, "k": k, "seed": args.seed,
        "unsat_fraction": 1.0 - count_satisfied(x, phi) / max(m, 1),
        "err_fraction": float(np.mean(x == 0)), "sat_eta": sat.value, "sat_eta_exact": sat.exact,
        "eta": args.eta, "wall_time": wall,
    }
    if args.save_assignment:
        out["assignment"] = x.tolist()
    text = json.dumps(out, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


# ------------------------------------------------------------------ fix1


def cmd_fix1(args) -> int:
    cfg = _config("fix1", args, "fix1", seeds=_seeds(args.seeds), check_memory=args.check_memory or None)
    records = hs.run_experiment(cfg, args.records)
    cols = ["seed", "unsat_fraction", "z_fraction", "wall_time"] + (["memory_agrees"] if args.check_memory else [])
    if args.report == "json":
        for r in records:
            print(json.dumps({"seed": r.seed, "status": r.status, "wall_time": r.wall_time, **r.metrics}))
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            row = {"seed": r.seed, "wall_time": f"{r.wall_time:.4f}", **r.metrics}
            w.writerow([row.get(c, "") for c in cols])
    return _records_status(records)


# ------------------------------------------------------------------ interpolate / scan


def _write_steps(metrics, out):
    if out:
        hs.write_step_csv(out, metrics)
        return
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(hs.STEP_COLUMNS)
    for row in zip(*(metrics[c] for c in hs.STEP_COLUMNS)):
        w.writerow(row)


def _scan_summary(m: dict) -> dict:
    return {key: m[key] for key in ("found", "ts", "entropies", "trace_length", "max_entropy", "crossed",
                                    "band", "sequence")}


def cmd_interpolate(args) -> int:
    params = _rule_params(args.param)
    kind = "scan" if args.measure == "scan" else "interpolate"
    cfg = _config(kind, args, args.alg, params, seeds=[args.seed], mode=args.mode, stride=args.stride,
                  steps=args.steps, c=args.c, branch=args.branch)
    (rec,) = hs.run_experiment(cfg, args.records)
    if rec.status != "ok":
        print(rec.message, file=sys.stderr)
        return EXIT_BUDGET
    _write_steps(rec.metrics, args.out)
    if args.measure == "c-bad":
        print(json.dumps({"c_bad": rec.metrics["c_bad"], "gamma_hat": rec.metrics["gamma_hat"]}), file=sys.stderr)
    elif args.measure == "scan":
        print(json.dumps(_scan_summary(rec.metrics)), file=sys.stderr)
    return EXIT_OK


def cmd_scan(args) -> int:
    params = _rule_params(args.param)
    cfg = _config("scan", args, args.alg, params, seeds=_seeds(args.seeds), mode=args.mode,
                  stride=args.stride, steps=args.steps)
    records = hs.run_experiment(cfg, args.records)
    for r in records:
        print(json.dumps({"seed": r.seed, "status": r.status,
                          **(_scan_summary(r.metrics) if r.status == "ok" else {"message": r.message})}))
        if args.out and r.status == "ok":
            hs.write_step_csv(Path(args.out) / f"scan_{r.seed}.csv", r.metrics)
    return _records_status(records)


# ------------------------------------------------------------------ simulate-ldp


def cmd_simulate_ldp(args) -> int:
    params = _rule_params(args.param)
    if args.radius is not None:
        params["radius"] = args.radius
    cfg = _config("simulate-ldp", args, args.rule, params, seeds=_seeds(args.seeds))
    records = hs.run_experiment(cfg, args.records)
    bad = 0
    for r in records:
        print(json.dumps({"seed": r.seed, "status": r.status, **r.metrics}))
        bad += r.metrics.get("mismatches", 0)
    status = _records_status(records)
    if args.check_match:
        checked = sum(r.metrics.get("checked", 0) for r in records)
        print(f"match: {'ok' if bad == 0 else 'FAIL'} ({bad} mismatches over {checked} checked coordinates)")
        if bad and status == EXIT_OK:
            return EXIT_FAIL
    return status


# ------------------------------------------------------------------ constants / report


def cmd_constants(args) -> int:
    from .constants import constants_table, format_table

    psi_n = tuple(args.psi) if args.psi else (1, 2)
    chern = None
    if args.chernoff:
        k, samples = args.chernoff
        chern = (int(k), int(samples))
    try:
        rows = constants_table(args.kappa, psi_n, chern, seed=args.seed)
    except ValueError as exc:
        raise hs.ConfigError(str(exc)) from None
    print(format_table(rows))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        records = hs.read_records(args.records)
    except OSError as exc:
        raise hs.ConfigError(f"cannot read records: {exc}") from None
    for p in hs.emit_report(records, args.out, format=args.format):
        print(p)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ogp-lab", description="Random k-SAT laboratory.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample a formula or convert one between formats")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--m", type=int)
    g.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input", help="convert this DIMACS or KSAT1 file instead of sampling")
    p.add_argument("--strict", action="store_true", help="reject tautological clauses on import")
    p.add_argument("--format", choices=("dimacs", "binary"), default="dimacs")
    p.add_argument("--allow-dups", action="store_true", help="keep repeated literals in DIMACS output")
    p.add_argument("--graph-dump", help="also write the decorated factor graph dump here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="one engine run, or every seed of a config file")
    p.add_argument("--config")
    p.add_argument("--rule")
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--engine", default="local", help="local | memory | sequential | simulate:R")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--m", type=int)
    g.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--save-assignment", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fix1", help="Fix1 across seeds")
    _add_ensemble(p)
    p.add_argument("--seeds", nargs="+", default=["0"])
    p.add_argument("--report", choices=("csv", "json"), default="csv")
    p.add_argument("--check-memory", action="store_true", help="also run the memory-rule form and compare")
    p.add_argument("--records", help="append JSONL run records here")
    p.set_defaults(func=cmd_fix1)

    p = sub.add_parser("interpolate", help="run a rule along an interpolation path")
    _add_ensemble(p)
    p.add_argument("--mode", choices=("path", "branched"), default="path")
    p.add_argument("--alg", required=True)
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--measure", choices=("entropy-trace", "c-bad", "scan"), default="entropy-trace")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--steps", type=int)
    p.add_argument("--branch", type=int)
    p.add_argument("--c", type=float)
    p.add_argument("--kappa", type=float, default=6.0)
    p.add_argument("--records")
    p.add_argument("--out", help="per-step CSV (default stdout)")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("scan", help="look for an entropy-band constellation along interpolations")
    _add_ensemble(p)
    p.add_argument("--alg", default="fix1")
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--mode", choices=("path", "branched"), default="branched")
    p.add_argument("--kappa", type=float, default=6.0)
    p.add_argument("--seeds", nargs="+", default=["0"])
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--steps", type=int)
    p.add_argument("--records")
    p.add_argument("--out", help="directory for per-seed scan CSVs")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("simulate-ldp", help="degree-D simulation against the D-truncated rule")
    _add_ensemble(p)
    p.add_argument("--rule", required=True)
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--D", type=int, required=True)
    p.add_argument("--radius", type=int)
    p.add_argument("--seeds", nargs="+", default=["0"])
    p.add_argument("--check-match", action="store_true")
    p.add_argument("--records")
    p.set_defaults(func=cmd_simulate_ldp)

    p = sub.add_parser("constants", help="print the numeric constants table")
    p.add_argument("--kappa", type=float)
    p.add_argument("--psi", type=int, action="append", metavar="N")
    p.add_argument("--chernoff", nargs=2, type=int, metavar=("K", "SAMPLES"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("report", help="CSV tables and a gnuplot stub from JSONL records")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except hs.BUDGET_ERRORS as exc:
        print(f"ogp-lab: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (hs.ConfigError, kio.FormatError, KeyError) as exc:
        print(f"ogp-lab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"ogp-lab: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
