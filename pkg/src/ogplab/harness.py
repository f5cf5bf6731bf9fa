"""Experiment orchestration: configs, per-seed runs, JSON-lines records, reports.

A config is a sectioned INI file::

    [experiment]
    kind = fix1            ; fix1 | local | concentration | interpolate | scan | simulate-ldp
    seeds = 0-4, 9

    [ensemble]
    n = 30000
    k = 8
    alpha = 70.98          ; or m = ...; m = floor(alpha * n)

    [rule]
    name = fix1            ; any registered rule; other keys are its parameters
    D = 6                  ; degree cap (simulate-ldp only)

    [band]
    kappa = 6

    [budgets]
    repair = 1000000
    energy = 4194304

    [options]
    stride = 100           ; free-form knobs for the chosen kind

Every seed produces one :class:`RunRecord`; records are appended to a JSONL
file and never rewritten.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import __version__
from . import rules as _rules
from .factor_graph import build_factor_graph
from .fix1 import fix1_on_graph
from .ksat import ERR, F, T, Formula, as_assignment, best_repair, count_satisfied, flip_budget, sample_formula
from .ksat import DEFAULT_REPAIR_BUDGET
from .local_engine import MemoryRule, _uniform_low, run_local, run_local_memory
from .overlap import DEFAULT_ENERGY_BUDGET, EnergyBudgetExceeded, OgpBandSpec, conditional_entropy, scan_branches
from .interpolation import WALK_BUDGET, WalkBudgetExceeded, make_branched, make_path

SCHEMA_VERSION = 1
KINDS = ("fix1", "local", "concentration", "interpolate", "scan", "simulate-ldp")
DEFAULT_BUDGETS = {"repair": DEFAULT_REPAIR_BUDGET, "energy": DEFAULT_ENERGY_BUDGET, "walk": WALK_BUDGET}


class ConfigError(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    pass


BUDGET_ERRORS = (BudgetExceeded, EnergyBudgetExceeded, WalkBudgetExceeded)


# ------------------------------------------------------------------ config


def parse_seeds(text: str) -> tuple:
    """"0-4, 9" -> (0, 1, 2, 3, 4, 9)."""
    out = []
    for part in filter(None, (p.strip() for p in str(text).split(","))):
        lo, _, hi = part.partition("-")
        try:
            a = int(lo)
            b = int(hi) if hi else a
        except ValueError:
            raise ConfigError(f"bad seed entry {part!r}") from None
        if b < a:
            raise ConfigError(f"empty seed range {part!r}")
        out.extend(range(a, b + 1))
    return tuple(out)


def _value(text: str):
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return json.loads(text)
    except ValueError:
        return text.strip()


@dataclass
class ExperimentConfig:
    kind: str
    n: int
    m: int
    k: int
    alpha: float | None = None
    rule: str = "fix1"
    rule_params: dict = field(default_factory=dict)
    D: int | None = None
    kappa: float | None = None
    seeds: tuple = ()
    budgets: dict = field(default_factory=lambda: dict(DEFAULT_BUDGETS))
    options: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.n < 1 or self.k < 1 or self.m < 0:
            raise ConfigError("need n >= 1, k >= 1, m >= 0")
        for name, b in self.budgets.items():
            if not isinstance(b, int) or b <= 0:
                raise ConfigError(f"budget {name!r} must be a positive integer")
        if self.D is not None and self.D < 1:
            raise ConfigError("D must be positive")
        if self.rule not in _rules.available():
            raise ConfigError(f"unknown rule {self.rule!r}")
        try:
            _rules.get_rule(self.rule, **self.rule_params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"rule {self.rule!r} rejects parameters {self.rule_params}: {exc}") from None
        self.seeds = tuple(int(s) for s in self.seeds)

    @property
    def eta(self) -> float:
        return float(self.options.get("eta", 0.0))

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("outputs")
        d["seeds"] = list(self.seeds)
        d["schema"] = SCHEMA_VERSION
        return d


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None

    def sec(name):
        return dict(cp[name]) if cp.has_section(name) else {}

    exp, ens, rule, band = sec("experiment"), sec("ensemble"), sec("rule"), sec("band")
    if "kind" not in exp:
        raise ConfigError("[experiment] kind is required")
    try:
        n, k = int(ens["n"]), int(ens["k"])
        if ("m" in ens) == ("alpha" in ens):
            raise ConfigError("give exactly one of m or alpha")
        alpha = float(ens["alpha"]) if "alpha" in ens else None
        m = math.floor(alpha * n) if alpha is not None else int(ens["m"])
        budgets = dict(DEFAULT_BUDGETS)
        budgets.update({key: int(v) for key, v in sec("budgets").items()})
        name = rule.pop("name", exp.get("rule", "fix1"))
        D = rule.pop("D", None)
        return ExperimentConfig(
            kind=exp["kind"].strip(), n=n, m=m, k=k, alpha=alpha, rule=name,
            rule_params={key: _value(v) for key, v in rule.items()},
            D=None if D is None else int(D),
            kappa=float(band["kappa"]) if "kappa" in band else None,
            seeds=parse_seeds(exp.get("seeds", "")),
            budgets=budgets,
            options={key: _value(v) for key, v in sec("options").items()},
            outputs=sec("output"),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from None
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def config_hash(cfg: ExperimentConfig) -> str:
    """sha256 over the canonical JSON of everything except output paths."""
    blob = json.dumps(cfg.canonical(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def thread_cap() -> int:
    raw = os.environ.get("OGP_LAB_THREADS")
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        v = int(raw)
    except ValueError:
        raise ConfigError(f"OGP_LAB_THREADS must be a positive integer, got {raw!r}") from None
    if v < 1:
        raise ConfigError("OGP_LAB_THREADS must be a positive integer")
    return v


# ------------------------------------------------------------------ objective


class SatEta(NamedTuple):
    value: int
    exact: bool


def sat_eta_objective(x, phi: Formula, eta: float, budget: int = DEFAULT_REPAIR_BUDGET) -> SatEta:
    """Best satisfied-clause count over full assignments within distance eta
    of x; 0 when x has more than eta*n err entries."""
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    x = as_assignment(x, phi.n)
    n_err = int((x == ERR).sum())
    if n_err > flip_budget(phi.n, eta):
        return SatEta(0, True)
    if eta == 0:
        return SatEta(count_satisfied(x, phi), True)
    r = best_repair(x, phi, eta, budget)
    return SatEta(int(r.value), bool(r.exact))


def rep(x, z) -> np.ndarray:
    """Copy of x with the coordinates of z replaced.

    ``z`` is a mapping {index: symbol} or a pair (indices, symbols).
    """
    x = np.asarray(x, dtype=np.int8)
    if isinstance(z, dict):
        idx, vals = list(z.keys()), list(z.values())
    else:
        idx, vals = z
    idx = np.asarray(idx, dtype=np.int64).reshape(-1)
    vals = np.asarray(vals, dtype=np.int64).reshape(-1)
    if idx.size != vals.size:
        raise ValueError("indices and values differ in length")
    if idx.size and (idx.min() < 0 or idx.max() >= x.size):
        raise IndexError(f"index out of range for n={x.size}")
    if not np.isin(vals, (T, F)).all():
        raise ValueError("replacement values must be T or F")
    y = x.copy()
    y[idx] = vals
    return y


# ------------------------------------------------------------------ rule application


def _make_rule(name: str, params: dict):
    return _rules.get_rule(name, **params)


def apply_rule(rule, g) -> np.ndarray:
    """Run any rule on a graph and return an assignment.  Probability rules
    are rounded with the per-variable uniform carried by the vertex words."""
    if isinstance(rule, MemoryRule):
        return run_local_memory(rule, g)
    out = run_local(rule, g)
    if rule.codomain == "probability":
        u = np.array([_uniform_low(w) for w in g.vword[: g.n]])
        return np.where(u < out, T, F).astype(np.int8)
    return out


def _instance(cfg: ExperimentConfig, seed: int):
    fs = [int(cfg.options.get("formula_seed", 0)), 0] if cfg.options.get("resample") == "decorations" else [seed, 0]
    phi = sample_formula(cfg.n, cfg.m, cfg.k, fs)
    return phi, build_factor_graph(phi, [seed, 1])


def _objective(cfg, x, phi) -> dict:
    res = sat_eta_objective(x, phi, cfg.eta, cfg.budgets["repair"])
    if not res.exact and cfg.options.get("require_exact"):
        raise BudgetExceeded(f"repair search exceeds the repair budget of {cfg.budgets['repair']}")
    return {"sat_eta": res.value, "sat_eta_exact": res.exact}


def _assignment_metrics(x, phi) -> dict:
    return {
        "unsat_fraction": 1.0 - count_satisfied(x, phi) / max(phi.m, 1),
        "err_fraction": float((x == ERR).mean()),
        "false_fraction": float((x == F).mean()),
    }


# ------------------------------------------------------------------ kinds


def _run_fix1(cfg, seed):
    phi, g = _instance(cfg, seed)
    res = fix1_on_graph(g)
    out = _assignment_metrics(res.assignment, phi)
    out["z_fraction"] = res.Z.size / cfg.n
    out.update(_objective(cfg, res.assignment, phi))
    if cfg.options.get("check_memory", False):
        mem = run_local_memory(_rules.get_rule("fix1"), g)
        out["memory_agrees"] = bool(np.array_equal(mem, res.assignment))
    return out


def _run_local(cfg, seed):
    phi, g = _instance(cfg, seed)
    x = apply_rule(_make_rule(cfg.rule, cfg.rule_params), g)
    out = _assignment_metrics(x, phi)
    out.update(_objective(cfg, x, phi))
    return out


def _band(cfg) -> OgpBandSpec:
    return OgpBandSpec.from_kappa(cfg.kappa if cfg.kappa is not None else 6.0, cfg.k)


def _hamming(a, b) -> float:
    return float(np.mean(a != b))


def _run_interpolate(cfg, seed):
    rule = _make_rule(cfg.rule, cfg.rule_params)
    mode = cfg.options.get("mode", "path")
    stride = int(cfg.options.get("stride", 1))
    c = float(cfg.options.get("c", 0.05))
    if stride < 1:
        raise ConfigError("stride must be positive")
    if mode == "path":
        path = make_path(cfg.n, cfg.m, cfg.k, seed)
        graph_at = path.materialize_graph
        T_max = path.T
    elif mode == "branched":
        path = make_branched(cfg.n, cfg.m, cfg.k, seed)
        branch = int(cfg.options.get("branch", 0))
        graph_at = lambda t: path.materialize_graph(branch, t)  # noqa: E731
        T_max = path.length
    else:
        raise ConfigError(f"unknown interpolation mode {mode!r}")
    steps = min(int(cfg.options.get("steps", T_max)), T_max)
    band = _band(cfg) if cfg.k >= 2 else None
    ts = list(range(0, steps + 1, stride))
    xs = [apply_rule(rule, graph_at(t)) for t in ts]
    x0 = xs[0]
    gamma = float(np.mean([np.sum(x.astype(float) ** 2) for x in xs]) / cfg.n)
    delta, ent, flags = [], [], []
    for i, x in enumerate(xs):
        d = 0.0 if i == 0 else float(np.sum((x.astype(float) - xs[i - 1]) ** 2))
        delta.append(d / cfg.n)
        h = conditional_entropy(x, [x0]) if not (x == ERR).any() and not (x0 == ERR).any() else float("nan")
        ent.append(h)
        f = []
        if d > c * gamma * cfg.n:
            f.append("c_bad")
        if band is not None and band.contains(h):
            f.append("in_band")
        flags.append("|".join(f))
    return {
        "mode": mode, "t": ts, "delta_prev": delta, "cond_entropy": ent, "flags": flags,
        "c_bad": sum("c_bad" in f for f in flags), "gamma_hat": gamma,
    }


def _run_scan(cfg, seed):
    """Scanner over a lazily evaluated interpolation.  In branched mode level l
    reads branch l; in path mode every level continues along the one path."""
    rule = _make_rule(cfg.rule, cfg.rule_params)
    band = _band(cfg)
    stride = int(cfg.options.get("stride", 1))
    mode = cfg.options.get("mode", "branched")
    if stride < 1:
        raise ConfigError("stride must be positive")
    if mode == "branched":
        b = make_branched(cfg.n, cfg.m, cfg.k, seed)
        length, base_graph = b.length, b.base_graph
        graph_at = b.materialize_graph
    elif mode == "path":
        b = make_path(cfg.n, cfg.m, cfg.k, seed)
        length, base_graph = b.T, b.materialize_graph(0)
        graph_at = lambda _, t: b.materialize_graph(t)  # noqa: E731
    else:
        raise ConfigError(f"unknown interpolation mode {mode!r}")
    steps = min(int(cfg.options.get("steps", length)), length)
    base = apply_rule(rule, base_graph)
    seen = []   # (t, delta to the previous output of the same stream), in scan order

    def stream(level):
        prev = base
        for t in range(stride, steps + 1, stride):
            x = apply_rule(rule, graph_at(level, t))
            seen.append((t, float(np.mean(x != prev))))
            prev = x
            yield t, x

    if mode == "branched":
        res = scan_branches(base, [stream(i) for i in range(b.branches)], band, cfg.k, sequence="branched")
    else:
        shared = stream(0)
        res = scan_branches(base, [shared] * cfg.k, band, cfg.k, sequence="path")
    flags = []
    for level, hs_ in enumerate(res.trace, start=1):
        for j, h in enumerate(hs_):
            f = [f"level{level}"]
            if band.contains(h):
                f.append("in_band")
            if level < len(res.ts) and j == len(hs_) - 1:
                f.append("chosen")
            flags.append("|".join(f))
    flat = [h for level in res.trace for h in level]
    return {
        "found": res.found, "ts": res.ts, "entropies": res.entropies,
        "trace_length": len(flat), "max_entropy": max(flat, default=0.0),
        "crossed": len(res.ts) > 1, "band": [band.lo, band.hi], "sequence": res.sequence,
        "t": [t for t, _ in seen], "delta_prev": [d for _, d in seen], "cond_entropy": flat, "flags": flags,
    }


def _run_simulate_ldp(cfg, seed):
    from .ksat import strict_round
    from .polysim import PolySimRule, d_truncate, evaluate_polysim

    src = _make_rule(cfg.rule, cfg.rule_params)
    D = cfg.D if cfg.D is not None else int(cfg.options.get("D", 4))
    _, g = _instance(cfg, seed)
    trunc = run_local(d_truncate(src, D), g)
    f = evaluate_polysim(PolySimRule(src, D), g)
    ok = trunc != ERR
    return {
        "checked": int(ok.sum()),
        "mismatches": int((strict_round(f[ok]) != trunc[ok]).sum()),
        "norm2": float(f @ f) / cfg.n,
    }


_KIND = {
    "fix1": _run_fix1, "local": _run_local, "concentration": _run_local,
    "interpolate": _run_interpolate, "scan": _run_scan, "simulate-ldp": _run_simulate_ldp,
}


# ------------------------------------------------------------------ records


@dataclass
class RunRecord:
    config_hash: str
    kind: str
    seed: int
    status: str               # ok | budget_exceeded
    metrics: dict
    wall_time: float
    code_version: str = __version__
    message: str = ""
    schema: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, allow_nan=True)

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        d = json.loads(line)
        if d.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported record schema {d.get('schema')!r}")
        return cls(**d)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, np.generic):
        return v.item()
    return v


def _run_seed(cfg: ExperimentConfig, seed: int) -> RunRecord:
    h = config_hash(cfg)
    t0 = time.perf_counter()
    try:
        metrics = _jsonable(_KIND[cfg.kind](cfg, seed))
        status, msg = "ok", ""
    except BUDGET_ERRORS as exc:
        metrics, status, msg = {}, "budget_exceeded", str(exc)
    return RunRecord(h, cfg.kind, seed, status, metrics, time.perf_counter() - t0, message=msg)


def append_records(path, records) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("a") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path) -> list[RunRecord]:
    with Path(path).open() as fh:
        return [RunRecord.from_json(line) for line in fh if line.strip()]


def run_experiment(cfg: ExperimentConfig, out=None) -> list[RunRecord]:
    """Run every seed (in parallel up to OGP_LAB_THREADS) and append the
    records to ``out`` (or the config's [output] records path) in seed order."""
    out = out if out is not None else cfg.outputs.get("records")
    workers = min(thread_cap(), len(cfg.seeds))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        records = [_run_seed(cfg, s) for s in cfg.seeds]
    if out is not None:
        append_records(out, records)
    return records


# ------------------------------------------------------------------ concentration


@dataclass
class ConcentrationReport:
    n: int
    m: int
    seeds: list
    values: list
    exact: list
    mean: float
    max_dev: float
    std: float
    yardstick: float
    flagged: list

    @property
    def fraction_flagged(self) -> float:
        return len(self.flagged) / len(self.seeds) if self.seeds else 0.0


def concentration_experiment(rule, ensemble: dict, eta: float = 0.0, seeds=range(10),
                             resample: str = "formula", formula_seed: int = 0,
                             budget: int = DEFAULT_REPAIR_BUDGET) -> ConcentrationReport:
    """Spread of Y = Sat_eta(rule output) across seeds.

    ``resample="formula"`` draws a fresh formula and decorations per seed;
    ``"decorations"`` keeps formula ``formula_seed`` and redraws only the
    vertex and edge words.
    """
    if isinstance(rule, str):
        rule = _rules.get_rule(rule)
    if resample not in ("formula", "decorations"):
        raise ValueError("resample must be 'formula' or 'decorations'")
    n, m, k = ensemble["n"], ensemble["m"], ensemble["k"]
    seeds = list(seeds)
    vals, exact = [], []
    for s in seeds:
        phi = sample_formula(n, m, k, [formula_seed if resample == "decorations" else s, 0])
        x = apply_rule(rule, build_factor_graph(phi, [s, 1]))
        r = sat_eta_objective(x, phi, eta, budget)
        vals.append(r.value)
        exact.append(r.exact)
    v = np.asarray(vals, dtype=float)
    mean = float(v.mean()) if v.size else 0.0
    dev = np.abs(v - mean)
    yard = m / math.log(n) if n > 1 else float("inf")
    return ConcentrationReport(
        n, m, seeds, vals, exact, mean, float(dev.max()) if v.size else 0.0,
        float(v.std()) if v.size else 0.0, yard,
        [s for s, d in zip(seeds, dev) if d >= yard],
    )


# ------------------------------------------------------------------ reports

STEP_COLUMNS = ("t", "delta_prev", "cond_entropy", "flags")

_GNUPLOT = """\
# gnuplot stub: columns are named in the CSV headers
set datafile separator ','
set key autotitle columnhead
set xlabel 't'
set ylabel 'conditional entropy'
{plots}
"""


def write_step_csv(path, metrics: dict) -> Path:
    p = Path(path)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STEP_COLUMNS)
        for row in zip(*(metrics[c] for c in STEP_COLUMNS)):
            w.writerow(row)
    return p


def emit_report(records, out_dir, format: str = "csv") -> list[Path]:
    """CSV tables (one row per record, plus per-step tables for trace runs)
    and a gnuplot stub; ``format="json"`` writes a single summary file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = list(records)
    if format == "json":
        p = out / "summary.json"
        p.write_text(json.dumps([asdict(r) for r in records], indent=1, sort_keys=True))
        return [p]
    if format != "csv":
        raise ValueError(f"unknown report format {format!r}")
    scalar = []
    for r in records:
        for key, v in r.metrics.items():
            if not isinstance(v, (list, dict)) and key not in scalar:
                scalar.append(key)
    head = ["config_hash", "kind", "seed", "status", "wall_time"] + scalar
    paths = [out / "records.csv"]
    with paths[0].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(head)
        for r in records:
            w.writerow([r.config_hash, r.kind, r.seed, r.status, f"{r.wall_time:.6f}"]
                       + [r.metrics.get(key, "") for key in scalar])
    steps = []
    for r in records:
        if all(c in r.metrics for c in STEP_COLUMNS):
            steps.append(write_step_csv(out / f"steps_{r.seed}.csv", r.metrics))
    paths += steps
    plots = "plot " + ", \\\n     ".join(f"'{p.name}' using 't':'cond_entropy' with lines" for p in steps) \
        if steps else "# no per-step tables in this report"
    gp = out / "plot.gp"
    gp.write_text(_GNUPLOT.format(plots=plots))
    paths.append(gp)
    return paths
