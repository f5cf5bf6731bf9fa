import itertools
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ogplab import harness as hs
from ogplab.ksat import ERR, F, T, count_satisfied, sample_formula

GOLDEN = Path(__file__).parent / "golden"

BASIC = """\
[experiment]
kind = fix1
seeds = 0-2

[ensemble]
n = 2000
k = 3
alpha = 4.0
"""


# ------------------------------------------------------------------ config


def test_config_alpha_floor():
    cfg = hs.parse_config("[experiment]\nkind = local\nseeds = 0\n[ensemble]\nn = 1000\nk = 3\nalpha = 4.267\n")
    assert cfg.m == 4267
    cfg = hs.parse_config("[experiment]\nkind = local\nseeds = 0\n[ensemble]\nn = 7\nk = 3\nalpha = 0.5\n")
    assert cfg.m == 3
    assert cfg.seeds == (0,)


def test_config_seed_lists():
    assert hs.parse_seeds("0-4") == (0, 1, 2, 3, 4)
    assert hs.parse_seeds("1, 3,5") == (1, 3, 5)
    assert hs.parse_seeds("") == ()
    assert hs.parse_seeds("2-3, 7") == (2, 3, 7)
    with pytest.raises(hs.ConfigError):
        hs.parse_seeds("4-1")


@pytest.mark.parametrize("text", [
    "[experiment]\nkind = nope\n[ensemble]\nn = 5\nk = 3\nm = 5\n",
    "[experiment]\nkind = fix1\n[ensemble]\nn = 5\nk = 3\n",
    "[experiment]\nkind = fix1\n[ensemble]\nn = 5\nk = 3\nm = 5\n[budgets]\nrepair = 0\n",
    "[experiment]\nkind = fix1\n[ensemble]\nn = 5\nk = 3\nm = 5\n[budgets]\nenergy = -3\n",
    "[experiment]\nkind = fix1\n[ensemble]\nn = 5\nk = 3\nm = 5\nalpha = 2\n",
    "[experiment]\nkind = fix1\n[ensemble]\nn = x\nk = 3\nm = 5\n",
    "not an ini file",
])
def test_config_errors(text):
    with pytest.raises(hs.ConfigError):
        hs.parse_config(text)


def test_config_rule_params_and_options():
    cfg = hs.parse_config(BASIC + "[rule]\nname = certificate_hash\nradius = 2\n[options]\nstride = 5\nmode = branched\n")
    assert cfg.rule == "certificate_hash" and cfg.rule_params == {"radius": 2}
    assert cfg.options == {"stride": 5, "mode": "branched"}
    with pytest.raises(hs.ConfigError):
        hs.parse_config(BASIC + "[rule]\nname = no_such_rule\n")


def test_config_hash_stability():
    a = hs.parse_config(BASIC)
    b = hs.parse_config(BASIC)
    assert hs.config_hash(a) == hs.config_hash(b)
    assert len(hs.config_hash(a)) == 64
    moved = hs.parse_config(BASIC + "[output]\nrecords = elsewhere.jsonl\n")
    assert hs.config_hash(moved) == hs.config_hash(a)
    other = hs.parse_config(BASIC.replace("0-2", "0-3"))
    assert hs.config_hash(other) != hs.config_hash(a)


def test_config_file_roundtrip(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text(BASIC)
    cfg = hs.load_config(p)
    assert cfg == hs.parse_config(BASIC)
    with pytest.raises(hs.ConfigError):
        hs.load_config(tmp_path / "missing.ini")


# ------------------------------------------------------------------ Sat_eta


def test_sat_eta_plain_count():
    phi = sample_formula(30, 60, 3, 0)
    x = np.where(np.random.default_rng(0).random(30) < 0.5, T, F).astype(np.int8)
    res = hs.sat_eta_objective(x, phi, 0.0)
    assert res.value == count_satisfied(x, phi) and res.exact


def test_sat_eta_too_many_err():
    phi = sample_formula(12, 20, 3, 1)
    x = np.full(12, T, np.int8)
    x[:3] = ERR
    assert hs.sat_eta_objective(x, phi, 2 / 12).value == 0
    assert hs.sat_eta_objective(x, phi, 0.0).value == 0


def brute_sat_eta(x, phi, flips):
    best = 0
    for bits in itertools.product((T, F), repeat=phi.n):
        y = np.array(bits, dtype=np.int8)
        if int((y != x).sum()) <= flips:
            best = max(best, count_satisfied(y, phi))
    return best


def test_sat_eta_vs_two_flip_oracle():
    rng = np.random.default_rng(5)
    for s in range(12):
        phi = sample_formula(12, 20, 3, [s, 0])
        x = np.where(rng.random(12) < 0.5, T, F).astype(np.int8)
        x[rng.choice(12, size=s % 3, replace=False)] = ERR
        res = hs.sat_eta_objective(x, phi, 1 / 6)
        assert res.exact
        assert res.value == brute_sat_eta(x, phi, 2)


def test_sat_eta_greedy_flagged():
    phi = sample_formula(200, 400, 3, 2)
    x = np.full(200, T, np.int8)
    res = hs.sat_eta_objective(x, phi, 0.25, budget=100)
    assert not res.exact
    assert res.value >= count_satisfied(x, phi)
    with pytest.raises(ValueError):
        hs.sat_eta_objective(x, phi, 1.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 0.3))
def test_sat_eta_at_least_count(seed, eta):
    phi = sample_formula(10, 25, 3, seed)
    x = np.where(np.random.default_rng(seed).random(10) < 0.5, T, F).astype(np.int8)
    assert hs.sat_eta_objective(x, phi, eta).value >= count_satisfied(x, phi)


# ------------------------------------------------------------------ rep


def test_rep_cases():
    x = np.array([T, F, T, T], dtype=np.int8)
    assert np.array_equal(hs.rep(x, {}), x)
    assert np.array_equal(hs.rep(x, {i: F for i in range(4)}), np.full(4, F))
    y = hs.rep(x, {2: F})
    assert y.tolist() == [T, F, F, T] and x[2] == T
    assert np.array_equal(hs.rep(x, ([0, 3], [F, F])), np.array([F, F, T, F]))
    with pytest.raises(IndexError):
        hs.rep(x, {4: T})
    with pytest.raises(IndexError):
        hs.rep(x, {-1: T})
    with pytest.raises(ValueError):
        hs.rep(x, {1: 3})


@given(st.lists(st.sampled_from([1, -1, 0]), min_size=1, max_size=30), st.data())
def test_rep_only_touches_b(vals, data):
    x = np.array(vals, dtype=np.int8)
    B = data.draw(st.sets(st.integers(0, len(vals) - 1)))
    z = {i: data.draw(st.sampled_from([1, -1])) for i in B}
    y = hs.rep(x, z)
    outside = [i for i in range(len(vals)) if i not in B]
    assert np.array_equal(y[outside], x[outside])
    assert all(y[i] == z[i] for i in B)


# ------------------------------------------------------------------ concentration


def test_concentration_constant_rule_zero_spread():
    rep_ = hs.concentration_experiment("const_true", {"n": 300, "m": 900, "k": 3}, 0.0, range(10),
                                       resample="decorations")
    assert rep_.max_dev == 0 and rep_.flagged == [] and len(set(rep_.values)) == 1


def test_concentration_fix1_k3():
    n = 10_000
    rep_ = hs.concentration_experiment("fix1", {"n": n, "m": 2 * n, "k": 3}, 0.0, range(50))
    assert rep_.yardstick == pytest.approx(2 * n / math.log(n))
    assert rep_.fraction_flagged <= 0.02
    assert len(rep_.values) == 50 and all(rep_.exact)


def test_concentration_spread_shrinks():
    spread = []
    for n, seeds in ((1000, 30), (10_000, 30), (100_000, 10)):
        r = hs.concentration_experiment("fix1", {"n": n, "m": 2 * n, "k": 3}, 0.0, range(seeds))
        spread.append(r.max_dev / r.m)
    assert spread[0] > spread[1] > spread[2]


def test_concentration_unknown_rule():
    with pytest.raises(KeyError):
        hs.concentration_experiment("missing", {"n": 10, "m": 10, "k": 3}, 0.0, [0])


# ------------------------------------------------------------------ running


def test_empty_seed_list(tmp_path):
    cfg = hs.parse_config(BASIC.replace("0-2", ""))
    out = tmp_path / "r.jsonl"
    assert hs.run_experiment(cfg, out) == []
    assert out.exists() and out.read_text() == ""


def test_records_append_and_roundtrip(tmp_path):
    cfg = hs.parse_config(BASIC)
    out = tmp_path / "r.jsonl"
    first = hs.run_experiment(cfg, out)
    second = hs.run_experiment(cfg, out)
    lines = out.read_text().splitlines()
    assert len(lines) == 6
    back = hs.read_records(out)
    assert [r.seed for r in back] == [0, 1, 2, 0, 1, 2]
    assert back[0].schema == hs.SCHEMA_VERSION
    assert back[0].config_hash == hs.config_hash(cfg)
    for a, b in zip(first, second):
        assert a.metrics == b.metrics
    assert back[0].metrics == first[0].metrics


def test_threads_do_not_change_metrics(monkeypatch):
    cfg = hs.parse_config(BASIC)
    monkeypatch.setenv("OGP_LAB_THREADS", "1")
    serial = hs.run_experiment(cfg)
    monkeypatch.setenv("OGP_LAB_THREADS", "3")
    assert hs.thread_cap() == 3
    parallel = hs.run_experiment(cfg)
    assert [r.metrics for r in serial] == [r.metrics for r in parallel]
    monkeypatch.setenv("OGP_LAB_THREADS", "zero")
    with pytest.raises(hs.ConfigError):
        hs.thread_cap()


def test_golden_run():
    cfg = hs.load_config(GOLDEN / "fix1_k3.ini")
    want = hs.read_records(GOLDEN / "fix1_k3.jsonl")
    got = hs.run_experiment(cfg)
    assert [r.seed for r in got] == [r.seed for r in want]
    for a, b in zip(got, want):
        assert a.config_hash == b.config_hash
        assert a.metrics == b.metrics


def test_budget_surfaced_per_seed():
    text = ("[experiment]\nkind = local\nseeds = 0-1\n[ensemble]\nn = 200\nk = 3\nm = 400\n"
            "[rule]\nname = const_true\n[budgets]\nrepair = 10\n[options]\neta = 0.25\nrequire_exact = true\n")
    recs = hs.run_experiment(hs.parse_config(text))
    assert [r.status for r in recs] == ["budget_exceeded"] * 2
    assert all("repair" in r.message for r in recs)


def test_local_memory_and_sequential_kinds():
    for name, extra in (("clause_claim", ""), ("sequential", "inner = biased_majority\n"), ("majority_polarity", "")):
        text = (f"[experiment]\nkind = local\nseeds = 3\n[ensemble]\nn = 60\nk = 3\nm = 120\n"
                f"[rule]\nname = {name}\n{extra}")
        (rec,) = hs.run_experiment(hs.parse_config(text))
        assert rec.status == "ok"
        assert 0 <= rec.metrics["unsat_fraction"] <= 1
        assert rec.metrics["err_fraction"] == 0


def test_interpolate_kind_steps():
    text = ("[experiment]\nkind = interpolate\nseeds = 1\n[ensemble]\nn = 80\nk = 3\nm = 100\n"
            "[rule]\nname = fix1\n[options]\nstride = 30\nsteps = 300\nc = 0.01\n")
    (rec,) = hs.run_experiment(hs.parse_config(text))
    m = rec.metrics
    assert m["t"] == list(range(0, 301, 30))
    assert m["cond_entropy"][0] == 0 and m["delta_prev"][0] == 0
    assert len(m["flags"]) == len(m["t"])
    assert m["c_bad"] == sum("c_bad" in f for f in m["flags"])


def test_scan_kind_branched():
    text = ("[experiment]\nkind = scan\nseeds = 0\n[ensemble]\nn = 60\nk = 3\nm = 90\n"
            "[rule]\nname = fix1\n[band]\nkappa = 6\n[options]\nstride = 20\n")
    (rec,) = hs.run_experiment(hs.parse_config(text))
    m = rec.metrics
    assert m["trace_length"] >= 1 and m["ts"][0] == 0
    assert len(m["t"]) == len(m["cond_entropy"]) == len(m["flags"]) == m["trace_length"]
    assert m["band"] == pytest.approx([2.93384 * math.log(3) / 3, 4.59898 * math.log(3) / 3], abs=1e-4)


def test_simulate_ldp_kind():
    text = ("[experiment]\nkind = simulate-ldp\nseeds = 0-3\n[ensemble]\nn = 30\nk = 3\nm = 10\n"
            "[rule]\nname = majority_polarity\nD = 4\n")
    recs = hs.run_experiment(hs.parse_config(text))
    assert all(r.metrics["mismatches"] == 0 for r in recs)
    assert sum(r.metrics["checked"] for r in recs) > 0


# ------------------------------------------------------------------ reports


def test_emit_report(tmp_path):
    recs = hs.run_experiment(hs.parse_config(BASIC))
    text = ("[experiment]\nkind = interpolate\nseeds = 1\n[ensemble]\nn = 40\nk = 3\nm = 50\n"
            "[rule]\nname = fix1\n[options]\nstride = 50\nsteps = 150\n")
    recs += hs.run_experiment(hs.parse_config(text))
    paths = hs.emit_report(recs, tmp_path)
    names = sorted(p.name for p in paths)
    assert "records.csv" in names and "plot.gp" in names
    assert "steps_1.csv" in names
    rows = (tmp_path / "records.csv").read_text().splitlines()
    assert rows[0].split(",")[:4] == ["config_hash", "kind", "seed", "status"]
    assert len(rows) == 5
    steps = (tmp_path / "steps_1.csv").read_text().splitlines()
    assert steps[0] == "t,delta_prev,cond_entropy,flags"
    assert len(steps) == 5
    summary = hs.emit_report(recs, tmp_path, format="json")
    data = json.loads(summary[0].read_text())
    assert len(data) == 4
    with pytest.raises(ValueError):
        hs.emit_report(recs, tmp_path, format="xlsx")


def test_scan_kind_path_shares_one_stream():
    text = ("[experiment]\nkind = scan\nseeds = 0\n[ensemble]\nn = 60\nk = 3\nm = 90\n"
            "[rule]\nname = fix1\n[band]\nkappa = 6\n[options]\nmode = path\nstride = 45\nsteps = 450\n")
    (rec,) = hs.run_experiment(hs.parse_config(text))
    m = rec.metrics
    assert m["sequence"] == "path"
    assert m["t"] == sorted(m["t"]) and len(set(m["t"])) == len(m["t"])
