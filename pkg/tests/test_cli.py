import json
import subprocess
import sys

import pytest

from ogplab import harness as hs
from ogplab import io as kio
from ogplab.cli import main
from ogplab.factor_graph import DecoratedFactorGraph


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_dimacs_binary_and_dump(tmp_path, capsys):
    with pytest.warns(UserWarning):
        code, out, _ = run(capsys, "gen", "--n", "20", "--k", "3", "--alpha", "2.5", "--seed", "4")
    assert code == 0 and out.startswith("p cnf 20 50\n")
    b = tmp_path / "f.ksat"
    d = tmp_path / "f.dump"
    code, _, _ = run(capsys, "gen", "--n", "20", "--k", "3", "--m", "50", "--seed", "4", "--format", "binary",
                     "--out", str(b), "--graph-dump", str(d))
    assert code == 0
    phi = kio.read_binary(b)
    assert (phi.n, phi.m, phi.k) == (20, 50, 3)
    g = DecoratedFactorGraph.parse_dump(d.read_text())
    assert g.to_formula() == phi
    # conversion back to DIMACS
    code, out2, _ = run(capsys, "gen", "--input", str(b), "--allow-dups")
    assert code == 0 and kio.from_dimacs(out2) == phi


def test_gen_strict_import(tmp_path, capsys):
    p = tmp_path / "t.cnf"
    p.write_text("p cnf 2 1\n1 -1 2 0\n")
    assert run(capsys, "gen", "--input", str(p))[0] == 0
    code, _, err = run(capsys, "gen", "--input", str(p), "--strict")
    assert code == 2 and "tautological" in err


def test_config_errors_exit_2(tmp_path, capsys):
    assert run(capsys, "gen", "--n", "5", "--k", "3")[0] == 2
    assert run(capsys, "run", "--config", str(tmp_path / "missing.ini"))[0] == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nkind = fix1\n[ensemble]\nn = 5\nk = 3\nm = 5\n[budgets]\nrepair = 0\n")
    assert run(capsys, "run", "--config", str(bad))[0] == 2
    assert run(capsys, "run", "--rule", "nope", "--n", "5", "--k", "3", "--m", "5")[0] == 2
    assert run(capsys, "run", "--rule", "fix1", "--engine", "local", "--n", "5", "--k", "3", "--m", "5")[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["interpolate", "--n", "5"])
    assert exc.value.code == 2


def test_threads_env_error(monkeypatch, tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[experiment]\nkind = fix1\nseeds = 0-1\n[ensemble]\nn = 50\nk = 3\nm = 100\n")
    monkeypatch.setenv("OGP_LAB_THREADS", "-2")
    assert run(capsys, "run", "--config", str(cfg))[0] == 2
    monkeypatch.setenv("OGP_LAB_THREADS", "2")
    assert run(capsys, "run", "--config", str(cfg))[0] == 0


def test_budget_exit_3(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[experiment]\nkind = local\nseeds = 0\n[ensemble]\nn = 200\nk = 3\nm = 400\n"
                   "[rule]\nname = const_true\n[budgets]\nrepair = 10\n[options]\neta = 0.25\nrequire_exact = true\n")
    out = tmp_path / "r.jsonl"
    code, _, _ = run(capsys, "run", "--config", str(cfg), "--out", str(out))
    assert code == 3
    (rec,) = hs.read_records(out)
    assert rec.status == "budget_exceeded"


def test_empty_seed_config_exit_0(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[experiment]\nkind = fix1\nseeds =\n[ensemble]\nn = 50\nk = 3\nm = 100\n")
    out = tmp_path / "r.jsonl"
    code, stdout, _ = run(capsys, "run", "--config", str(cfg), "--out", str(out))
    assert code == 0 and stdout == "" and out.read_text() == ""


@pytest.mark.parametrize("engine,rule", [
    ("local", "majority_polarity"), ("local", "biased_majority"), ("memory", "clause_claim"),
    ("sequential", "biased_majority"), ("simulate:3", "clause_claim"),
])
def test_run_engines(tmp_path, capsys, engine, rule):
    out = tmp_path / "run.json"
    code, _, _ = run(capsys, "run", "--rule", rule, "--engine", engine, "--n", "40", "--k", "3",
                     "--m", "60", "--seed", "2", "--out", str(out))
    assert code == 0
    data = json.loads(out.read_text())
    assert data["manifest"]["name"] == rule and 0 <= data["unsat_fraction"] <= 1


def test_memory_and_simulation_agree_on_sparse_instance(tmp_path, capsys):
    outs = []
    for engine in ("memory", "simulate:40"):
        p = tmp_path / f"{engine.replace(':', '_')}.json"
        assert run(capsys, "run", "--rule", "clause_claim", "--engine", engine, "--n", "60", "--k", "3",
                   "--m", "15", "--seed", "1", "--save-assignment", "--out", str(p))[0] == 0
        outs.append(json.loads(p.read_text())["assignment"])
    assert outs[0] == outs[1]


def test_fix1_csv(capsys):
    code, out, _ = run(capsys, "fix1", "--n", "500", "--k", "3", "--alpha", "2", "--seeds", "0-2",
                       "--check-memory")
    lines = out.splitlines()
    assert code == 0
    assert lines[0] == "seed,unsat_fraction,z_fraction,wall_time,memory_agrees"
    assert len(lines) == 4 and all(l.endswith("True") for l in lines[1:])


def test_interpolate_csv(tmp_path, capsys):
    p = tmp_path / "steps.csv"
    code, _, err = run(capsys, "interpolate", "--mode", "path", "--alg", "fix1", "--measure", "c-bad",
                       "--n", "60", "--k", "3", "--m", "80", "--stride", "40", "--steps", "200", "--out", str(p))
    assert code == 0
    rows = p.read_text().splitlines()
    assert rows[0] == "t,delta_prev,cond_entropy,flags" and len(rows) == 7
    assert "c_bad" in json.loads(err)
    code, out, err = run(capsys, "interpolate", "--mode", "branched", "--alg", "fix1", "--measure", "scan",
                         "--n", "60", "--k", "3", "--m", "80", "--stride", "40")
    assert code == 0 and out.startswith("t,delta_prev,cond_entropy,flags")
    assert json.loads(err)["sequence"] == "branched"


def test_scan_and_report(tmp_path, capsys):
    rec = tmp_path / "r.jsonl"
    code, out, _ = run(capsys, "scan", "--n", "60", "--k", "3", "--m", "80", "--stride", "30",
                       "--seeds", "0", "1", "--records", str(rec), "--out", str(tmp_path))
    assert code == 0 and len(out.splitlines()) == 2
    assert (tmp_path / "scan_0.csv").exists()
    code, out, _ = run(capsys, "report", "--records", str(rec), "--out", str(tmp_path / "rep"))
    assert code == 0
    assert (tmp_path / "rep" / "records.csv").exists() and (tmp_path / "rep" / "plot.gp").exists()
    assert run(capsys, "report", "--records", str(tmp_path / "none.jsonl"), "--out", str(tmp_path))[0] == 2


def test_simulate_ldp_check_match(capsys):
    code, out, _ = run(capsys, "simulate-ldp", "--rule", "certificate_hash", "--D", "6", "--radius", "2",
                       "--n", "30", "--k", "3", "--m", "10", "--seeds", "0-4", "--check-match")
    assert code == 0 and "match: ok" in out
    assert run(capsys, "simulate-ldp", "--rule", "majority_polarity", "--D", "4", "--radius", "3",
               "--n", "30", "--k", "3", "--m", "10")[0] == 2


def test_constants_table(capsys):
    code, out, _ = run(capsys, "constants", "--kappa", "6", "--psi", "1", "--psi", "2")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].split() == ["name", "value", "residual"]
    vals = {l.split()[0]: float(l.split()[1]) for l in lines[1:]}
    assert vals["beta_star"] == pytest.approx(3.512862, abs=1e-5)
    assert vals["psi_star_2"] == pytest.approx(1.716, abs=1e-3)
    assert vals["beta_minus"] == pytest.approx(2.93384, abs=1e-4)
    assert run(capsys, "constants", "--kappa", "4")[0] == 2


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "ogplab.cli", "constants"], capture_output=True, text=True)
    assert res.returncode == 0 and "kappa_star" in res.stdout
