import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from censinv import cli, solver
from censinv.filter import Demand, Supply, write_log
from censinv.model import Mark, save_model


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, two_state):
    d = tmp_path_factory.mktemp("cli")
    save_model(two_state, d / "model.json")
    return d


@pytest.fixture(scope="module")
def surface_file(workdir):
    out = workdir / "surface.bin"
    code = cli.main(["solve", "--model", str(workdir / "model.json"), "--dt", "0.1",
                     "--belief-res", "10", "--out", str(out), "--csv", str(workdir / "U.csv"),
                     "--report", str(workdir / "solve.json")])
    assert code == 0
    return out


def test_validate(workdir, tmp_path, capsys):
    assert cli.main(["validate", "--model", str(workdir / "model.json")]) == 0
    assert "ok" in capsys.readouterr().out
    bad = json.loads((workdir / "model.json").read_text())
    bad["f"][0] = [0.5, 0.5, 0.5]
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    rep = tmp_path / "rep.json"
    assert cli.main(["validate", "--model", str(tmp_path / "bad.json"),
                     "--report", str(rep)]) == 1
    assert json.loads(rep.read_text())["ok"] is False


def test_missing_model(tmp_path, capsys):
    assert cli.main(["validate", "--model", str(tmp_path / "none.json")]) == 2
    assert "error" in capsys.readouterr().err


def test_solve_outputs(surface_file, workdir):
    S = solver.load_surface(surface_file)
    assert S.n_T == 30 and S.k == 10 and S.m == 2
    rep = json.loads((workdir / "solve.json").read_text())
    assert rep["n_T"] == 30 and rep["residual"] <= 1e-10
    with open(workdir / "U.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["T_rem", "pi_1", "pi_2", "a", "U", "MU", "act", "d"]
    assert len(rows) == 31 * 11 * 4
    last = [r for r in rows if float(r["T_rem"]) == pytest.approx(3.0)
            and float(r["pi_1"]) == 0.5 and r["a"] == "0"]
    assert float(last[0]["U"]) == pytest.approx(S.value(3.0, [0.5, 0.5], 0), abs=1e-9)


def test_bad_dt(workdir):
    with pytest.raises(SystemExit):
        cli.main(["solve", "--model", str(workdir / "model.json"), "--dt", "0.7",
                  "--out", str(workdir / "x.bin")])
    with pytest.raises(SystemExit):
        cli.main(["solve", "--model", str(workdir / "model.json"), "--dt", "-1",
                  "--out", str(workdir / "x.bin")])


def test_regions_and_advise(surface_file, workdir, capsys):
    out = workdir / "regions.csv"
    assert cli.main(["regions", "--surface", str(surface_file), "--a", "0",
                     "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["T_rem", "pi_1", "pi_2", "act", "d"]
    assert len(rows) == 31 * 11
    capsys.readouterr()
    assert cli.main(["advise", "--surface", str(surface_file), "--t", "1.0",
                     "--pi", "0.5,0.5", "--a", "3"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["action"] == "wait" and rec["amount"] == 0 and rec["order_up_to"] == 3
    assert cli.main(["advise", "--surface", str(surface_file), "--t", "1.0",
                     "--pi", "0.5,0.5", "--a", "9"]) == 2


def test_filter_command(workdir, tmp_path, two_state):
    log = [Supply(0.0, 3), Demand(1.7, Mark.full(2)), Demand(1.83, Mark.stock_out(1))]
    write_log(log, tmp_path / "log.jsonl")
    out = tmp_path / "beliefs.csv"
    assert cli.main(["filter", "--model", str(workdir / "model.json"), "--log",
                     str(tmp_path / "log.jsonl"), "--pi0", "0.6,0.4", "--horizon", "3",
                     "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["t", "pi_1", "pi_2", "P"]
    assert len(rows) == 1 + 2 * len(log) + 1
    assert [int(r["P"]) for r in rows] == [0, 0, 3, 3, 1, 1, 0, 0]
    for r in rows:
        assert float(r["pi_1"]) + float(r["pi_2"]) == pytest.approx(1.0)


def test_simulate_command(workdir, surface_file, tmp_path):
    args = ["simulate", "--model", str(workdir / "model.json"), "--paths", "50",
            "--seed", "3", "--out", str(tmp_path / "paths.csv"),
            "--summary", str(tmp_path / "summary.json")]
    assert cli.main(args + ["--policy", "basestock:2"]) == 0
    first = (tmp_path / "paths.csv").read_text()
    assert cli.main(args + ["--policy", "basestock:2"]) == 0
    assert (tmp_path / "paths.csv").read_text() == first
    with open(tmp_path / "paths.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 50
    assert list(rows[0]) == ["seed", "path", "total", "storage", "ordering", "stockout",
                             "salvage"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["n_paths"] == 50
    assert summary["mean"] == pytest.approx(np.mean([float(r["total"]) for r in rows]))
    assert cli.main(args + ["--policy", "optimal", "--surface", str(surface_file)]) == 0
    with pytest.raises(SystemExit):
        cli.main(args + ["--policy", "optimal"])


def test_evaluate_command(workdir, tmp_path):
    rep = tmp_path / "eval.json"
    code = cli.main(["evaluate", "--model", str(workdir / "model.json"), "--paths", "400",
                     "--dt", "0.1", "--belief-res", "10", "--seed", "1",
                     "--report", str(rep)])
    report = json.loads(rep.read_text())
    assert code == (0 if report["ok"] else 1)
    names = [c["name"] for c in report["checks"]]
    assert names[:2] == ["optimal policy", "never order"]
    assert report["grid_tol"] > 0


def test_reproduce_coarse(tmp_path):
    rep = tmp_path / "table.json"
    code = cli.main(["reproduce", "--table", "comparative", "--dt", "0.1",
                     "--belief-res", "10", "--report", str(rep)])
    rows = json.loads(rep.read_text())["rows"]
    assert [r["config"] for r in rows] == list(cli.REFERENCE_TABLE)
    assert code == (0 if all(r["ok"] for r in rows) else 1)


def test_module_entry_point(workdir):
    proc = subprocess.run([sys.executable, "-m", "censinv", "validate", "--model",
                           str(workdir / "model.json")], capture_output=True, text=True)
    assert proc.returncode == 0 and "ok" in proc.stdout
