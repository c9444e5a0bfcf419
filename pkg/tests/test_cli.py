import csv
import json

import pytest

from dtcsim.circuit import Circuit
from dtcsim.cli import main


def test_transpile(tmp_path, capsys):
    out = tmp_path / "step.json"
    assert main(["transpile", "--qubits", "6", "--range", "2", "--out", str(out)]) == 0
    c = Circuit.load(out)
    assert c.num_qubits == 6
    rep = json.loads((tmp_path / "step.report.json").read_text())
    assert rep["range"] == 2 and rep["optimized"]
    assert rep["verdict"]["expected"] == [15, 9]
    assert "longest path" in capsys.readouterr().out


def test_transpile_naive_periodic(tmp_path):
    out = tmp_path / "naive.json"
    assert main(["transpile", "--qubits", "5", "--range", "2", "--boundary", "periodic",
                 "--optimize", "off", "--couplings", "0.3,0.1", "--out", str(out)]) == 0
    rep = json.loads((tmp_path / "naive.report.json").read_text())
    assert not rep["optimized"] and rep["relabel"] == list(range(5))


def test_bad_arguments():
    with pytest.raises(SystemExit):
        main(["transpile", "--qubits", "4"])
    with pytest.raises(ValueError):
        main(["transpile", "--qubits", "4", "--range", "4", "--out", "x.json"])


def test_run_zne_report(tmp_path, capsys):
    cfg = {"spec": {"num_qubits": 4, "range": 1, "epsilon": 0.1},
           "noise": {"p1": 1e-3, "p2": 2e-2, "p_m": 0.01, "T1_us": 100.0,
                     "tau_1q_ns": 35.56, "tau_2q_ns": 300.0, "tau_m_us": 3.55},
           "steps": list(range(6)), "scales": [1.0, 2.0], "shots": 128,
           "bootstrap_resamples": 20, "fit_window": [1, 5]}
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(path), "--root", str(tmp_path / "runs"), "--seed", "3"]) == 0
    (run_dir,) = (tmp_path / "runs").iterdir()
    assert json.loads((run_dir / "plan.json").read_text())["seed"] == 3
    before = json.loads((run_dir / "zne.json").read_text())
    assert main(["zne", "--run-dir", str(run_dir)]) == 0
    after = json.loads((run_dir / "zne.json").read_text())
    assert after["intercept"] == before["intercept"]
    assert {"scales", "slope", "intercept", "dintercept", "mitigated"} <= set(after)
    assert main(["report", "--run-dir", str(run_dir)]) == 0
    rep = run_dir / "report"
    with open(rep / "gamma_vs_s.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["s", "gamma", "dgamma", "linear_fit"] and len(rows) == 4
    assert len(list((rep / "bootstrap").glob("*.csv"))) == 12
    assert "ZNE" in capsys.readouterr().out
