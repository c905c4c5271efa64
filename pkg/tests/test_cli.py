import csv
import json

import numpy as np
import pytest

from hopfbalance.cli import main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def resonant_model(path):
    # two oscillators at frequencies 1 and 2 coupled by a quadratic term
    d = [0.1, 0.2, 0.3, 0.4]
    A0 = np.zeros((4, 4))
    A0[:2, :2] = [[0, 1], [-1, 0]]
    A0[2:, 2:] = [[0, 2], [-2, 0]]
    A0 += np.diag(d)
    tensors = [{"multi_index": [i + 1], "value": list(np.eye(4)[i] * d[i])} for i in range(4)]
    tensors.append({"multi_index": [1, 1], "value": [1.0, 0, 0, 0]})
    doc = {"name": "res", "n": 4, "m": 4, "p": 4, "A0": A0.tolist(),
           "A1": np.zeros((4, 4)).tolist(), "B": np.eye(4).tolist(), "C": np.eye(4).tolist(),
           "mu_name": "mu", "aux": {"tau": 1.0},
           "g": {"type": "polynomial", "order": 2, "tensors": tensors}}
    path.write_text(json.dumps(doc))
    return path


def test_hopf_leukemia_row(tmp_path):
    code = main(["hopf", "--model", "leukemia", "--fix", "tau=4.9740704569",
                 "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "hopf_curve.csv")
    assert rows[0] == ["param", "omega", "mu", "tau", "nondegenerate"]
    vals = [float(x) for x in rows[1]]
    assert abs(vals[1] - 0.2624792103) < 1e-9 and abs(vals[2] - 0.1100351576) < 1e-9
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["outputs"] == ["hopf_curve.csv"] and man["command"] == "hopf"


def test_hopf_pyragas_shorthand(tmp_path):
    assert main(["hopf", "--model", "pyragas", "--kappa", "0", "--fix", "tau=1",
                 "--out", str(tmp_path)]) == 0
    row = [float(x) for x in read_csv(tmp_path / "hopf_curve.csv")[1]]
    assert abs(row[1] - 1) < 1e-12 and abs(row[2]) < 1e-12


def test_csv_fields_round_trip(tmp_path):
    main(["hopf", "--model", "pyragas", "--param", "kappa=-0.05", "--fix", "tau=2",
          "--out", str(tmp_path)])
    text = (tmp_path / "hopf_curve.csv").read_text()
    for field in text.splitlines()[1].split(",")[:4]:
        assert repr(float(field)) == field or float("%.17g" % float(field)) == float(field)


@pytest.mark.parametrize("argv", [
    ["hopf", "--model", "no_such_model"],
    ["coeffs", "--model", "pyragas", "--q", "0"],
    ["hopf", "--model", "pyragas", "--param", "nonsense=1"],
    ["hopf", "--model", "pyragas", "--fix", "tau"],
    ["hopf"],
])
def test_input_errors(tmp_path, argv, capsys):
    if len(argv) > 1:
        argv = argv + ["--out", str(tmp_path)]
    assert main(argv) == 2


def test_malformed_model_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x", "n": 2')
    assert main(["hopf", "--model", str(bad), "--out", str(tmp_path)]) == 2


def test_nothing_found(tmp_path):
    code = main(["hopf", "--model", "leukemia", "--fix", "tau=4", "--range", "4:3:0.5",
                 "--out", str(tmp_path)])
    assert code == 3


def test_resonance_exit_code(tmp_path, capsys):
    model = resonant_model(tmp_path / "res.json")
    code = main(["coeffs", "--model", str(model), "--fix", "tau=1", "--guess", "1:0",
                 "--q", "1", "--out", str(tmp_path / "o")])
    assert code == 4
    assert "j=2" in capsys.readouterr().err


def test_coeffs_pyragas(tmp_path):
    assert main(["coeffs", "--model", "pyragas", "--param", "kappa=-0.05", "--fix", "tau=2",
                 "--q", "3", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "coeffs.json").read_text())
    xi = [complex(x["re"], x["im"]) for x in doc["xi"]]
    assert abs(xi[0]) > 1 and abs(xi[1]) < 1e-10 and abs(xi[2]) < 1e-10
    assert {"lambda_hat", "v", "w", "a", "expansion"} <= set(doc)


def test_compare_empty_range(tmp_path):
    assert main(["compare", "--model", "leukemia", "--fix", "tau=4.7", "--range", "0.2:0.1:0.01",
                 "--out", str(tmp_path)]) == 0
    raw = (tmp_path / "branch.csv").read_bytes()
    assert raw == b"mu,theta_pred,amp_pred,amp_sim,freq_pred,freq_sim,converged\r\n"


def test_classify_single_point(tmp_path):
    assert main(["classify", "--model", "pyragas", "--kappa", "0", "--fix", "tau=1",
                 "--q", "1", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["report"]["diagram_label"] == "q1_subcritical"
    assert read_csv(tmp_path / "varieties.csv") == [["p1", "p2", "variety"]]


def _run_twice(tmp_path, monkeypatch, argv):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir(parents=True)
        monkeypatch.chdir(d)
        assert main(argv + ["--out", "out"]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted((d / "out").iterdir())})
    return outs


def test_determinism_hopf_range(tmp_path, monkeypatch):
    a, b = _run_twice(tmp_path, monkeypatch,
                      ["hopf", "--model", "pyragas", "--param", "kappa=-0.05",
                       "--fix", "tau=1.5", "--range", "1.5:2.5:0.25", "--svg"])
    assert set(a) == {"hopf_curve.csv", "hopf_curve.svg", "manifest.json"}
    assert a == b


def test_determinism_classify_threads(tmp_path, monkeypatch):
    argv = ["classify", "--model", "pyragas", "--param", "kappa=-0.06:-0.04:3",
            "--param", "tau=1.9:2.1:2", "--q", "1", "--guess", "1.08:-0.03"]
    monkeypatch.setenv("HOPFBALANCE_THREADS", "1")
    a, _ = _run_twice(tmp_path / "t1", monkeypatch, argv)
    monkeypatch.setenv("HOPFBALANCE_THREADS", "2")
    b, _ = _run_twice(tmp_path / "t2", monkeypatch, argv)
    assert a == b
    rows = [r for r in csv.reader(a["varieties.csv"].decode().splitlines())]
    assert rows[0] == ["p1", "p2", "variety"] and len(rows) > 1
