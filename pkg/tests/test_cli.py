import json

import numpy as np
import pytest

from netreg.cli import main
from netreg.simulation import ScenarioConfig, build_scenario


def write_dataset(tmp_path, X, Y, A, communities=None):
    i, j = np.nonzero(np.triu(A))
    (tmp_path / "g.edges").write_text("".join(f"{a + 1} {b + 1}\n" for a, b in zip(i, j)))
    lines = ["x1,x2,x3,x4,y"] + [",".join(f"{v:.17g}" for v in (*x, y)) for x, y in zip(X, Y)]
    (tmp_path / "x.csv").write_text("\n".join(lines) + "\n")
    paths = {"network": str(tmp_path / "g.edges"), "covariates": str(tmp_path / "x.csv")}
    if communities is not None:
        (tmp_path / "c.txt").write_text("".join(f"{g + 1}\n" for g in communities))
        paths["communities"] = str(tmp_path / "c.txt")
    return paths


@pytest.fixture
def dataset(tmp_path):
    X, Y, A, truth = build_scenario(ScenarioConfig(n=300, density="n_two_thirds"), 0)
    return write_dataset(tmp_path, X, Y, A, truth["communities"])


def data_flags(paths, k=4):
    return ["--network", paths["network"], "--covariates", paths["covariates"],
            "--response", "y", "--k", str(k)]


def test_fit_writes_report(dataset, tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(["fit", *data_flags(dataset), "--r", "1", "--out", str(out), "--no-timestamp"])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["r"] == 1 and report["K"] == 4
    assert [row["name"] for row in report["coefficients"]] == ["x1", "x2", "x3", "x4"]
    assert abs(report["coefficients"][1]["beta"] - 1) < 0.2
    text = capsys.readouterr().out
    assert "network effect" in text


def test_fit_is_deterministic(dataset, tmp_path):
    outs = []
    for name in ("a.json", "b.json"):
        path = tmp_path / name
        assert main(["fit", *data_flags(dataset), "--r", "auto-bootstrap", "--n-bootstrap", "3",
                     "--seed", "4", "--out", str(path), "--no-timestamp"]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_timestamp_included_by_default(dataset, tmp_path):
    path = tmp_path / "r.json"
    main(["fit", *data_flags(dataset), "--r", "1", "--out", str(path)])
    assert "timestamp" in json.loads(path.read_text())


def test_seed_from_environment(dataset, tmp_path, monkeypatch):
    flags = [*data_flags(dataset), "--method", "bootstrap", "--n-bootstrap", "3",
             "--no-timestamp"]
    monkeypatch.setenv("NETREG_SEED", "11")
    main(["select-r", *flags, "--out", str(tmp_path / "env.json")])
    monkeypatch.delenv("NETREG_SEED")
    main(["select-r", *flags, "--seed", "11", "--out", str(tmp_path / "flag.json")])
    assert (tmp_path / "env.json").read_bytes() == (tmp_path / "flag.json").read_bytes()


def test_test_network_effect(dataset, capsys):
    assert main(["test-network-effect", *data_flags(dataset), "--r", "1",
                 "--phat", "sbm", "--communities", dataset["communities"]]) == 0
    assert "df=3" in capsys.readouterr().out


@pytest.mark.parametrize("method", ["bootstrap", "threshold"])
def test_select_r(dataset, tmp_path, capsys, method):
    out = tmp_path / "r.json"
    assert main(["select-r", *data_flags(dataset), "--method", method, "--n-bootstrap", "5",
                 "--out", str(out), "--no-timestamp"]) == 0
    report = json.loads(out.read_text())
    assert report["method"] == method
    if method == "bootstrap":
        assert report["r_hat"] == 1


def test_missing_column_exits_2(dataset, capsys):
    code = main(["fit", "--network", dataset["network"], "--covariates", dataset["covariates"],
                 "--response", "income", "--k", "4", "--r", "1"])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "MissingColumn" and err["exit_code"] == 2


def test_block_model_needs_communities(dataset, capsys):
    assert main(["fit", *data_flags(dataset), "--r", "1", "--phat", "sbm"]) == 2


def test_missing_file_exits_2(tmp_path, capsys):
    code = main(["fit", "--network", str(tmp_path / "none"), "--covariates",
                 str(tmp_path / "none.csv"), "--response", "y", "--k", "2", "--r", "0"])
    assert code == 2


def test_numerical_failure_exits_3(tmp_path, capsys):
    rng = np.random.default_rng(0)
    n = 6
    A = np.ones((n, n)) - np.eye(n)
    paths = write_dataset(tmp_path, rng.standard_normal((n, 4)), rng.standard_normal(n), A)
    code = main(["fit", *data_flags(paths, k=4), "--r", "0"])
    assert code == 3
    assert json.loads(capsys.readouterr().err)["error"] == "DegreesOfFreedomExhausted"


def test_simulate_writes_csv_and_json(tmp_path, capsys):
    base = tmp_path / "sim"
    args = ["simulate", "--scenario", "table2", "--n", "200", "--density", "n23", "--reps", "3",
            "--seed", "7", "--out", str(base), "--no-timestamp"]
    assert main(args) == 0
    csv_text = (tmp_path / "sim.csv").read_text()
    assert csv_text.startswith("method,n,density,metric,value,mc_stderr,reps,failures")
    assert "bias_sd_ratio" in csv_text
    first = (tmp_path / "sim.json").read_bytes()
    assert main(args) == 0
    assert (tmp_path / "sim.json").read_bytes() == first
    assert json.loads(first)["wall_time"] is None


def test_simulate_comparison_fast(tmp_path, capsys):
    assert main(["simulate", "--scenario", "table7", "--n", "200", "--reps", "4", "--fast",
                 "--methods", "SP,OLS", "--density", "sqrt"]) == 0
    assert "relative_mse" in capsys.readouterr().out


def test_concentration(tmp_path, capsys):
    assert main(["concentration", "--n", "200", "--reps", "3",
                 "--out", str(tmp_path / "c.json")]) == 0
    assert (tmp_path / "c.csv").exists()
