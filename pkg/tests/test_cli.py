import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from clustab.cli import main
from clustab.distances import DistanceMatrix
from conftest import CONFIGS, FIXTURES

SPEC = {"n_assets": 12, "n_days": 150, "n_clusters": 3, "cluster_factor_weight": 0.7, "idiosyncratic_sigma": 0.3}


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(SPEC))
    return path


def small_config(tmp_path, **extra):
    cfg = {
        "experiment": "cli",
        "input": {"synthetic": {**SPEC, "seed": 4}},
        "distance": {"method": "gnpr"},
        "clustering": {"k": 3},
        "perturbation": {"type": "sliding_window", "params": {"window": 60, "step": 40}},
        **extra,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_gen_writes_panel_and_labels(tmp_path, spec_file):
    out, labels = tmp_path / "p.csv", tmp_path / "l.json"
    assert main(["gen", "--spec", str(spec_file), "--seed", "7", "--out", str(out), "--labels-out", str(labels)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0][0] == "date" and len(rows[0]) == 13 and len(rows) == 151
    assert sorted(set(json.loads(labels.read_text()).values())) == [0, 1, 2]
    again = tmp_path / "q.csv"
    main(["gen", "--spec", str(spec_file), "--seed", "7", "--out", str(again)])
    assert again.read_bytes() == out.read_bytes()


@pytest.mark.parametrize("method", ["pearson", "spearman", "euclidean", "gnpr"])
def test_distances(tmp_path, spec_file, method):
    prices, out = tmp_path / "p.csv", tmp_path / "d.csv"
    main(["gen", "--spec", str(spec_file), "--seed", "1", "--out", str(prices)])
    assert main(["distances", "--in", str(prices), "--method", method, "--out", str(out)]) == 0
    d = DistanceMatrix.from_csv(out, method)
    assert d.n_assets == 12
    np.testing.assert_allclose(d.values, d.values.T)


def test_run_is_reproducible(tmp_path):
    cfg = small_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out-dir", str(a)]) == 0
    assert main(["run", "--config", str(cfg), "--out-dir", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert "report.json" in names and "partitions.json" in names
    assert sum(n.startswith("sankey_") for n in names) == 2
    assert sum(n.startswith("distances_") for n in names) == 3
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_shipped_odd_even_config(tmp_path):
    assert main(["run", "--config", str(CONFIGS / "odd_even_gnpr.json"), "--out-dir", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["ari"]["labels"] == ["odd", "even"]
    assert report["ari"]["matrix"][0][1] >= 0.9


def test_compare(tmp_path, capsys):
    left, right = tmp_path / "l.json", tmp_path / "r.json"
    left.write_text(json.dumps({"a": 0, "b": 0, "c": 1, "d": 1, "e": 1, "f": 1}))
    right.write_text(json.dumps({"f": 5, "e": 5, "d": 5, "c": 5, "b": 2, "a": 2}))
    svg = tmp_path / "c.svg"
    assert main(["compare", "--left", str(left), "--right", str(right), "--svg", str(svg)]) == 0
    assert capsys.readouterr().out == "1.000000\n"
    assert svg.read_text().startswith("<?xml")
    right.write_text(json.dumps({"a": 0, "b": 0, "c": 1, "d": 0, "e": 1, "f": 1}))
    main(["compare", "--left", str(left), "--right", str(right)])
    assert capsys.readouterr().out.strip() != "1.000000"


def test_compare_partitions_from_run(tmp_path, capsys):
    main(["run", "--config", str(small_config(tmp_path)), "--out-dir", str(tmp_path / "o")])
    parts = json.loads((tmp_path / "o" / "partitions.json").read_text())
    left = tmp_path / "first.json"
    left.write_text(json.dumps(parts["win@0"]))
    assert main(["compare", "--left", str(left), "--right", str(left)]) == 0
    assert capsys.readouterr().out == "1.000000\n"


def test_meancorr(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["meancorr", "--in", str(FIXTURES / "prices_3x5.csv"), "--window", "3", "--step", "1", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["start_date", "end_date", "mean_correlation", "n_pairs"]
    assert len(rows) == 3
    assert all(-1 <= float(r[2]) <= 1 for r in rows[1:])


def test_data_error_exit_code_names_module(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("date,A,B\n2020-01-01,1,2\n2020-01-02,-1,2\n2020-01-03,1,2\n")
    assert main(["distances", "--in", str(bad), "--method", "pearson", "--out", str(tmp_path / "d.csv")]) == 1
    err = capsys.readouterr().err
    assert "[data]" in err and "'A'" in err and "2020-01-02" in err


def test_experiment_error_names_part(tmp_path, capsys):
    cfg = small_config(tmp_path, clustering={"k": 40})
    assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == 1
    assert "win@0" in capsys.readouterr().err


def test_missing_file_is_data_error(tmp_path):
    assert main(["meancorr", "--in", str(tmp_path / "nope.csv"), "--window", "3", "--step", "1", "--out", "x"]) == 1


def test_bad_config_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "x"}))
    assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2
    assert "usage error" in capsys.readouterr().err
    cfg.write_text("{not json")
    assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2


@pytest.mark.parametrize("argv", [["frobnicate"], ["distances", "--in", "x", "--method", "cosine", "--out", "y"], ["gen", "--bogus"]])
def test_unknown_flags_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_console_entry_point(tmp_path):
    result = subprocess.run([sys.executable, "-m", "clustab.cli", "--help"], capture_output=True, text=True)
    assert result.returncode == 0
    assert "meancorr" in result.stdout
