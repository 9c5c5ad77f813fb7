import json

import numpy as np
import pytest

from deblora.adapter import LowRankAdapter
from deblora.cli import main
from deblora.features import load_features


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--benchmark", "--out", str(d)]) == 0
    return d


def test_synth_writes_features(data):
    fs = load_features(data / "features.bin")
    assert (fs.n, fs.d, fs.num_classes) == (2670, 16, 6)
    assert json.loads((data / "synth_spec.json").read_text())["d"] == 16


def test_synth_csv_and_seed(tmp_path):
    assert main(["synth", "--benchmark", "--format", "csv", "--seed", "3", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "features.csv").read_text().startswith("label,f0,")


def test_stats(data, capsys, tmp_path):
    assert main(["stats", str(data / "features.bin"), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "dataset imbalance ratio: 50.00" in out
    assert json.loads((tmp_path / "stats.json").read_text())


def test_stages_compose_to_pipeline(data, tmp_path):
    feats = str(data / "features.bin")
    staged, whole = tmp_path / "staged", tmp_path / "whole"
    common = ["--seed", "4", "--out", str(staged)]
    assert main(["cluster", feats, "--k", "16", *common]) == 0
    assert main(["debias", feats, "--clusters", str(staged / "clusters.json"), *common]) == 0
    assert main(["train", feats, "--targets", str(staged / "targets.bin"), "--plan", str(staged / "plan.json"),
                 "--epochs", "40", *common]) == 0
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 16, "adapter": {"epochs": 40}}))
    assert main(["pipeline", feats, "--config", str(cfg), "--seed", "4", "--out", str(whole)]) == 0
    for name in ("clusters.json", "plan.json", "targets.bin", "adapter.json"):
        assert (staged / name).read_bytes() == (whole / name).read_bytes(), name


def test_probe_and_analyze(data, tmp_path, capsys):
    feats = str(data / "features.bin")
    out = tmp_path / "p"
    assert main(["pipeline", feats, "--k", "16", "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["probe", feats, "--adapter", str(out / "adapter.json"), "--compare", "--out", str(out)]) == 0
    table = capsys.readouterr().out
    assert "baseline" in table and "adapted" in table and "Tail" in table
    report = json.loads((out / "probe_report.json").read_text())
    assert report["baseline"]["split_hash"] == report["adapted"]["split_hash"]
    assert main(["analyze", feats, "--targets", str(out / "targets.bin")]) == 0
    assert "intra_tail" in capsys.readouterr().out
    assert main(["analyze", feats, "--adapter", str(out / "adapter.json"), "--out", str(out)]) == 0
    assert (out / "distances.json").exists()


def test_exit_code_validation(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("label,f0\n0,nan\n")
    assert main(["stats", str(p)]) == 1
    assert "row 0" in capsys.readouterr().err


def test_exit_code_io(tmp_path):
    assert main(["stats", str(tmp_path / "missing.bin")]) == 2


def test_exit_code_numeric(data, tmp_path, capsys):
    code = main(["pipeline", str(data / "features.bin"), "--k", "8", "--out", str(tmp_path),
                 "--config", str(_cfg(tmp_path, {"adapter": {"learning_rate": 1e6, "epochs": 20}}))])
    assert code == 3
    assert "in stage train" in capsys.readouterr().err


def test_exit_code_bad_config(data, tmp_path):
    assert main(["pipeline", str(data / "features.bin"), "--config", str(_cfg(tmp_path, {"nope": 1}))]) == 1


def test_train_writes_loadable_adapter(data, tmp_path):
    feats = str(data / "features.bin")
    assert main(["cluster", feats, "--k", "8", "--out", str(tmp_path)]) == 0
    assert main(["debias", feats, "--clusters", str(tmp_path / "clusters.json"), "--tail-only", "--out", str(tmp_path)]) == 0
    assert main(["train", feats, "--targets", str(tmp_path / "targets.bin"), "--plan", str(tmp_path / "plan.json"),
                 "--rank", "2", "--lr", "0.001", "--epochs", "20", "--out", str(tmp_path)]) == 0
    ad = LowRankAdapter.load(tmp_path / "adapter.json")
    assert ad.rank == 2 and np.isfinite(ad.B).all()


def _cfg(tmp_path, obj):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(obj))
    return p
