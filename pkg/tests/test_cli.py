import json
import subprocess
import sys

import pytest

from crossgcn.cli import ConfigError, load_config, main, parse_override
from crossgcn.graphdata import check_cross_rule, load_dataset, make_synthetic_dataset, save_dataset
from crossgcn.model import load_checkpoint


@pytest.fixture
def workspace(tmp_path):
    save_dataset(make_synthetic_dataset(n_nodes=300, n_classes=3, n_features=8, seed=3, n_val=60, n_test=90,
                                        name="syn"), tmp_path / "data" / "syn")
    (tmp_path / "gcn.toml").write_text('dataset = "data/syn"\nvariant = "gcn"\nepochs = 6\nn_splits = 2\n')
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


# --------------------------------------------------------------------------
# configuration


def test_config_defaults_and_file_resolution(workspace):
    cfg = load_config(workspace / "gcn.toml")
    assert cfg.dataset == str(workspace / "data" / "syn")
    assert (cfg.variant, cfg.epochs, cfg.hidden, cfg.dropout, cfg.weight_decay) == ("gcn", 6, 16, 0.5, 5e-4)


def test_overrides_and_aliases(workspace):
    cfg = load_config(workspace / "gcn.toml", ["rho=0.2", "K=3", "alpha=[1, 0.5, 0.25]", "variant=cross"], seed=9)
    assert (cfg.dropout, cfg.order, cfg.alpha, cfg.variant, cfg.seed) == (0.2, 3, (1.0, 0.5, 0.25), "cross", 9)


@pytest.mark.parametrize("override, message", [
    ("hiden=32", "unknown config key 'hiden'"),
    ("hidden=1.5", "hidden must be an integer"),
    ("layers=3", "layers must be 1 or 2"),
    ("dropout=yes", "dropout must be a number"),
    ("cross_layers=[1, 2]", "toggles must be 0 or 1"),
    ("novalue", "key=value"),
])
def test_bad_overrides(workspace, override, message):
    with pytest.raises(ConfigError, match=message):
        load_config(workspace / "gcn.toml", [override])


def test_unknown_key_in_file_rejected(tmp_path):
    (tmp_path / "c.toml").write_text("epoch = 5\n")
    with pytest.raises(ConfigError, match="unknown config key 'epoch'"):
        load_config(tmp_path / "c.toml")


def test_bare_word_override_is_a_string():
    assert parse_override("variant=gin") == ("variant", "gin")
    assert parse_override("lr=0.05") == ("lr", 0.05)


# --------------------------------------------------------------------------
# prepare


def test_prepare_synthetic_and_cross_are_deterministic(tmp_path):
    base = tmp_path / "six"
    assert run("prepare", "--synthetic", "--classes", 6, "--nodes", 400, "--out", base) == 0
    outs = []
    for name in ("a", "b"):
        assert run("prepare", "--synthesize-cross", "--base", base, "--seed", 1, "--out", tmp_path / name) == 0
        outs.append({p.name: p.read_bytes() for p in (tmp_path / name).iterdir()})
    assert outs[0] == outs[1]
    ds = load_dataset(tmp_path / "a")
    assert ds.n_features == 12 and check_cross_rule(ds.features, ds.labels).all()


def test_prepare_cross_needs_six_classes(tmp_path, capsys):
    run("prepare", "--synthetic", "--classes", 4, "--out", tmp_path / "four")
    assert run("prepare", "--synthesize-cross", "--base", tmp_path / "four", "--out", tmp_path / "x") == 2
    assert "exactly 6 classes" in capsys.readouterr().err


def test_prepare_missing_sources(tmp_path, capsys):
    assert run("prepare", "citeseer", "--in", tmp_path, "--out", tmp_path / "c") == 2
    assert "no source files for 'citeseer'" in capsys.readouterr().err


def test_prepare_malformed_source_reports_line(tmp_path, capsys):
    (tmp_path / "bad.content").write_text("a 1 0 X\nb 1 Y\n")
    (tmp_path / "bad.cites").write_text("a b\n")
    assert run("prepare", "bad", "--in", tmp_path, "--out", tmp_path / "o") == 2
    assert "bad.content:2" in capsys.readouterr().err


# --------------------------------------------------------------------------
# train and sweep


def test_train_writes_summary_and_epoch_csv(workspace):
    out = workspace / "runs" / "gcn.json"
    assert run("train", "-c", workspace / "gcn.toml", "--out", out) == 0
    summary = json.loads(out.read_text())
    assert summary["splits"] == 2 and summary["variant"] == "gcn"
    lines = out.with_suffix(".csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,train_acc,val_acc" and len(lines) == 7


def test_train_is_idempotent(workspace):
    for name in ("a", "b"):
        run("train", "-c", workspace / "gcn.toml", "--set", "n_splits=1", "--set", "seed=5",
            "--out", workspace / f"{name}.json")
    assert (workspace / "a.json").read_bytes() == (workspace / "b.json").read_bytes()
    assert (workspace / "a.csv").read_bytes() == (workspace / "b.csv").read_bytes()


def test_train_validation_errors_exit_2(workspace, capsys):
    assert run("train", "-c", workspace / "gcn.toml", "--set", "layers=3") == 2
    assert "layers must be 1 or 2" in capsys.readouterr().err
    assert run("train", "-c", workspace / "gcn.toml", "--set", "dataset=nowhere") == 2
    assert run("train", "-c", workspace / "missing.toml") == 2


def test_train_divergence_exits_3(workspace, capsys):
    assert run("train", "-c", workspace / "gcn.toml", "--set", "lr=1e300", "--set", "n_splits=1") == 3
    assert "diverged at epoch" in capsys.readouterr().err


def test_train_saves_checkpoint(workspace):
    ckpt = workspace / "p.json"
    assert run("train", "-c", workspace / "gcn.toml", "--set", "variant=cross", "--save-params", ckpt,
               "--out", workspace / "s.json") == 0
    cfg, params = load_checkpoint(ckpt)
    assert cfg.in_dim == 8 and "layer0.W2" in params and "layer0.alpha" in params


def test_sweep_csv(workspace, capsys):
    assert run("sweep", "-c", workspace / "gcn.toml", "--axis", "dropout", "--values", "0.5,0.0") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "dropout,mean_test_acc,std_test_acc,splits"
    assert [l.split(",")[0] for l in lines[1:]] == ["0.0", "0.5"]


def test_sweep_rejects_bad_pairing(workspace, capsys):
    assert run("sweep", "-c", workspace / "gcn.toml", "--axis", "alpha2") == 2
    assert "cross variant" in capsys.readouterr().err


# --------------------------------------------------------------------------
# reproduce, gradcheck, bench, oracle


def test_reproduce_filters_datasets_and_writes_artifacts(workspace):
    root = workspace / "data"
    save_dataset(make_synthetic_dataset(n_nodes=300, n_classes=3, n_features=8, seed=4, n_val=60, n_test=90),
                 root / "cora")
    out = workspace / "rep"
    assert run("reproduce", "5", "--data-root", root, "--datasets", "cora", "--set", "epochs=2",
               "--set", "n_splits=2", "--out", out) == 0
    verdicts = json.loads((out / "verdicts.json").read_text())
    assert {c["dataset"] for c in verdicts["cells"]} == {"cora"} and len(verdicts["cells"]) == 8
    assert len(list((out / "cells").iterdir())) == 8
    assert "cross-fix-2@cora" in (out / "report.txt").read_text()


def test_reproduce_missing_dataset_exits_2(tmp_path, capsys):
    assert run("reproduce", "3", "--data-root", tmp_path) == 2
    assert "citeseer-cross" in capsys.readouterr().err


def test_gradcheck_exit_codes(tmp_path, capsys):
    assert run("gradcheck", "--instances", 2, "--trials", 5) == 0
    assert "checks passed" in capsys.readouterr().out
    assert run("gradcheck", "--instances", 2, "--trials", 5, "--corrupt-gradient", "1e-3") == 3
    assert run("gradcheck", "--k", 7, "--d", 8) == 2


def test_bench_csv(tmp_path):
    out = tmp_path / "bench.csv"
    assert run("bench", "--nodes", 300, "--edges", 1200, "--features", 20, "--classes", 4, "--hidden", "8,16",
               "--epochs", 2, "--warmup", 1, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "variant,hidden,epochs,mean_seconds,std_seconds,params"
    assert [tuple(l.split(",")[:2]) for l in lines[1:]] == [
        ("gcn", "8"), ("gin", "8"), ("cross", "8"), ("gcn", "16"), ("gin", "16"), ("cross", "16")]


def test_bench_rejects_unknown_variant(capsys):
    assert run("bench", "--variants", "gat") == 2


def test_oracle_command(capsys):
    assert run("oracle", "--x", "1,2", "--factor", "1,2", "--factor", "1,1") == 0
    out = capsys.readouterr().out
    assert "brute force: 15.0" in out and "factorized:  15.0" in out
    assert run("oracle", "--x", "1,2", "--factor", "1,2,3") == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "crossgcn", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("prepare", "train", "sweep", "reproduce", "gradcheck", "bench", "oracle"):
        assert cmd in proc.stdout
