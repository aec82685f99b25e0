import json
import subprocess
import sys

import numpy as np
import pytest

from vastream.cli import EXIT_INFEASIBLE, EXIT_INVALID, SpecError, main, read_spec_file
from vastream.experiment import demo_train_config
from vastream.gail import encoded_width, make_policy


def run(*argv):
    return main([str(a) for a in argv])


def summary(d):
    return json.loads((d / "summary.json").read_text())


def test_simulate_golden_on_generous_trace(tmp_path):
    assert run("simulate", "--policy", "fixed", "--config-id", 0, "--trace", "generous", "--out", tmp_path) == 0
    assert summary(tmp_path)["mean_accuracy"] == 1.0
    for name in ("chunks.csv", "accuracy_cdf.csv", "lag_cdf.csv", "manifest.json"):
        assert (tmp_path / name).exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "ok" and "chunks" in manifest["files"]


def test_expert_plan_length(tmp_path):
    assert run("expert", "--max-lag", 1.0, "--lag-step", 0.1, "--out", tmp_path) == 0
    lines = (tmp_path / "plan.csv").read_text().splitlines()
    assert lines[0] == "chunk_idx,config_id" and len(lines) == 301
    assert summary(tmp_path)["max_lag"] <= 1.0


def test_expert_infeasible_exit_code(tmp_path):
    trace = tmp_path / "thin.csv"
    trace.write_text("0,10.0\n")
    rc = run("expert", "--trace", trace, "--max-lag", 0.0, "--lag-step", 0.1, "--out", tmp_path / "o")
    assert rc == EXIT_INFEASIBLE
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["status"] == "infeasible"


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--config-id", "999"],
        ["simulate", "--trace", "missing.csv"],
        ["simulate", "--policy", "agent"],
        ["simulate", "--policy", "profiling", "--window", "4", "--segment", "4"],
        ["expert", "--max-lag", "0.55"],
        ["train", "--lr", "0"],
    ],
)
def test_invalid_inputs_exit_2(tmp_path, argv):
    assert run(*argv, "--out", tmp_path) == EXIT_INVALID


def test_train_zero_epochs_is_initial_policy(tmp_path):
    assert run("train", "--epochs", 0, "--seed", 4, "--demos", 1, "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "checkpoint.json").read_text())
    cfg = demo_train_config(epochs=0, seed=4)
    rng = np.random.default_rng(4)
    init = make_policy(encoded_width(8), 216, cfg.hidden, rng)
    for k, v in init.params.items():
        assert np.array_equal(np.array(doc["params"][k]), v)
    assert doc["epoch"] == 0 and doc["seed"] == 4


def test_spec_file_and_flag_precedence(tmp_path):
    spec = tmp_path / "run.spec"
    spec.write_text("# golden run\npolicy = fixed\nconfig-id = 5\ntrace = generous\nout = %s\n" % (tmp_path / "a"))
    assert run("simulate", "--spec", spec) == 0
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["args"]["config_id"] == 5
    assert run("simulate", "--spec", spec, "--config-id", 7, "--out", tmp_path / "b") == 0
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["args"]["config_id"] == 7


def test_spec_file_errors(tmp_path):
    spec = tmp_path / "bad.spec"
    spec.write_text("colour = blue\n")
    assert run("simulate", "--spec", spec, "--out", tmp_path) == EXIT_INVALID
    spec.write_text("no equals sign\n")
    with pytest.raises(SpecError):
        read_spec_file(spec)


def test_features_and_correlate(tmp_path):
    assert run("features", "--chunks", 3, "--out", tmp_path / "f") == 0
    pgm = (tmp_path / "f" / "maps" / "chunk_0000.pgm").read_bytes()
    assert pgm.startswith(b"P5 120 68 255\n")
    assert run("correlate", "--camera", "C", "--out", tmp_path / "c") == 0
    rules = json.loads((tmp_path / "c" / "rules.json").read_text())["rules"]
    assert [(r["source"], r["target"]) for r in rules] == [("A", "C")]


def test_report_merges_runs(tmp_path):
    run("simulate", "--trace", "generous", "--out", tmp_path / "g")
    run("simulate", "--config-id", 215, "--out", tmp_path / "cheap")
    assert run("report", "golden=%s" % (tmp_path / "g"), "cheap=%s" % (tmp_path / "cheap"), "--out", tmp_path / "r") == 0
    rows = (tmp_path / "r" / "comparison.csv").read_text().splitlines()
    assert rows[0].startswith("name,n_chunks,mean_accuracy") and len(rows) == 3
    assert rows[1].startswith("golden,300,1.0")


def test_cli_runs_are_byte_identical(tmp_path):
    spec = tmp_path / "train.spec"
    spec.write_text("epochs = 2\nrollouts = 1\ndemos = 1\nval-every = 1\nseed = 3\n")
    for name in ("a", "b"):
        assert run("train", "--spec", spec, "--out", tmp_path / name) == 0
    for f in ("checkpoint.json", "training_log.csv", "chunks.csv", "accuracy_cdf.csv", "lag_cdf.csv",
              "summary.json", "demonstrations.jsonl"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    ma.pop("elapsed_s"), mb.pop("elapsed_s")
    ma["args"].pop("out"), mb["args"].pop("out")
    assert ma == mb


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "vastream.cli", "simulate", "--trace", "generous",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "summary" in json.loads(proc.stdout)
