import json
import subprocess
import sys
from pathlib import Path

import pytest

from hyperformer.cli import main

TINY_CONFIG = """\
trm_hidden_dim = 16
trm_layers = 1
trm_heads = 2
moe_experts = 4
moe_top_experts = 2
conv_channels = 2
conv_kernel = 3
max_qualifiers = 1
entity_neighbors = 2
epochs = 2
batch_size = 32
learning_rate = 0.005
label_smoothing = 0.1
seed = 0
"""

TINY_SPEC = {"entities": 40, "relations": 6, "qualifier_keys": 1, "branching": 2, "contexts_per_group": 3}


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def synth_dir(tmp_path, capsys):
    code, out, _ = run(capsys, "synth", "--spec", json.dumps(TINY_SPEC), "--out", tmp_path / "data")
    assert code == 0 and json.loads(out)["train"] > 0
    return tmp_path / "data"


def test_synth_stats_and_slice(synth_dir, tmp_path, capsys):
    code, out, _ = run(capsys, "stats", synth_dir)
    stats = json.loads(out)
    assert code == 0 and stats["qualifier_ratio"] == 1.0
    code, out, _ = run(capsys, "stats", synth_dir / "train.csv", synth_dir / "test.csv")
    assert code == 0 and json.loads(out)["valid"] == 0
    code, out, _ = run(capsys, "slice", synth_dir, "--mode", "degree", "--value", 1, "--out", tmp_path / "s")
    assert code == 0
    code, out, _ = run(capsys, "stats", tmp_path / "s")
    assert json.loads(out)["train"] <= stats["train"]


def test_synth_output_is_byte_identical(tmp_path, capsys):
    for name in ("a", "b"):
        run(capsys, "synth", "--spec", json.dumps(TINY_SPEC), "--seed", 7, "--out", tmp_path / name)
    for split in ("train", "valid", "test"):
        assert (tmp_path / "a" / f"{split}.csv").read_bytes() == (tmp_path / "b" / f"{split}.csv").read_bytes()


def test_train_then_eval(synth_dir, tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(TINY_CONFIG)
    code, out, _ = run(capsys, "train", "--config", cfg, "--data-dir", synth_dir, "--out", tmp_path / "run")
    assert code == 0, out
    lines = (tmp_path / "run" / "metrics.jsonl").read_text().splitlines()
    assert [json.loads(l)["epoch"] for l in lines] == [1, 2]
    manifest = json.loads((tmp_path / "run" / "checkpoint" / "manifest.json").read_text())
    assert manifest["meta"]["relations"][-1].endswith("_inverse")
    dump = tmp_path / "ranks.csv"
    code, out, _ = run(capsys, "eval", "--checkpoint", tmp_path / "run" / "checkpoint", "--data-dir", synth_dir,
                       "--split", "test", "--dump", dump)
    report = json.loads(out)
    assert code == 0 and report["filtered"] and 0 < report["mrr"] <= 1 and dump.exists()
    code, out, _ = run(capsys, "eval", "--checkpoint", tmp_path / "run" / "checkpoint", "--data-dir", synth_dir, "--raw")
    assert json.loads(out)["filtered"] is False


def test_flops_reports_ratio(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("trm_hidden_dim = 400\ntrm_layers = 8\nmoe_experts = 64\nmoe_top_experts = 2\n")
    code, out, _ = run(capsys, "flops", "--config", cfg, "--entities", 100, "--relations", 10)
    report = json.loads(out)
    assert report["flops"]["moe_to_dense_ffn_ratio"] == pytest.approx(0.52)
    assert report["params"]["moe"]["active_per_token"] < report["params"]["moe"]["total"]
    assert "model_params" in report


def test_gradcheck_command(capsys):
    code, out, _ = run(capsys, "gradcheck", "--module", "cbi")
    assert code == 0 and json.loads(out)["max_relative_error"]["cbi"] <= 1e-3


def test_errors_are_one_line_and_nonzero(tmp_path, capsys):
    code, _, err = run(capsys, "stats", tmp_path / "missing")
    assert code == 1 and err.count("\n") == 1 and err.startswith("error: ")
    bad = tmp_path / "train.csv"
    bad.write_text("a,r,b,q\n")
    code, _, err = run(capsys, "stats", bad)
    assert code == 1 and "MalformedStatement" in err and "train.csv:1" in err


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hyperformer.cli", "stats", str(tmp_path / "nope.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and proc.stderr.startswith("error: ")
