import csv
import json
import subprocess
import sys

import pytest

from ids_adapt.cli import EXIT_CONFIG, EXIT_INPUT, EXIT_RUNTIME, build_parser, load_config, main
from ids_adapt.exceptions import ConfigurationError

SMALL = """\
learning_rate: 0.05
batch_size: 32
max_epochs: 30
patience: 10
hidden_layers: [16, 16]
synth_per_category: 100
subset_search_n: 20
feature_ratios: [0.3, 0.5]
finetune_feature_ratios: [0.5]
prune_ratios: [0.1, 0.3]
finetune_algorithms: [HT, KD]
finetune_cases: [2]
latency_samples: 5
latency_repetitions: 1
"""


@pytest.fixture(scope="module")
def staged(tmp_path_factory):
    """Run every stage once, in order, into one directory."""
    out = tmp_path_factory.mktemp("run")
    cfg = out / "cfg.yaml"
    cfg.write_text(SMALL)
    base = ["--config", str(cfg), "--out", str(out), "--jobs", "1"]
    d, m = str(out / "dataset"), str(out / "brm.json")
    steps = [
        ["synth"],
        ["train-base", "--data", d],
        ["rank", "--data", d, "--model", m],
        ["rfe", "--data", d, "--model", m, "--variant", "iterative:min-rank"],
        ["subset-search", "--data", d, "--model", m, "--ranking", str(out / "ranking.csv")],
        ["prune", "--data", d, "--model", m, "--mode", "both", "--save-ratio", "0.1"],
        ["finetune", "--data", d, "--teacher", m, "--algorithm", "KD", "--masks", str(out / "masks.json"), "--mask-ratio", "0.5"],
        ["sweep", "--data", d, "--teacher", m, "--masks", str(out / "masks.json")],
        ["report"],
    ]
    for s in steps:
        assert main(s[:1] + base + s[1:]) == 0, s
    return out


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_every_stage_writes_outputs_and_manifest(staged):
    for name in ("dataset.csv", "dataset.json", "brm.json", "brm_train.json", "ranking.csv", "rfe.csv",
                 "subsets.csv", "masks.json", "prune_neurons.csv", "prune_connections.csv", "p_brm.json",
                 "finetuned_KD_case2.json", "finetuned_KD_case2.eval.json", "leaderboard.csv", "summary.md",
                 "summary.json"):
        assert (staged / name).is_file(), name
    for cmd in ("synth", "train-base", "rank", "rfe", "subset-search", "prune", "finetune", "sweep", "report"):
        man = json.loads((staged / f"manifest-{cmd}.json").read_text())
        assert man["command"] == cmd
        assert set(man) >= {"config", "config_hash", "seed", "versions", "inputs", "outputs"}
        assert man["outputs"] and all(len(h) == 64 for h in man["outputs"].values())
        assert "created" not in json.dumps(man) and "time" not in man


def test_manifest_lists_inputs(staged):
    man = json.loads((staged / "manifest-rank.json").read_text())
    assert set(man["inputs"]) == {"dataset.csv", "dataset.json", "brm.json"}
    assert man["outputs"] == {"ranking.csv": man["outputs"]["ranking.csv"]}


def test_report_aggregates_without_inputs(staged, tmp_path):
    for name in ("brm_train.json", "rfe.csv", "subsets.csv", "prune_neurons.csv", "leaderboard.csv"):
        (tmp_path / name).write_bytes((staged / name).read_bytes())
    assert main(["report", "--out", str(tmp_path)]) == 0
    md = (tmp_path / "summary.md").read_text()
    assert "## Pruning (neurons)" in md and "connections" not in md
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary) == {"brm", "rfe", "subset_search", "prune_neurons", "finetune"}
    assert summary["finetune"]["KD"]["cells"] == sum(
        r["algorithm"] == "KD" and r["status"] == "ok" for r in rows(staged / "leaderboard.csv")
    )


def test_catalog_commands(staged, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("IDS_ADAPT_CATALOG", str(tmp_path / "cat"))
    out = str(tmp_path)
    assert main(["catalog", "put", "--model", str(staged / "brm.json"), "--data", str(staged / "dataset"), "--out", out]) == 0
    root = capsys.readouterr().out.strip()
    assert main(["catalog", "put", "--model", str(staged / "finetuned_KD_case2.json"), "--parent", root,
                 "--eval", str(staged / "finetuned_KD_case2.eval.json"), "--tag", "algorithm=KD", "--out", out]) == 0
    child = capsys.readouterr().out.strip()
    assert main(["catalog", "query", "--out", out]) == 0
    listed = [json.loads(line)["model_id"] for line in capsys.readouterr().out.splitlines()]
    assert set(listed) == {root, child}
    assert main(["catalog", "get", "--id", child, "--out", out]) == 0
    assert (tmp_path / f"{child[:16]}.json").read_bytes() == (staged / "finetuned_KD_case2.json").read_bytes()
    capsys.readouterr()
    assert main(["catalog", "query", "--max-memory", "1", "--out", out]) == 0
    assert capsys.readouterr().out == ""


def test_missing_input_is_exit_2(tmp_path, capsys):
    code = main(["rank", "--data", str(tmp_path / "none"), "--model", "x.json", "--out", str(tmp_path)])
    assert code == EXIT_INPUT
    assert "ids-adapt synth" in capsys.readouterr().err


def test_bad_config_is_exit_3(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("prune_ratios: [0.5, 1.5]\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    cfg.write_text("nonsense_key: 1\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    cfg.write_text("a: [unclosed\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_runtime_error_is_exit_4(tmp_path, capsys):
    assert main(["catalog", "get", "--id", "0" * 64, "--catalog", str(tmp_path / "c"), "--out", str(tmp_path)]) == EXIT_RUNTIME
    assert "unknown model id" in capsys.readouterr().err


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 5\nsynth_per_category: 20\n")
    assert main(["synth", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest-synth.json").read_text())
    assert man["seed"] == 9 and man["config"]["synth_per_category"] == 20


def test_load_config_defaults():
    cfg = load_config(None, {})
    assert cfg.feature_ratios == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    assert len(cfg.prune_ratios) == 19 and cfg.prune_ratios[0] == 0.05 and cfg.prune_ratios[-1] == 0.95
    assert cfg.subset_search_n == 1000 and cfg.local_categories == ["BENIGN", "DDoS"]
    assert cfg.train_config().batch_size == 512
    with pytest.raises(ConfigurationError):
        load_config(None, {"hidden_layers": []})
    with pytest.raises(ConfigurationError):
        load_config(None, {"finetune_algorithms": ["XX"]})


def test_help_lists_subcommands():
    text = build_parser().format_help()
    for cmd in ("preprocess", "synth", "train-base", "rank", "rfe", "subset-search", "prune", "finetune", "sweep",
                "catalog", "report", "pipeline"):
        assert cmd in text


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "ids_adapt", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "ids-adapt" in out.stdout
    out = subprocess.run([sys.executable, "-m", "ids_adapt", "bogus"], capture_output=True, text=True)
    assert out.returncode == 2


def test_preprocess_stage(tmp_path):
    import numpy as np
    import pandas as pd

    rng = np.random.default_rng(0)
    for i in range(2):
        n = 60
        cats = np.array(["BENIGN", "DDoS", "PortScan"])[np.arange(n) % 3]
        df = pd.DataFrame({"a": rng.random(n) + (cats != "BENIGN"), "b": rng.random(n), "Label": cats})
        df["Timestamp"] = "now"
        df.to_csv(tmp_path / f"day{i}.csv", index=False)
    code = main(["preprocess", "--input", str(tmp_path / "day0.csv"), str(tmp_path / "day1.csv"),
                 "--label-column", "Label", "--out", str(tmp_path / "o")])
    assert code == 0
    man = json.loads((tmp_path / "o" / "manifest-preprocess.json").read_text())
    assert len(man["inputs"]) == 2
    meta = json.loads((tmp_path / "o" / "dataset.json").read_text())
    assert meta["feature_names"] == ["a", "b"]
