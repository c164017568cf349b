import json
import os

import pytest
import yaml

from crashml.cli import main, run_pipeline
from crashml.config import ConfigError, RunConfig, config_from_dict, load_config

SMALL = dict(generator_n_sections=150, generator_years=3, k_trees=12, write_models=True)


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return str(path)


def test_run_writes_artifacts(tmp_path, cfg_file, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", cfg_file, "--out", str(out), "--seed", "3"]) == 0
    names = set(os.listdir(out))
    for name in ("synthetic.csv", "ingestion_report.json", "adequacy.csv", "sensitivity.csv",
                 "importance.json", "effect_report.json", "kruskal_wallis.csv",
                 "percent_change.csv", "nemenyi_pairwise.csv", "boxplot.svg",
                 "forest_model.json", "boost_model.json", "manifest.json"):
        assert name in names
    assert not [n for n in names if n.startswith(".tmp-")]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["config"]["k_trees"] == 12
    assert "lane-width ordering" in capsys.readouterr().out


def test_run_is_reproducible_across_threads():
    a, _ = run_pipeline(RunConfig(seed=5, threads=1, **SMALL).validate())
    b, _ = run_pipeline(RunConfig(seed=5, threads=3, **SMALL).validate())
    assert a == b


def test_manifest_replays_run(tmp_path, cfg_file):
    first = tmp_path / "a"
    main(["run", "--config", cfg_file, "--out", str(first), "--seed", "8"])
    second = tmp_path / "b"
    assert main(["run", "--config", str(first / "manifest.json"), "--out", str(second)]) == 0
    for name in ("effect_report.json", "forest_model.json", "manifest.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_generate_then_run_from_csv(tmp_path, cfg_file):
    gen = tmp_path / "gen"
    assert main(["generate", "--config", cfg_file, "--out", str(gen)]) == 0
    run_cfg = tmp_path / "run.yaml"
    run_cfg.write_text(yaml.safe_dump({"k_trees": 10, "input_path": str(gen / "synthetic.csv"),
                                       "counts_mode": True}))
    out = tmp_path / "out"
    assert main(["run", "--config", str(run_cfg), "--out", str(out)]) == 0
    assert (out / "effect_report_counts.json").exists()
    assert not (out / "synthetic.csv").exists()


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("k_trees: 0\n")
    assert main(["run", "--config", str(bad)]) == 2
    bad.write_text("nonsense_key: 1\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert "invalid config" in capsys.readouterr().err


def test_failed_stage_writes_nothing(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"input_path": str(tmp_path / "missing.csv")}))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 1
    assert "stage 'ingest' failed" in capsys.readouterr().err
    assert not out.exists()


def test_config_validation():
    with pytest.raises(ConfigError):
        config_from_dict({"input_path": "x.csv", "generator_n_sections": 5})
    with pytest.raises(ConfigError):
        RunConfig(train_fraction=1.0).validate()
    with pytest.raises(ConfigError):
        RunConfig(sensitivity_counts=[5, 3]).validate()
    assert RunConfig(k_trees=30).tree_counts() == [1, 5, 10, 25, 30]
    assert load_config(None, seed=4).seed == 4
