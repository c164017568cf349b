"""Command line entry points: ``generate`` synthetic data and ``run`` the full pipeline.

All artifacts of a run are assembled in memory and written only after every
stage has succeeded, each through a temporary file and an atomic rename.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile

from . import __version__
from .cart import GrowConfig
from .config import ConfigError, RunConfig, load_config
from .counterfactual import counts_mode_replication, expand_lane_widths, simulate_effect
from .data_model import (COUNTS_FEATURES, RateParameters, aggregate_sections, ingest_csv,
                         make_dataset, train_test_split, write_csv)
from .ensemble import (boost_importance, curve_from_model, default_forest_config,
                       model_to_json, train_forest, train_lsboost, variable_importance)
from .metrics import HistogramSpec, adequacy_check
from .plots import boxplot_svg, curves_svg
from .synthetic import generate_synthetic

log = logging.getLogger("crashml")


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_atomic(path: str, data: str) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_artifacts(out_dir: str, artifacts: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, data in artifacts.items():
        write_atomic(os.path.join(out_dir, name), data)


def synthetic_artifacts(cfg: RunConfig) -> dict:
    records, truth = generate_synthetic(
        cfg.generator_n_sections, cfg.generator_effect, cfg.generator_noise_sd, cfg.seed,
        years=cfg.generator_years, base_rate=cfg.generator_base_rate,
        params=RateParameters(cfg.exposure_p), return_truth=True)
    buf = io.StringIO()
    write_csv(records, buf, cfg.column_map)
    return {"synthetic.csv": buf.getvalue(), "generator_truth.json": _dumps(truth.to_dict())}


def cmd_generate(cfg: RunConfig) -> dict:
    with _Stage("generate"):
        artifacts = synthetic_artifacts(cfg)
    with _Stage("write"):
        write_artifacts(cfg.out, artifacts)
    return artifacts


def _sensitivity_csv(curves) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["family", "n_trees", "test_mae", "test_mse"])
    for c in curves:
        for k, a, s in c.points:
            w.writerow([c.family, k, repr(a), repr(s)])
    return out.getvalue()


def _effect_artifacts(report, suffix: str, title: str) -> dict:
    return {
        f"effect_report{suffix}.json": report.to_json() + "\n",
        f"kruskal_wallis{suffix}.csv":
            report.kruskal.to_csv() if report.kruskal else "chi_squared,degree_of_freedom,p_value\n",
        f"percent_change{suffix}.csv": report.percent_change.to_csv(),
        f"nemenyi_pairwise{suffix}.csv": report.pairwise.to_csv() if report.pairwise else "",
        f"boxplot_data{suffix}.csv": report.boxplot_csv(),
        f"boxplot{suffix}.svg": boxplot_svg(report, title),
    }


def _forest_config(cfg: RunConfig, n_features: int) -> GrowConfig:
    mtry = cfg.mtry if cfg.mtry is not None else default_forest_config(n_features).mtry
    return GrowConfig(cfg.min_leaf, cfg.max_depth, min(mtry, n_features), cfg.min_gain)


def run_pipeline(cfg: RunConfig) -> dict:
    """Execute every stage and return {artifact file name: text}."""
    artifacts = {}
    params = RateParameters(cfg.exposure_p)
    with _Stage("ingest"):
        if cfg.input_path:
            with open(cfg.input_path, "rb") as fh:
                records, report = ingest_csv(fh, cfg.column_map)
        else:
            artifacts.update(synthetic_artifacts(cfg))
            records, report = ingest_csv(io.BytesIO(artifacts["synthetic.csv"].encode("utf-8")),
                                         cfg.column_map)
        artifacts["ingestion_report.json"] = report.to_json() + "\n"
    with _Stage("aggregate"):
        sections = aggregate_sections(records)
    with _Stage("dataset"):
        data = make_dataset(sections, "rate", params)
        train, test = train_test_split(data, cfg.train_fraction, cfg.seed)
    forest_config = _forest_config(cfg, data.n_features)
    stage_config = GrowConfig(cfg.stage_min_leaf, cfg.stage_max_depth, None, cfg.min_gain)
    with _Stage("train"):
        forest = train_forest(train, cfg.k_trees, forest_config, cfg.seed, cfg.threads)
        boost = train_lsboost(train, cfg.k_trees, cfg.learning_rate, stage_config, cfg.seed)
    with _Stage("sensitivity"):
        curves = [curve_from_model(boost, test, cfg.tree_counts()),
                  curve_from_model(forest, test, cfg.tree_counts())]
        artifacts["sensitivity.csv"] = _sensitivity_csv(curves)
        artifacts["sensitivity_mae.svg"] = curves_svg(curves, "mae")
        artifacts["sensitivity_mse.svg"] = curves_svg(curves, "mse")
    with _Stage("adequacy"):
        table = adequacy_check(test.y, forest.predict(test.X), boost.predict(test.X),
                               HistogramSpec(cfg.histogram_bins))
        artifacts["adequacy.csv"] = table.to_csv()
        artifacts["adequacy.json"] = table.to_json() + "\n"
        winner = forest if table.winner == "forest" else boost
    with _Stage("importance"):
        if table.winner == "forest":
            importance = variable_importance(forest, train, cfg.seed)
        else:
            importance = boost_importance(boost, test, cfg.seed)
        imp = importance.to_dict()
        imp["family"] = table.winner
        artifacts["importance.json"] = _dumps(imp)
    with _Stage("counterfactual"):
        report = simulate_effect(winner, expand_lane_widths(data, cfg.widths), "rate")
        artifacts.update(_effect_artifacts(report, "", "Effects of lane width on crash rates"))
    if cfg.counts_mode:
        with _Stage("counts_mode"):
            counts_report, _ = counts_mode_replication(
                sections, table.winner, cfg.k_trees, cfg.seed, cfg.train_fraction, cfg.widths,
                _forest_config(cfg, len(COUNTS_FEATURES)), stage_config, cfg.learning_rate,
                params, cfg.threads)
            artifacts.update(_effect_artifacts(counts_report, "_counts",
                                               "Effects of lane width on crash counts"))
    if cfg.write_models:
        with _Stage("persist"):
            artifacts["forest_model.json"] = model_to_json(forest) + "\n"
            artifacts["boost_model.json"] = model_to_json(boost) + "\n"
    config = cfg.to_dict()
    config.pop("out")
    config.pop("threads")
    artifacts["manifest.json"] = _dumps({
        "schema_version": 1,
        "package_version": __version__,
        "seed": cfg.seed,
        "winner": table.winner,
        "config": config,
        "artifacts": {name: hashlib.sha256(text.encode("utf-8")).hexdigest()
                      for name, text in sorted(artifacts.items())},
    })
    return artifacts, report


def cmd_run(cfg: RunConfig):
    artifacts, report = run_pipeline(cfg)
    with _Stage("write"):
        write_artifacts(cfg.out, artifacts)
    return artifacts, report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crashml", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("generate", "write a synthetic crash CSV and its generator truth"),
                            ("run", "run ingestion, modelling and the lane-width analysis")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML key-value config, or a previous run's manifest.json")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--threads", type=int, help="worker threads for forest training")
        p.add_argument("--out", help="output directory")
        p.add_argument("--input", dest="input_path", help="crash CSV (default: synthetic data)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, threads=args.threads, out=args.out,
                          input_path=args.input_path)
    except (ConfigError, OSError, TypeError) as exc:
        print(f"crashml: invalid config: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "generate":
            cmd_generate(cfg)
        else:
            _, report = cmd_run(cfg)
            print(f"lane-width ordering (high to low): {report.ordering()}")
            if report.kruskal is not None:
                print(f"Kruskal-Wallis H={report.kruskal.h_statistic:.4f} "
                      f"df={report.kruskal.df} p={report.kruskal.p_value:.3g}")
    except StageError as exc:
        print(f"crashml: {exc}", file=sys.stderr)
        return 1
    print(f"artifacts written to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
