"""Flat run configuration loaded from a YAML (or JSON manifest) document."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import yaml

from .synthetic import PLANTED_EFFECT


class ConfigError(ValueError):
    pass


GENERATOR_KEYS = ("generator_n_sections", "generator_years", "generator_noise_sd",
                  "generator_effect", "generator_base_rate")


@dataclass
class RunConfig:
    input_path: str | None = None
    column_map: dict | None = None
    generator_n_sections: int = 1818
    generator_years: int = 10
    generator_noise_sd: float = 0.2
    generator_effect: dict = field(default_factory=lambda: dict(PLANTED_EFFECT))
    generator_base_rate: float = 30.0
    counts_mode: bool = False
    train_fraction: float = 0.8
    k_trees: int = 200
    min_leaf: int = 5
    max_depth: int | None = None
    mtry: int | None = None
    min_gain: float = 0.0
    stage_min_leaf: int = 5
    stage_max_depth: int | None = 5
    learning_rate: float = 1.0
    histogram_bins: int = 20
    widths: list = field(default_factory=lambda: [9.0, 10.0, 11.0, 12.0])
    exposure_p: float = 0.8
    sensitivity_counts: list | None = None
    write_models: bool = True
    seed: int = 0
    threads: int = 1
    out: str = "out"

    def validate(self) -> "RunConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(0 < self.train_fraction < 1, f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        need(self.k_trees >= 1, "k_trees must be >= 1")
        need(self.min_leaf >= 1 and self.stage_min_leaf >= 1, "min_leaf values must be >= 1")
        need(self.max_depth is None or self.max_depth >= 0, "max_depth must be >= 0")
        need(self.stage_max_depth is None or self.stage_max_depth >= 0,
             "stage_max_depth must be >= 0")
        need(self.mtry is None or self.mtry >= 1, "mtry must be >= 1")
        need(self.min_gain >= 0, "min_gain must be >= 0")
        need(0 < self.learning_rate <= 1, "learning_rate must lie in (0, 1]")
        need(self.histogram_bins >= 1, "histogram_bins must be >= 1")
        need(len(self.widths) >= 2, "need at least two lane widths")
        need(0 <= self.exposure_p <= 1, "exposure_p must lie in [0, 1]")
        need(0 <= self.seed < 2 ** 64, "seed must be an unsigned 64-bit integer")
        need(self.threads >= 1, "threads must be >= 1")
        need(self.generator_n_sections >= 1, "generator_n_sections must be >= 1")
        need(self.generator_years >= 1, "generator_years must be >= 1")
        need(self.generator_noise_sd >= 0, "generator_noise_sd must be >= 0")
        need(isinstance(self.generator_effect, dict) and self.generator_effect,
             "generator_effect must be a non-empty mapping")
        if self.sensitivity_counts is not None:
            c = self.sensitivity_counts
            need(c and all(b > a for a, b in zip(c, c[1:])) and c[0] >= 1 and c[-1] <= self.k_trees,
                 "sensitivity_counts must increase strictly within [1, k_trees]")
        for name in ("train_fraction", "learning_rate", "min_gain", "exposure_p"):
            need(math.isfinite(getattr(self, name)), f"{name} must be finite")
        return self

    def tree_counts(self) -> list:
        if self.sensitivity_counts:
            return list(self.sensitivity_counts)
        grid = [1, 5, 10, 25, 50, 75, 100, 125, 150, 175, 200]
        return sorted({k for k in grid if k < self.k_trees} | {self.k_trees})

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["generator_effect"] = {float(k): float(v) for k, v in sorted(self.generator_effect.items())}
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_FLOATS = {"generator_noise_sd", "generator_base_rate", "train_fraction", "min_gain",
           "learning_rate", "exposure_p"}


def config_from_dict(raw: dict) -> RunConfig:
    manifest = "config" in raw and "schema_version" in raw
    if manifest:
        raw = raw["config"]
    unknown = set(raw) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if not manifest and raw.get("input_path") and any(k in raw for k in GENERATOR_KEYS):
        raise ConfigError("give either input_path or generator_* settings, not both")
    values = dict(raw)
    try:
        for name in _FLOATS & set(values):
            values[name] = float(values[name])
        if "generator_effect" in values:
            values["generator_effect"] = {float(k): float(v)
                                          for k, v in values["generator_effect"].items()}
        if "widths" in values:
            values["widths"] = [float(w) for w in values["widths"]]
    except (TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    return RunConfig(**values)


def load_config(path: str | None, **overrides) -> RunConfig:
    raw = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ConfigError("config must be a key-value mapping")
    cfg = config_from_dict(raw)
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()
