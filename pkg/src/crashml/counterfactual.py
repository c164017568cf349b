"""Lane-width what-if simulation.

Every observation is replicated once per candidate lane width with all other
predictors held fixed, a trained ensemble predicts each replica, and the
per-width prediction groups are summarised and compared.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .cart import GrowConfig
from .data_model import AggregatedSection, Dataset, RateParameters, make_dataset, train_test_split
from .ensemble import train_forest, train_lsboost
from .stats import (KruskalWallisResult, PairwiseMatrix, PercentChangeTable,
                    boxplot_summary, kruskal_wallis, nemenyi, percent_changes)

DEFAULT_WIDTHS = (9.0, 10.0, 11.0, 12.0)
LANE_WIDTH = "lane_width"


@dataclass(frozen=True, eq=False)
class CounterfactualDataset:
    """Rows ordered row-major: original row i appears once per width, widths ascending."""

    X: np.ndarray
    source_row: np.ndarray
    width: np.ndarray
    widths: tuple
    lane_column: int
    n_original: int


def expand_lane_widths(dataset: Dataset, widths=DEFAULT_WIDTHS) -> CounterfactualDataset:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    widths = tuple(sorted({float(w) for w in widths}))
    if not widths:
        raise ValueError("need at least one lane width")
    if LANE_WIDTH not in dataset.feature_names:
        raise ValueError("dataset has no lane_width feature to vary")
    col = dataset.feature_index(LANE_WIDTH)
    n, w = len(dataset), len(widths)
    X = np.repeat(dataset.X, w, axis=0)
    width = np.tile(np.array(widths), n)
    X[:, col] = width
    X.flags.writeable = False
    return CounterfactualDataset(X, np.repeat(np.arange(n), w), width, widths, col, n)


@dataclass(frozen=True)
class EffectReport:
    widths: tuple
    summaries: tuple          # GroupSummary per width
    marginal_means: tuple
    percent_change: PercentChangeTable
    kruskal: KruskalWallisResult | None
    pairwise: PairwiseMatrix | None
    response_mode: str
    grand_mean: float

    @property
    def effect_detected(self) -> bool:
        return self.kruskal is not None and self.kruskal.p_value < 0.05

    def ordering(self) -> list:
        """Widths sorted by marginal mean prediction, highest first."""
        return [w for _, w in sorted(zip(self.marginal_means, self.widths), key=lambda t: -t[0])]

    def to_dict(self) -> dict:
        label = "crash_rate" if self.response_mode == "rate" else "crash_count"
        return {
            "schema_version": 1,
            "response_mode": self.response_mode,
            "response_label": label,
            "widths": list(self.widths),
            "marginal_means": list(self.marginal_means),
            "grand_mean": self.grand_mean,
            "ordering_high_to_low": self.ordering(),
            "groups": [dict(width=w, **s.to_dict()) for w, s in zip(self.widths, self.summaries)],
            "percent_change": self.percent_change.to_dict(),
            "kruskal_wallis": self.kruskal.to_dict() if self.kruskal else None,
            "nemenyi": self.pairwise.to_dict() if self.pairwise else None,
            "effect_detected": self.effect_detected,
            "note": None if self.kruskal else "no detectable effect: all predictions identical",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def boxplot_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["lane_width", "n", "mean", "min", "q1", "median", "q3", "max",
                    "whisker_low", "whisker_high", "n_outliers"])
        for width, s in zip(self.widths, self.summaries):
            w.writerow([width, s.n, repr(s.mean), repr(s.minimum), repr(s.q1), repr(s.median),
                        repr(s.q3), repr(s.maximum), repr(s.whisker_low), repr(s.whisker_high),
                        len(s.outliers)])
        return out.getvalue()


def simulate_effect(model, expanded: CounterfactualDataset, response_mode: str = "rate",
                    ) -> EffectReport:
    """Predict every replica with ``model`` and compare the per-width groups."""
    if len(model.features) != expanded.X.shape[1]:
        raise ValueError("model and expanded data disagree on the number of features")
    pred = model.predict(expanded.X)
    by_width = pred.reshape(expanded.n_original, len(expanded.widths)).T
    groups = [np.ascontiguousarray(g) for g in by_width]
    summaries = tuple(boxplot_summary(g) for g in groups)
    means = tuple(float(g.mean()) for g in groups)
    grand = float(pred.mean())
    pct = percent_changes(dict(zip(expanded.widths, means)), grand)
    if len(groups) >= 2 and pred.min() != pred.max():
        kw = kruskal_wallis(groups)
        pw = nemenyi(groups, labels=expanded.widths)
    else:
        kw = pw = None
    return EffectReport(expanded.widths, summaries, means, pct, kw, pw, response_mode, grand)


def train_family(family: str, train: Dataset, k: int = 200, seed: int = 0,
                 forest_config: GrowConfig | None = None, stage_config: GrowConfig | None = None,
                 learning_rate: float = 1.0, threads: int = 1):
    if family == "forest":
        return train_forest(train, k, forest_config, seed, threads)
    if family == "boost":
        return train_lsboost(train, k, learning_rate, stage_config, seed)
    raise ValueError(f"unknown model family {family!r}")


def counts_mode_replication(sections: list[AggregatedSection], family: str = "forest",
                            k: int = 200, seed: int = 0, train_fraction: float = 0.8,
                            widths=DEFAULT_WIDTHS, forest_config: GrowConfig | None = None,
                            stage_config: GrowConfig | None = None, learning_rate: float = 1.0,
                            params: RateParameters = RateParameters(), threads: int = 1):
    """Repeat the lane-width simulation with mean crash counts as the response.

    Section length, lane count and AADT join the predictors. The model is
    fitted on the training split and the simulation runs over all sections.
    Returns (report, model).
    """
    if not sections:
        raise ValueError("no sections")
    data = make_dataset(sections, "counts", params)
    train, _ = train_test_split(data, train_fraction, seed)
    model = train_family(family, train, k, seed, forest_config, stage_config, learning_rate,
                         threads)
    report = simulate_effect(model, expand_lane_widths(data, widths), "counts")
    return report, model
