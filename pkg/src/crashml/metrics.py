"""Prediction error measures and the forest-vs-boosting adequacy table."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np


def _pair(truth, pred):
    truth = np.asarray(truth, dtype=np.float64).ravel()
    pred = np.asarray(pred, dtype=np.float64).ravel()
    if truth.shape != pred.shape:
        raise ValueError(f"length mismatch: {truth.size} truths vs {pred.size} predictions")
    if truth.size == 0:
        raise ValueError("need at least one value")
    return truth, pred


def mae(truth, pred) -> float:
    truth, pred = _pair(truth, pred)
    return float(np.mean(np.abs(truth - pred)))


def mse(truth, pred) -> float:
    truth, pred = _pair(truth, pred)
    return float(np.mean((truth - pred) ** 2))


@dataclass(frozen=True)
class HistogramSpec:
    """Shared binning for two samples; ``lo``/``hi`` default to the union's range."""

    bins: int = 20
    lo: float | None = None
    hi: float | None = None
    proportions: bool = False

    def __post_init__(self):
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        if self.lo is not None and self.hi is not None and not self.lo < self.hi:
            raise ValueError("histogram range needs lo < hi")


def histogram_counts(values, bins: int, lo: float, hi: float) -> np.ndarray:
    """Equal-width bin counts over [lo, hi]; out-of-range values clamp to the end bins."""
    values = np.asarray(values, dtype=np.float64)
    pos = np.floor((values - lo) / (hi - lo) * bins)
    pos = np.clip(pos, 0, bins - 1).astype(np.int64)
    return np.bincount(pos, minlength=bins)


def histogram_intersection(truth, pred, spec: HistogramSpec = HistogramSpec()) -> float:
    """(1/Q) * sum over bins of min(H_q(truth), H_q(pred)), with raw bin counts.

    With ``spec.proportions`` the counts are divided by the sample size first.
    """
    truth, pred = _pair(truth, pred)
    lo = min(truth.min(), pred.min()) if spec.lo is None else spec.lo
    hi = max(truth.max(), pred.max()) if spec.hi is None else spec.hi
    if not lo < hi:
        # degenerate range: every value lands in one bin
        lo, hi = lo - 0.5, hi + 0.5
    h_true = histogram_counts(truth, spec.bins, lo, hi).astype(np.float64)
    h_pred = histogram_counts(pred, spec.bins, lo, hi).astype(np.float64)
    if spec.proportions:
        h_true /= truth.size
        h_pred /= pred.size
    return float(np.minimum(h_true, h_pred).sum() / spec.bins)


@dataclass(frozen=True)
class AdequacyRow:
    model: str
    mae: float
    mse: float
    intersection: float


@dataclass(frozen=True)
class AdequacyTable:
    boost: AdequacyRow
    forest: AdequacyRow

    @property
    def winner(self) -> str:
        """Family with the lower MSE; MAE breaks exact ties, then the forest."""
        f, b = self.forest, self.boost
        if (b.mse, b.mae) < (f.mse, f.mae):
            return "boost"
        return "forest"

    def rows(self):
        return [self.boost, self.forest]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "rows": [{"model": r.model, "mae": r.mae, "mse": r.mse,
                      "histogram_intersection": r.intersection} for r in self.rows()],
            "winner": self.winner,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["model", "mean_absolute_error", "mean_squared_error", "histogram_intersection"])
        for r in self.rows():
            w.writerow([r.model, repr(r.mae), repr(r.mse), repr(r.intersection)])
        return out.getvalue()


def table_from_values(forest: tuple, boost: tuple) -> AdequacyTable:
    """Adequacy table from already computed (MAE, MSE, intersection) triples."""
    return AdequacyTable(AdequacyRow("LSBoost", *map(float, boost)),
                         AdequacyRow("RF", *map(float, forest)))


def adequacy_check(truth, forest_pred, boost_pred,
                   spec: HistogramSpec = HistogramSpec()) -> AdequacyTable:
    rows = {}
    for name, pred in (("forest", forest_pred), ("boost", boost_pred)):
        rows[name] = (mae(truth, pred), mse(truth, pred), histogram_intersection(truth, pred, spec))
    return table_from_values(rows["forest"], rows["boost"])
