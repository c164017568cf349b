"""Rank-based group comparisons and the distribution tails they need."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import rankdata

P_FLOOR = 2.2e-16


def format_p(p: float) -> str:
    """Render a p-value, collapsing anything below machine-epsilon scale to '< 2.2e-16'."""
    if p < P_FLOOR:
        return "< 2.2e-16"
    return f"{p:.4g}"


# ---------------------------------------------------------------------------
# Distribution tails
# ---------------------------------------------------------------------------

_EPS = 1e-16
_TINY = 1e-300


def _gamma_series_p(a, x):
    """Lower regularised incomplete gamma P(a, x) by its power series."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise ArithmeticError("incomplete gamma series did not converge")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf_q(a, x):
    """Upper regularised incomplete gamma Q(a, x) by continued fraction (modified Lentz)."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ArithmeticError("incomplete gamma continued fraction did not converge")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Upper regularised incomplete gamma function Q(a, x) = Gamma(a, x) / Gamma(a)."""
    if not a > 0 or x < 0 or math.isnan(x):
        raise ValueError(f"gamma_q needs a > 0 and x >= 0, got a={a}, x={x}")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return 1.0 - _gamma_series_p(a, x)
    return _gamma_cf_q(a, x)


def chi_square_sf(x: float, df: float) -> float:
    """Upper tail P(X > x) of a chi-square variable with ``df`` degrees of freedom."""
    if not df >= 1 or x < 0 or math.isnan(x):
        raise ValueError(f"chi_square_sf needs x >= 0 and df >= 1, got x={x}, df={df}")
    return gamma_q(0.5 * df, 0.5 * x)


def _norm_cdf(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _norm_pdf(z):
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def studentized_range_sf(q: float, k: int) -> float:
    """P(R > q) for the range R of k independent standard normals.

    Integrates k * phi(z) * [Phi(z)^(k-1) - (Phi(z) - Phi(z-q))^(k-1)] over z,
    with the bracket expanded as a sum of positive terms so small tail
    probabilities keep their relative accuracy.
    """
    if q < 0 or math.isnan(q) or k < 2 or int(k) != k:
        raise ValueError(f"studentized_range_sf needs q >= 0 and integer k >= 2, got q={q}, k={k}")
    k = int(k)
    if q == 0:
        return 1.0
    if math.isinf(q):
        return 0.0

    def integrand(z):
        a = _norm_cdf(z)
        b = _norm_cdf(z - q)
        inner = a - b
        s = 0.0
        for i in range(k - 1):
            s += a ** i * inner ** (k - 2 - i)
        return _norm_pdf(z) * b * s

    centre = 0.5 * q
    value, _ = integrate.quad(integrand, centre - 13.0, centre + 13.0, points=[centre],
                              epsabs=1e-13, epsrel=1e-11, limit=200)
    return min(1.0, max(0.0, k * value))


# ---------------------------------------------------------------------------
# Kruskal-Wallis and Nemenyi
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KruskalWallisResult:
    h_statistic: float
    df: int
    p_value: float

    def to_dict(self) -> dict:
        return {"chi_squared": self.h_statistic, "df": self.df, "p_value": self.p_value,
                "p_value_formatted": format_p(self.p_value)}

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["chi_squared", "degree_of_freedom", "p_value"])
        w.writerow([f"{self.h_statistic:.4f}", self.df, format_p(self.p_value)])
        return out.getvalue()


def _pooled_ranks(groups):
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    arrays = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if any(a.size == 0 for a in arrays):
        raise ValueError("every group needs at least one value")
    pooled = np.concatenate(arrays)
    if np.any(~np.isfinite(pooled)):
        raise ValueError("values must be finite")
    if pooled.min() == pooled.max():
        raise ValueError("all values are identical; rank tests are undefined")
    ranks = rankdata(pooled, method="average")
    sizes = np.array([a.size for a in arrays])
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    mean_ranks = np.array([ranks[bounds[i]:bounds[i + 1]].mean() for i in range(len(arrays))])
    return pooled, sizes, mean_ranks


def kruskal_wallis(groups) -> KruskalWallisResult:
    """Tie-corrected Kruskal-Wallis H with a chi-square(k - 1) p-value."""
    pooled, sizes, mean_ranks = _pooled_ranks(groups)
    n = pooled.size
    h = 12.0 / (n * (n + 1)) * float(np.sum(sizes * (mean_ranks - (n + 1) / 2.0) ** 2))
    _, ties = np.unique(pooled, return_counts=True)
    correction = 1.0 - float(np.sum(ties.astype(float) ** 3 - ties)) / (n ** 3 - n)
    h /= correction
    df = len(sizes) - 1
    return KruskalWallisResult(h, df, chi_square_sf(h, df))


@dataclass(frozen=True)
class PairwiseMatrix:
    """Lower-triangular p-values: ``matrix[i][j]`` compares group i+1 with group j (j <= i)."""

    labels: tuple
    matrix: tuple
    statistics: tuple

    def p(self, a: int, b: int) -> float:
        if a == b:
            raise ValueError("a group is not compared with itself")
        i, j = max(a, b), min(a, b)
        return self.matrix[i - 1][j]

    def cells(self):
        for i in range(1, len(self.labels)):
            for j in range(i):
                yield self.labels[i], self.labels[j], self.matrix[i - 1][j]

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "pairs": [{"a": a, "b": b, "p_value": p, "p_value_formatted": format_p(p)}
                      for a, b, p in self.cells()],
        }

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["group"] + [str(lbl) for lbl in self.labels[:-1]])
        for i in range(1, len(self.labels)):
            row = [str(self.labels[i])]
            for j in range(len(self.labels) - 1):
                row.append(format_p(self.matrix[i - 1][j]) if j < i else "-")
            w.writerow(row)
        return out.getvalue()


def nemenyi(groups, labels=None) -> PairwiseMatrix:
    """Pairwise rank-mean comparisons against the studentized range (infinite df)."""
    pooled, sizes, mean_ranks = _pooled_ranks(groups)
    n = pooled.size
    k = len(sizes)
    labels = tuple(labels) if labels is not None else tuple(range(1, k + 1))
    if len(labels) != k:
        raise ValueError("one label per group required")
    matrix, stats = [], []
    for i in range(1, k):
        prow, srow = [], []
        for j in range(k - 1):
            if j < i:
                se = math.sqrt(n * (n + 1) / 12.0 * (1.0 / sizes[i] + 1.0 / sizes[j]))
                stat = abs(mean_ranks[i] - mean_ranks[j]) / se
                prow.append(studentized_range_sf(stat * math.sqrt(2.0), k))
                srow.append(stat)
            else:
                prow.append(None)
                srow.append(None)
        matrix.append(tuple(prow))
        stats.append(tuple(srow))
    return PairwiseMatrix(labels, tuple(matrix), tuple(stats))


# ---------------------------------------------------------------------------
# Effect tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PercentChangeTable:
    """Rows (from, to, percent) with percent = 100 * (mean_to - mean_from) / grand_mean."""

    rows: tuple
    grand_mean: float
    means: tuple  # ((width, mean), ...)

    def pct(self, a, b) -> float:
        means = dict(self.means)
        return 100.0 * (means[b] - means[a]) / self.grand_mean

    def to_dict(self) -> dict:
        return {"grand_mean": self.grand_mean,
                "rows": [{"from": a, "to": b, "percent_change": v} for a, b, v in self.rows]}

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["lane_width_from_ft", "lane_width_to_ft", "percent_change"])
        for a, b, v in self.rows:
            w.writerow([_num(a), _num(b), f"{v:+.1f}"])
        return out.getvalue()


def _num(v):
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def percent_changes(group_means: dict, grand_mean: float) -> PercentChangeTable:
    """Percent change between every pair of groups, relative to the grand mean.

    Rows run over target groups in ascending order and, for each, over the
    larger source groups ascending: (10, 9), (11, 9), (12, 9), (11, 10), ...
    """
    if len(group_means) < 2:
        raise ValueError("need at least two groups")
    if not grand_mean > 0:
        raise ValueError(f"grand_mean must be > 0, got {grand_mean}")
    keys = sorted(group_means)
    rows = []
    for i, to in enumerate(keys):
        for src in keys[i + 1:]:
            rows.append((src, to, 100.0 * (group_means[to] - group_means[src]) / grand_mean))
    return PercentChangeTable(tuple(rows), float(grand_mean),
                              tuple((k, float(group_means[k])) for k in keys))


@dataclass(frozen=True)
class GroupSummary:
    n: int
    mean: float
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    whisker_low: float
    whisker_high: float
    outliers: tuple

    def to_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean, "min": self.minimum, "q1": self.q1,
                "median": self.median, "q3": self.q3, "max": self.maximum,
                "whisker_low": self.whisker_low, "whisker_high": self.whisker_high,
                "n_outliers": len(self.outliers)}


def boxplot_summary(values) -> GroupSummary:
    """Five-number summary with linear-interpolation quartiles and 1.5 IQR whiskers."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("need at least one value")
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    outliers = v[(v < lo_fence) | (v > hi_fence)]
    return GroupSummary(int(v.size), float(v.mean()), float(v[0]), float(q1), float(med),
                        float(q3), float(v[-1]), float(inside.min()), float(inside.max()),
                        tuple(float(x) for x in outliers))
