"""Section-level crash records: ingestion, aggregation, crash rates and datasets.

Records follow the roadway inventory layout used throughout the package
(crash count, section length, section id, year, shoulder, speed limit,
on-street parking, one-way, lane count, road class, median, lane width,
CBD, AADT per lane). Raw yearly records are aggregated per section before
modelling so that observations are independent.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

RAW_FIELDS = (
    "section_number", "year", "crash_count", "section_length", "shoulder",
    "speed_limit", "on_street_parking", "one_way", "num_lanes", "road_class",
    "median", "lane_width", "cbd", "aadt_per_lane",
)
BINARY_FIELDS = ("shoulder", "on_street_parking", "one_way", "median", "cbd")
STATIC_FIELDS = (
    "section_length", "shoulder", "speed_limit", "on_street_parking", "one_way",
    "num_lanes", "road_class", "median", "lane_width", "cbd",
)

RATE_FEATURES = (
    "shoulder", "speed_limit", "on_street_parking", "one_way", "road_class",
    "median", "lane_width", "cbd",
)
COUNTS_FEATURES = (
    "section_length", "shoulder", "speed_limit", "on_street_parking", "one_way",
    "num_lanes", "road_class", "median", "lane_width", "cbd", "aadt_per_lane",
)
CATEGORICAL_FIELDS = ("road_class",)

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none"})


class SchemaError(ValueError):
    """CSV header lacks a required column."""


def _check_record(rec) -> None:
    if rec.crash_count < 0:
        raise ValueError(f"crash_count must be >= 0, got {rec.crash_count}")
    if not rec.section_length > 0:
        raise ValueError(f"section_length must be > 0, got {rec.section_length}")
    if not rec.aadt_per_lane > 0:
        raise ValueError(f"aadt_per_lane must be > 0, got {rec.aadt_per_lane}")
    if rec.num_lanes < 1:
        raise ValueError(f"num_lanes must be >= 1, got {rec.num_lanes}")
    for name in BINARY_FIELDS:
        if getattr(rec, name) not in (0, 1):
            raise ValueError(f"{name} must be 0 or 1, got {getattr(rec, name)}")
    for name in ("speed_limit", "lane_width", "crash_count", "aadt_per_lane"):
        if not math.isfinite(getattr(rec, name)):
            raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class RawObservation:
    """One section in one year."""

    section_number: str
    year: int
    crash_count: int
    section_length: float
    shoulder: int
    speed_limit: float
    on_street_parking: int
    one_way: int
    num_lanes: int
    road_class: str
    median: int
    lane_width: float
    cbd: int
    aadt_per_lane: float

    def __post_init__(self):
        _check_record(self)


@dataclass(frozen=True)
class AggregatedSection:
    """A section with crash counts and AADT averaged over its observed years.

    Static attributes come from the latest observed year; ``conflict`` is set
    when any of them changed between years.
    """

    section_number: str
    crash_count: float
    section_length: float
    shoulder: int
    speed_limit: float
    on_street_parking: int
    one_way: int
    num_lanes: int
    road_class: str
    median: int
    lane_width: float
    cbd: int
    aadt_per_lane: float
    years_observed: int = 1
    conflict: bool = False

    def __post_init__(self):
        _check_record(self)
        if self.years_observed < 1:
            raise ValueError("years_observed must be >= 1")


@dataclass(frozen=True)
class RateParameters:
    """Constants of the exposure-normalised crash rate.

    ``exposure_p`` of 0 is accepted so the exponent-free form can be checked.
    """

    exposure_p: float = 0.8
    scale: float = 1e6
    days: float = 365.0

    def __post_init__(self):
        if not 0.0 <= self.exposure_p <= 1.0:
            raise ValueError(f"exposure_p must lie in [0, 1], got {self.exposure_p}")
        if not self.scale > 0:
            raise ValueError("scale must be > 0")
        if not self.days > 0:
            raise ValueError("days must be > 0")


@dataclass(frozen=True)
class FeatureMeta:
    name: str
    kind: str = "numeric"  # "numeric" | "categorical"
    levels: tuple = ()

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus response.

    Categorical features are stored as float codes indexing ``levels`` of the
    matching :class:`FeatureMeta`.
    """

    X: np.ndarray
    y: np.ndarray
    features: tuple
    mode: str = "rate"
    ids: tuple = ()

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        y = np.array(self.y, dtype=np.float64, copy=True)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        if X.shape[1] != len(self.features):
            raise ValueError(
                f"rows have {X.shape[1]} columns but {len(self.features)} features are declared")
        if y.shape != (X.shape[0],):
            raise ValueError("response length must equal the row count")
        if not np.all(np.isfinite(y)) or np.any(y < 0):
            raise ValueError("responses must be finite and non-negative")
        if self.mode not in ("rate", "counts"):
            raise ValueError(f"unknown mode {self.mode!r}")
        ids = tuple(self.ids) if self.ids else tuple(str(i) for i in range(X.shape[0]))
        if len(ids) != X.shape[0]:
            raise ValueError("ids length must equal the row count")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def feature_names(self) -> tuple:
        return tuple(f.name for f in self.features)

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array([f.is_categorical for f in self.features], dtype=bool)

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"feature {name!r} not in dataset") from None

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.X[index], self.y[index], self.features, self.mode,
                       tuple(self.ids[i] for i in index))

    def with_response(self, y) -> "Dataset":
        return Dataset(self.X, y, self.features, self.mode, self.ids)


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

_PARSERS = {
    "section_number": str,
    "year": "int",
    "crash_count": "int",
    "section_length": float,
    "shoulder": "int",
    "speed_limit": float,
    "on_street_parking": "int",
    "one_way": "int",
    "num_lanes": "int",
    "road_class": str,
    "median": "int",
    "lane_width": float,
    "cbd": "int",
    "aadt_per_lane": float,
}


def _parse_int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


@dataclass
class IngestionReport:
    rows_read: int = 0
    rows_kept: int = 0
    dropped_missing: int = 0
    dropped_duplicate: int = 0
    dropped_invalid: int = 0
    errors: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "rows_read": self.rows_read,
            "rows_kept": self.rows_kept,
            "dropped": {
                "missing": self.dropped_missing,
                "duplicate": self.dropped_duplicate,
                "invalid": self.dropped_invalid,
            },
            "errors": list(self.errors),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def ingest_csv(source: IO, schema: Mapping[str, str] | None = None):
    """Parse crash records from a UTF-8 CSV stream.

    Parameters
    ----------
    source : binary or text stream
        CSV with a header row.
    schema : mapping, optional
        Record field name -> CSV column name. Unmapped fields use their own
        name as the column name.

    Returns
    -------
    records : list of RawObservation
    report : IngestionReport
        Drop counts by reason and per-row error messages.
    """
    columns = {name: name for name in RAW_FIELDS}
    if schema:
        unknown = set(schema) - set(RAW_FIELDS)
        if unknown:
            raise SchemaError(f"schema maps unknown fields: {sorted(unknown)}")
        columns.update(schema)

    raw = source.read()
    text = raw.decode("utf-8-sig") if isinstance(raw, (bytes, bytearray)) else raw
    reader = csv.DictReader(io.StringIO(text, newline=""))
    header = reader.fieldnames or []
    missing_cols = [columns[f] for f in RAW_FIELDS if columns[f] not in header]
    if missing_cols:
        raise SchemaError(f"CSV header is missing required columns: {missing_cols}")

    report = IngestionReport()
    records = []
    seen = set()
    for line_no, row in enumerate(reader, start=2):
        report.rows_read += 1
        cells = {f: (row.get(columns[f]) or "").strip() for f in RAW_FIELDS}
        absent = [f for f, v in cells.items() if v.lower() in MISSING_TOKENS]
        if absent:
            report.dropped_missing += 1
            continue
        try:
            values = {}
            for name, text_value in cells.items():
                parser = _PARSERS[name]
                values[name] = _parse_int(text_value) if parser == "int" else parser(text_value)
            rec = RawObservation(**values)
        except ValueError as exc:
            report.dropped_invalid += 1
            report.errors.append({"line": line_no, "reason": str(exc)})
            continue
        key = (rec.section_number, rec.year)
        if key in seen:
            report.dropped_duplicate += 1
            continue
        seen.add(key)
        records.append(rec)
    report.rows_kept = len(records)
    return records, report


def write_csv(records: Iterable[RawObservation], stream: IO[str],
              schema: Mapping[str, str] | None = None) -> None:
    columns = {name: name for name in RAW_FIELDS}
    if schema:
        columns.update(schema)
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow([columns[f] for f in RAW_FIELDS])
    for rec in records:
        writer.writerow([_fmt(getattr(rec, f)) for f in RAW_FIELDS])


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# Aggregation and crash rates
# ---------------------------------------------------------------------------

def _section_key(section: str):
    return (0, int(section), "") if section.isdigit() else (1, 0, section)


def aggregate_sections(records: Sequence[RawObservation]) -> list[AggregatedSection]:
    """Collapse yearly records into one observation per section."""
    if not records:
        raise ValueError("cannot aggregate an empty record list")
    groups = defaultdict(list)
    for rec in records:
        groups[rec.section_number].append(rec)

    out = []
    for section in sorted(groups, key=_section_key):
        recs = sorted(groups[section], key=lambda r: r.year)
        latest = recs[-1]
        conflict = any(
            getattr(r, name) != getattr(latest, name) for r in recs for name in STATIC_FIELDS)
        out.append(AggregatedSection(
            section_number=section,
            crash_count=math.fsum(r.crash_count for r in recs) / len(recs),
            aadt_per_lane=math.fsum(r.aadt_per_lane for r in recs) / len(recs),
            years_observed=len(recs),
            conflict=conflict,
            **{name: getattr(latest, name) for name in STATIC_FIELDS},
        ))
    return out


def crash_rate(crash_count, section_length, num_lanes, aadt_per_lane,
               params: RateParameters = RateParameters()) -> float:
    """Crashes per million vehicle-miles per day, with exposure exponent p.

    rate = count / (length * (lanes * aadt)^p) * scale / days^p
    """
    if not section_length > 0:
        raise ValueError(f"section_length must be > 0, got {section_length}")
    if not aadt_per_lane > 0:
        raise ValueError(f"aadt_per_lane must be > 0, got {aadt_per_lane}")
    if num_lanes < 1:
        raise ValueError(f"num_lanes must be >= 1, got {num_lanes}")
    if crash_count < 0:
        raise ValueError(f"crash_count must be >= 0, got {crash_count}")
    p = params.exposure_p
    exposure = section_length * (num_lanes * aadt_per_lane) ** p
    return crash_count / exposure * params.scale / params.days ** p


def feature_meta_for(names: Sequence[str], sections: Sequence[AggregatedSection]) -> tuple:
    metas = []
    for name in names:
        if name not in COUNTS_FEATURES:
            raise KeyError(f"{name!r} is not a predictor field")
        if name in CATEGORICAL_FIELDS:
            levels = tuple(sorted({getattr(s, name) for s in sections}))
            metas.append(FeatureMeta(name, "categorical", levels))
        else:
            metas.append(FeatureMeta(name))
    return tuple(metas)


def make_dataset(sections: Sequence[AggregatedSection], mode: str = "rate",
                 params: RateParameters = RateParameters(),
                 features: Sequence[str] | None = None,
                 levels: Mapping[str, Sequence[str]] | None = None) -> Dataset:
    """Build a model-ready dataset.

    Rate mode predicts the crash rate from the road attributes; the exposure
    terms (length, lanes, AADT) sit in the rate's denominator and are left
    out. Counts mode predicts the mean yearly crash count and adds them back
    as predictors. ``features`` overrides either default set; ``levels``
    pins categorical level orderings (e.g. to match a trained model).
    """
    if not sections:
        raise ValueError("no sections to build a dataset from")
    if mode not in ("rate", "counts"):
        raise ValueError(f"unknown mode {mode!r}")
    names = tuple(features) if features else (RATE_FEATURES if mode == "rate" else COUNTS_FEATURES)
    metas = list(feature_meta_for(names, sections))
    for i, meta in enumerate(metas):
        if meta.is_categorical and levels and meta.name in levels:
            metas[i] = replace(meta, levels=tuple(levels[meta.name]))

    X = np.empty((len(sections), len(names)), dtype=np.float64)
    for j, meta in enumerate(metas):
        if meta.is_categorical:
            lookup = {lvl: k for k, lvl in enumerate(meta.levels)}
            col = []
            for s in sections:
                v = getattr(s, meta.name)
                if v not in lookup:
                    raise ValueError(f"level {v!r} of {meta.name} not in {meta.levels}")
                col.append(lookup[v])
            X[:, j] = col
        else:
            X[:, j] = [getattr(s, meta.name) for s in sections]

    if mode == "rate":
        y = [crash_rate(s.crash_count, s.section_length, s.num_lanes, s.aadt_per_lane, params)
             for s in sections]
    else:
        y = [s.crash_count for s in sections]
    return Dataset(X, np.asarray(y, dtype=np.float64), tuple(metas), mode,
                   tuple(s.section_number for s in sections))


def train_test_split(dataset: Dataset, train_fraction: float = 0.8, seed: int = 0):
    """Random partition into (train, test); train size is round(fraction * n)."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset)
    if n < 2:
        raise ValueError("need at least two rows to split")
    n_train = min(max(int(math.floor(train_fraction * n + 0.5)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return dataset.subset(train_idx), dataset.subset(test_idx)

