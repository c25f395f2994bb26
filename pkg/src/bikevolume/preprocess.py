"""Raw segment records -> numeric feature matrix + transformed target vector.

Steps, in order: aggregate daily counts into AADB (ceiling of the mean),
impute missing values (mean for continuous columns, mode for categorical),
Min-Max scale continuous columns, one-hot encode categorical columns, and
power-transform the target. All column statistics are fitted on training
nodes only and applied everywhere; the target transform is fitted once on
the full labelled sample.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from bikevolume.transforms import TargetTransform, transform_target


class PreprocessError(ValueError):
    """Raised for unusable columns or malformed input files."""


@dataclass
class RawSegmentRecord:
    """One road segment as ingested, before any numeric encoding."""

    segment_id: str
    daily_counts: list[int] = field(default_factory=list)
    continuous: dict[str, float | None] = field(default_factory=dict)
    categorical: dict[str, str | None] = field(default_factory=dict)


@dataclass(frozen=True)
class TransformParams:
    """Everything fitted during preprocessing, serializable for reuse."""

    continuous_names: tuple[str, ...]
    categorical_names: tuple[str, ...]
    impute_means: dict[str, float]
    impute_modes: dict[str, str]
    col_min: dict[str, float]
    col_max: dict[str, float]
    vocabularies: dict[str, tuple[str, ...]]
    target: TargetTransform | None = None

    def to_json(self) -> str:
        doc = {
            "continuous": list(self.continuous_names),
            "categorical": list(self.categorical_names),
            "impute_means": self.impute_means,
            "impute_modes": self.impute_modes,
            "col_min": self.col_min,
            "col_max": self.col_max,
            "vocabularies": {k: list(v) for k, v in self.vocabularies.items()},
            "target": self.target.to_dict() if self.target is not None else None,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TransformParams":
        doc = json.loads(text)
        return cls(
            continuous_names=tuple(doc["continuous"]),
            categorical_names=tuple(doc["categorical"]),
            impute_means=doc["impute_means"],
            impute_modes=doc["impute_modes"],
            col_min=doc["col_min"],
            col_max=doc["col_max"],
            vocabularies={k: tuple(v) for k, v in doc["vocabularies"].items()},
            target=TargetTransform.from_dict(doc["target"]) if doc.get("target") else None,
        )


@dataclass(frozen=True)
class FeatureTable:
    """Dense node x feature matrix plus the params that produced it."""

    matrix: np.ndarray
    feature_names: tuple[str, ...]
    fitted: TransformParams

    @property
    def feature_dim(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class TargetVector:
    """Per-node AADB counts, their transformed values, and the label mask."""

    aadb: np.ndarray  # int64; meaningful only where labelled_mask
    transformed: np.ndarray  # float64; NaN where unlabelled
    labelled_mask: np.ndarray  # bool
    transform: TargetTransform | None = None

    @property
    def node_count(self) -> int:
        return len(self.aadb)

    def labelled_indices(self) -> np.ndarray:
        return np.nonzero(self.labelled_mask)[0]


def compute_aadb(daily_counts) -> int:
    """Annual average daily bicycle count: ceiling of the mean daily count."""
    counts = list(daily_counts)
    if not counts:
        raise ValueError("cannot aggregate an empty count series")
    if any(c < 0 for c in counts):
        raise ValueError("daily counts must be non-negative")
    return math.ceil(sum(counts) / len(counts))


def impute_continuous(column, fit_rows, name: str = "column") -> tuple[np.ndarray, float]:
    """Fill missing entries with the mean over fit_rows; returns (filled, mean)."""
    vals = [column[i] for i in fit_rows if column[i] is not None]
    if not vals:
        raise PreprocessError(f"continuous column {name!r} has no observed value on the fitting rows")
    mean = float(np.mean(vals))
    filled = np.asarray([v if v is not None else mean for v in column], dtype=np.float64)
    return filled, mean


def impute_categorical(column, fit_rows, name: str = "column") -> tuple[list[str], str]:
    """Fill missing entries with the mode over fit_rows, ties to the lexicographically smallest."""
    observed = [column[i] for i in fit_rows if column[i] is not None]
    if not observed:
        raise PreprocessError(f"categorical column {name!r} has no observed value on the fitting rows")
    counts: dict[str, int] = {}
    for v in observed:
        counts[v] = counts.get(v, 0) + 1
    top = max(counts.values())
    mode = min(v for v, c in counts.items() if c == top)
    filled = [v if v is not None else mode for v in column]
    return filled, mode


def minmax_scale(column, fitted_min: float, fitted_max: float) -> np.ndarray:
    """(x - min)/(max - min) with clamping; a constant column maps to zeros."""
    x = np.asarray(column, dtype=np.float64)
    if fitted_min > fitted_max:
        raise ValueError("fitted_min must not exceed fitted_max")
    if fitted_min == fitted_max:
        return np.zeros_like(x)
    return np.clip((x - fitted_min) / (fitted_max - fitted_min), 0.0, 1.0)


def one_hot(column, vocab) -> np.ndarray:
    """One {0,1} column per vocab entry; unseen categories encode as all zeros."""
    index = {v: k for k, v in enumerate(vocab)}
    block = np.zeros((len(column), len(vocab)))
    for r, v in enumerate(column):
        k = index.get(v)
        if k is not None:
            block[r, k] = 1.0
    return block


def fit_vocabulary(column, fit_rows) -> tuple[str, ...]:
    """Categories ordered by first appearance over the fitting rows."""
    seen = []
    for i in fit_rows:
        v = column[i]
        if v is not None and v not in seen:
            seen.append(v)
    return tuple(seen)


def build_feature_table(records: list[RawSegmentRecord], fit_rows) -> FeatureTable:
    """Impute, scale, and encode the records into a dense feature matrix.

    fit_rows: node indices whose values supply every fitted statistic
    (imputation values, min/max, vocabularies). Must be non-empty.
    """
    fit_rows = sorted(fit_rows)
    if not fit_rows:
        raise PreprocessError("fitting row set is empty")
    cont_names = tuple(records[0].continuous.keys())
    cat_names = tuple(records[0].categorical.keys())

    blocks = []
    names: list[str] = []
    impute_means: dict[str, float] = {}
    impute_modes: dict[str, str] = {}
    col_min: dict[str, float] = {}
    col_max: dict[str, float] = {}
    vocabularies: dict[str, tuple[str, ...]] = {}

    for name in cont_names:
        column = [r.continuous.get(name) for r in records]
        filled, mean = impute_continuous(column, fit_rows, name)
        impute_means[name] = mean
        lo = float(np.min(filled[fit_rows]))
        hi = float(np.max(filled[fit_rows]))
        col_min[name] = lo
        col_max[name] = hi
        blocks.append(minmax_scale(filled, lo, hi)[:, None])
        names.append(name)

    for name in cat_names:
        column = [r.categorical.get(name) for r in records]
        filled, mode = impute_categorical(column, fit_rows, name)
        impute_modes[name] = mode
        vocab = fit_vocabulary(filled, fit_rows)
        vocabularies[name] = vocab
        blocks.append(one_hot(filled, vocab))
        names.extend(f"{name}={v}" for v in vocab)

    if not blocks:
        raise PreprocessError("records carry no feature columns")
    matrix = np.hstack(blocks)
    fitted = TransformParams(
        continuous_names=cont_names,
        categorical_names=cat_names,
        impute_means=impute_means,
        impute_modes=impute_modes,
        col_min=col_min,
        col_max=col_max,
        vocabularies=vocabularies,
    )
    return FeatureTable(matrix=matrix, feature_names=tuple(names), fitted=fitted)


def build_target_vector(records: list[RawSegmentRecord], transform_kind: str) -> TargetVector:
    """Aggregate counts into AADB and fit the chosen target transform.

    Nodes without any count observation stay unlabelled. The transform is
    fitted on the full labelled AADB sample, matching how the distribution
    comparison is reported.
    """
    n = len(records)
    aadb = np.zeros(n, dtype=np.int64)
    labelled = np.zeros(n, dtype=bool)
    for i, rec in enumerate(records):
        if rec.daily_counts:
            aadb[i] = compute_aadb(rec.daily_counts)
            labelled[i] = True
    transformed = np.full(n, np.nan)
    tt = None
    if labelled.any():
        values = aadb[labelled].astype(np.float64)
        transformed_labelled, tt = transform_target(values, transform_kind)
        transformed[labelled] = transformed_labelled
    return TargetVector(aadb=aadb, transformed=transformed, labelled_mask=labelled, transform=tt)


def _looks_numeric(values: list[str]) -> bool:
    seen_any = False
    for v in values:
        if v == "":
            continue
        seen_any = True
        try:
            float(v)
        except ValueError:
            return False
    return seen_any


def load_node_csv(path, continuous=None, categorical=None) -> list[RawSegmentRecord]:
    """Read `segment_id,<feature cols...>`; empty fields are missing values.

    Column roles may be given explicitly; otherwise a column is continuous
    when every non-missing entry parses as a number.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "segment_id":
            raise PreprocessError(f"node CSV {path} must start with header column 'segment_id'")
        feature_cols = header[1:]
        rows = [row for row in reader if row]

    missing = [c for c in (list(continuous or []) + list(categorical or [])) if c not in feature_cols]
    if missing:
        raise PreprocessError(f"node CSV {path} lacks declared columns: {', '.join(missing)}")

    if continuous is None and categorical is None:
        continuous = [
            c for k, c in enumerate(feature_cols) if _looks_numeric([row[k + 1] for row in rows])
        ]
        categorical = [c for c in feature_cols if c not in continuous]
    else:
        continuous = list(continuous or [])
        categorical = list(categorical or [c for c in feature_cols if c not in continuous])

    records = []
    seen_ids = set()
    for row in rows:
        sid = row[0]
        if sid in seen_ids:
            raise PreprocessError(f"duplicate segment_id {sid!r} in {path}")
        seen_ids.add(sid)
        rec = RawSegmentRecord(segment_id=sid)
        for k, col in enumerate(feature_cols):
            raw = row[k + 1] if k + 1 < len(row) else ""
            if col in continuous:
                rec.continuous[col] = float(raw) if raw != "" else None
            else:
                rec.categorical[col] = raw if raw != "" else None
        records.append(rec)
    return records


def load_counts_csv(path, records: list[RawSegmentRecord]) -> None:
    """Attach `segment_id,date,count` rows to the records in place.

    Dates are opaque; only the per-segment grouping matters. Counts for
    unknown segment ids are an error.
    """
    by_id = {r.segment_id: r for r in records}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["segment_id", "date", "count"]:
            raise PreprocessError(f"counts CSV {path} must have header 'segment_id,date,count'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            sid, _date, raw = row[0], row[1], row[2]
            rec = by_id.get(sid)
            if rec is None:
                raise PreprocessError(f"counts CSV {path} line {lineno}: unknown segment_id {sid!r}")
            count = int(raw)
            if count < 0:
                raise PreprocessError(f"counts CSV {path} line {lineno}: negative count")
            rec.daily_counts.append(count)
