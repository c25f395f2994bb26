"""Label-sparsity protocol: seeded splits, progressive masking, model sweeps.

Sparsity removes *labels*, never nodes: the graph keeps its full topology
and the unlabeled segments stay visible to the (transductive) network.
Masks are nested per seed (the labelled set at a higher sparsity level is
a subset of the labelled set at any lower level), so measured degradation
is attributable to label removal rather than resampling. Validation and
test sets are fixed across all levels within a seed.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from bikevolume.baselines import fit_baseline, grid_search_cv, GridSearchSpec
from bikevolume.gcn.training import TrainConfig, evaluate, train
from bikevolume.graph import NormalizedAdjacency, RoadGraph
from bikevolume.metrics import Metrics, compute_metrics
from bikevolume.preprocess import (
    FeatureTable,
    RawSegmentRecord,
    TargetVector,
    build_feature_table,
)

MODEL_ORDER = ("lr", "svm", "rf", "gcn")

# Reported tuning optima, reused at every sparsity level unless retuning
# is requested.
DEFAULT_BASELINE_PARAMS = {
    "lr": {"alpha": 0.1},
    "svm": {"C": 10.0, "gamma": 0.01, "epsilon": 0.1},
    "rf": {"n_estimators": 400, "max_depth": 20, "min_samples_split": 2, "min_samples_leaf": 1},
}

RESULT_COLUMNS = (
    "level",
    "labelled_count",
    "model",
    "seed",
    "split",
    "rmse",
    "mse",
    "mae",
    "mape",
    "excluded_zero_targets",
    "status",
)


@dataclass(frozen=True)
class SplitAssignment:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class Level:
    """One sparsity level: a masked fraction, or an absolute labelled count."""

    kind: str  # "fraction" | "count"
    value: float | int

    @classmethod
    def parse(cls, raw) -> "Level":
        if isinstance(raw, Level):
            return raw
        if isinstance(raw, bool):
            raise ValueError("sparsity level cannot be a boolean")
        if isinstance(raw, int) and raw >= 1:
            return cls(kind="count", value=raw)
        value = float(raw)
        if not 0.0 <= value < 1.0:
            raise ValueError(f"fractional sparsity level must lie in [0, 1): got {raw!r}")
        return cls(kind="fraction", value=value)

    def key(self) -> str:
        if self.kind == "count":
            return f"n{self.value}"
        return f"{self.value:g}"

    def to_json(self):
        return self.value if self.kind == "fraction" else int(self.value)


@dataclass(frozen=True)
class SparsityPlan:
    levels: tuple[Level, ...] = tuple(
        Level("fraction", v) for v in (0.0, 0.20, 0.50, 0.60, 0.70, 0.80, 0.90, 0.989)
    )
    seeds: tuple[int, ...] = (0,)
    models: tuple[str, ...] = MODEL_ORDER
    gcn_label: str = "G"
    retune_baselines: bool = False

    def __post_init__(self):
        fracs = [lv.value for lv in self.levels if lv.kind == "fraction"]
        if any(b <= a for a, b in zip(fracs, fracs[1:])):
            raise ValueError("fractional sparsity levels must be strictly ascending")
        unknown = [m for m in self.models if m not in MODEL_ORDER]
        if unknown:
            raise ValueError(f"unknown model(s) in plan: {unknown}")
        if not self.seeds:
            raise ValueError("plan needs at least one seed")

    def ordered_models(self) -> tuple[str, ...]:
        return tuple(m for m in MODEL_ORDER if m in self.models)

    def to_dict(self) -> dict:
        return {
            "levels": [lv.to_json() for lv in self.levels],
            "seeds": list(self.seeds),
            "models": list(self.models),
            "gcn_label": self.gcn_label,
            "retune_baselines": self.retune_baselines,
        }


@dataclass(frozen=True)
class ExperimentResult:
    level: Level
    labelled_count: int
    model: str
    seed: int
    test: Metrics | None
    validation: Metrics | None
    wall_ms: float
    status: str = "ok"

    def rows(self):
        for split_name, m in (("test", self.test), ("validation", self.validation)):
            if m is None:
                yield {
                    "level": self.level.key(),
                    "labelled_count": self.labelled_count,
                    "model": self.model,
                    "seed": self.seed,
                    "split": split_name,
                    "rmse": "",
                    "mse": "",
                    "mae": "",
                    "mape": "",
                    "excluded_zero_targets": "",
                    "status": self.status,
                }
            else:
                yield {
                    "level": self.level.key(),
                    "labelled_count": self.labelled_count,
                    "model": self.model,
                    "seed": self.seed,
                    "split": split_name,
                    "rmse": repr(m.rmse),
                    "mse": repr(m.mse),
                    "mae": repr(m.mae),
                    "mape": "" if m.mape is None else repr(m.mape),
                    "excluded_zero_targets": m.excluded_zero_targets,
                    "status": self.status,
                }


@dataclass
class PreparedData:
    """Everything a sweep consumes: topology, raw records, and targets.

    Feature statistics are fitted inside the sweep, per seed, on that
    seed's training split, so no validation or test value leaks into the
    imputation/scaling/encoding parameters.
    """

    graph: RoadGraph
    adj: NormalizedAdjacency
    records: list[RawSegmentRecord]
    targets: TargetVector


def split_nodes(labelled, ratios, seed: int) -> SplitAssignment:
    """Randomly partition the labelled nodes into train/validation/test.

    Sizes follow the configured ratios with train and validation floored
    and the remainder assigned to test (so an n of 15,933 under 80:5:15
    gives 12,746 / 796 / 2,391).
    """
    if isinstance(labelled, (int, np.integer)):
        labelled = np.arange(int(labelled), dtype=np.int64)
    else:
        labelled = np.asarray(sorted(labelled), dtype=np.int64)
    n = len(labelled)
    if n < 3:
        raise ValueError("need at least 3 labelled nodes to split")
    r_train, r_val, _r_test = ratios
    n_train = int(np.floor(r_train * n))
    n_val = int(np.floor(r_val * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) <= 0:
        raise ValueError(f"split of {n} labelled nodes leaves an empty set ({n_train}/{n_val}/{n_test})")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    perm = labelled[rng.permutation(n)]
    return SplitAssignment(
        train=np.sort(perm[:n_train]),
        validation=np.sort(perm[n_train : n_train + n_val]),
        test=np.sort(perm[n_train + n_val :]),
    )


def apply_sparsity(train_set, level, seed: int) -> np.ndarray:
    """Labelled subset of the training nodes retained at the given level.

    A fractional level s keeps floor((1 - s) * |train|) nodes; an absolute
    count keeps exactly that many. Retention is a seeded uniform draw
    without replacement, and levels nest for a fixed seed: higher sparsity
    keeps a prefix of the same permutation.
    """
    level = Level.parse(level)
    train_set = np.asarray(sorted(train_set), dtype=np.int64)
    n = len(train_set)
    if level.kind == "fraction":
        kept = int(np.floor((1.0 - level.value) * n))
    else:
        kept = int(level.value)
        if kept > n:
            raise ValueError(f"requested {kept} labelled nodes but the training set has {n}")
    if kept <= 0:
        raise ValueError(f"sparsity level {level.key()} leaves no labelled training node")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    perm = train_set[rng.permutation(n)]
    return np.sort(perm[:kept])


def mask_targets(targets: TargetVector, keep_labelled: np.ndarray) -> TargetVector:
    """Restrict labels to `keep_labelled`; node set and values are unchanged."""
    mask = np.zeros(targets.node_count, dtype=bool)
    mask[keep_labelled] = True
    transformed = np.where(mask, targets.transformed, np.nan)
    return TargetVector(
        aadb=targets.aadb,
        transformed=transformed,
        labelled_mask=mask,
        transform=targets.transform,
    )


def run_sweep(
    plan: SparsityPlan,
    data: PreparedData,
    train_cfg: TrainConfig = TrainConfig(),
    baseline_params: dict | None = None,
    curves_dir=None,
) -> list[ExperimentResult]:
    """Execute the full (level x seed x model) grid.

    A failed run is recorded with its error message and does not abort the
    sweep. Results come back in deterministic (level, model, seed) order.
    When `curves_dir` is given, each network run writes its per-epoch loss
    curve there as `<level>_gcn_<seed>.csv`.
    """
    baseline_params = dict(DEFAULT_BASELINE_PARAMS, **(baseline_params or {}))
    labelled = data.targets.labelled_indices()
    results: list[ExperimentResult] = []

    per_seed: dict[int, tuple[SplitAssignment, FeatureTable]] = {}
    for seed in plan.seeds:
        split = split_nodes(labelled, train_cfg.split_ratios, seed)
        features = build_feature_table(data.records, fit_rows=split.train.tolist())
        per_seed[seed] = (split, features)

    for level in plan.levels:
        for model_name in plan.ordered_models():
            for seed in sorted(plan.seeds):
                split, features = per_seed[seed]
                try:
                    kept = apply_sparsity(split.train, level, seed)
                    result = _run_single(
                        level, model_name, seed, kept, split, features, data,
                        train_cfg, baseline_params, plan, curves_dir,
                    )
                except Exception as exc:  # noqa: BLE001 - recorded, not fatal
                    result = ExperimentResult(
                        level=level,
                        labelled_count=-1,
                        model=model_name,
                        seed=seed,
                        test=None,
                        validation=None,
                        wall_ms=0.0,
                        status=f"error: {exc}",
                    )
                results.append(result)
    return results


def _run_single(
    level, model_name, seed, kept, split, features, data, train_cfg, baseline_params, plan, curves_dir
) -> ExperimentResult:
    t0 = time.perf_counter()
    masked = mask_targets(data.targets, np.concatenate([kept, split.validation, split.test]))

    if model_name == "gcn":
        cfg = replace(train_cfg, seed=seed)
        model = train(data.adj, features, masked, SplitAssignment(kept, split.validation, split.test), plan.gcn_label, cfg)
        test_m = evaluate(model, data.adj, features, data.targets, split.test)
        val_m = evaluate(model, data.adj, features, data.targets, split.validation)
        if curves_dir is not None:
            path = Path(curves_dir)
            path.mkdir(parents=True, exist_ok=True)
            write_loss_curve(path / f"{level.key()}_gcn_{seed}.csv", model)
    else:
        params = baseline_params[model_name]
        if plan.retune_baselines:
            from bikevolume.baselines import DEFAULT_GRIDS

            spec = GridSearchSpec(model_family=model_name, grid=DEFAULT_GRIDS[model_name], seed=seed)
            params, _rows = grid_search_cv(spec, features.matrix[kept], data.targets.transformed[kept])
        fitted = fit_baseline(model_name, features.matrix[kept], data.targets.transformed[kept], params, seed=seed)
        tt = data.targets.transform
        pred = fitted.predict(features.matrix)
        counts = tt.inverse(tt.inverse_domain_clip(pred)) if tt is not None else pred
        test_m = compute_metrics(data.targets.aadb[split.test], counts[split.test])
        val_m = compute_metrics(data.targets.aadb[split.validation], counts[split.validation])

    wall_ms = (time.perf_counter() - t0) * 1000.0
    return ExperimentResult(
        level=level,
        labelled_count=len(kept),
        model=model_name,
        seed=seed,
        test=test_m,
        validation=val_m,
        wall_ms=wall_ms,
    )


def write_loss_curve(path, model) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, tr, va in model.loss_curve_rows():
            w.writerow([epoch, repr(tr), repr(va)])


def write_results_csv(path, results: list[ExperimentResult]) -> None:
    """Deterministic artifact: metric values only, no timing."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        w.writeheader()
        for res in results:
            for row in res.rows():
                w.writerow(row)


def write_timings_csv(path, results: list[ExperimentResult]) -> None:
    """Wall-clock sidecar; intentionally separate so results.csv stays reproducible."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "labelled_count", "model", "seed", "wall_ms"])
        for res in results:
            w.writerow([res.level.key(), res.labelled_count, res.model, res.seed, f"{res.wall_ms:.3f}"])


def read_results_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != list(RESULT_COLUMNS):
            raise ValueError(f"results file {path} has unexpected header {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                row["labelled_count"] = int(row["labelled_count"])
                row["seed"] = int(row["seed"])
                for key in ("rmse", "mse", "mae", "mape"):
                    row[key] = float(row[key]) if row[key] != "" else None
            except (TypeError, ValueError) as exc:
                raise ValueError(f"results file {path} row {lineno}: {exc}") from None
            rows.append(row)
    return rows
