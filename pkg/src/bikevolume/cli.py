"""Command-line entry point.

Subcommands: synth, preprocess, train, grid-search, sweep, report.
Every command reads one JSON config (all defaults overridable), writes its
artifacts plus a manifest.json that suffices to re-run it, and is
deterministic for a fixed seed. Exit codes: 0 success, 1 usage error,
2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from bikevolume.baselines import DEFAULT_GRIDS, GridSearchSpec, fit_baseline, grid_search_cv
from bikevolume.experiment import SYNTH_DEFAULTS, ConfigError, ExperimentConfig
from bikevolume.gcn.training import evaluate, train
from bikevolume.graph import GraphIngestionError
from bikevolume.metrics import compute_metrics
from bikevolume.preprocess import PreprocessError, build_feature_table
from bikevolume.reports import (
    regenerate_reports,
    write_config_comparison,
    write_metric_series,
    write_skewness_report,
    write_sparsity_table,
)
from bikevolume.sparsity import (
    Level,
    SplitAssignment,
    apply_sparsity,
    run_sweep,
    split_nodes,
    write_loss_curve,
    write_results_csv,
    write_timings_csv,
)
from bikevolume.transforms import TRANSFORM_KINDS, skewness, transform_target

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

LOCK_NAME = ".bikevolume.lock"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK

    try:
        config = _resolve_config(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = Path(args.out) if args.out else config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    config.doc["out_dir"] = str(out_dir)

    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        os.close(fd)
    except FileExistsError:
        print(f"error: output directory {out_dir} is locked by another run ({lock})", file=sys.stderr)
        return EXIT_RUNTIME

    try:
        handler = COMMANDS[args.command]
        return handler(config, args, out_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PreprocessError, GraphIngestionError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        lock.unlink(missing_ok=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bikevolume",
        description="Link-level bicycling volume estimation: graph network, baselines, sparsity sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate a synthetic city as node/edge/count CSVs"),
        ("preprocess", "fit feature/target transforms and report skewness"),
        ("train", "train one model on a seeded split"),
        ("grid-search", "tune baselines and sweep network configurations"),
        ("sweep", "run the full sparsity sweep"),
        ("report", "regenerate tables from a results.csv"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, default=None, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", type=Path, default=None, help="output directory override")
        p.add_argument("--model", choices=("lr", "svm", "rf", "gcn"), default=None)
        p.add_argument("--gcn-config", dest="gcn_config", default=None, help="configuration label A..J")
        p.add_argument("--level", default=None, help="sparsity level: fraction in [0,1) or integer count")
        if name == "report":
            p.add_argument("results", type=Path, help="path to a results.csv")
    return parser


def _resolve_config(args) -> ExperimentConfig:
    if args.config is not None:
        config = ExperimentConfig.from_file(args.config)
    else:
        config = ExperimentConfig()
    if args.seed is not None:
        config.doc["seed"] = args.seed
    if args.model is not None:
        config.doc["model"]["kind"] = args.model
    if args.gcn_config is not None:
        if args.gcn_config not in "ABCDEFGHIJ" or len(args.gcn_config) != 1:
            raise ConfigError(f"unknown GCN configuration label {args.gcn_config!r}")
        config.doc["model"]["gcn_config"] = args.gcn_config
        config.doc["sparsity"]["gcn_label"] = args.gcn_config
    return config


def _parse_level(raw) -> Level:
    try:
        if isinstance(raw, str):
            raw = int(raw) if raw.isdigit() and int(raw) >= 1 else float(raw)
        return Level.parse(raw)
    except ValueError as exc:
        raise ConfigError(f"bad --level value: {exc}") from None


def cmd_synth(config: ExperimentConfig, args, out_dir: Path) -> int:
    if config.doc["data"]["synthetic"] is None:
        config.doc["data"]["synthetic"] = dict(SYNTH_DEFAULTS)
    n_nodes, params = config.synth_params()
    from bikevolume.synth import generate_synthetic_city

    city = generate_synthetic_city(n_nodes, params, seed=config.seed)
    paths = city.write_csvs(out_dir)
    config.write_manifest("synth", out_dir)
    for name, path in paths.items():
        print(f"wrote {name}: {path}")
    return EXIT_OK


def cmd_preprocess(config: ExperimentConfig, args, out_dir: Path) -> int:
    data = config.load_dataset()
    labelled = data.targets.labelled_indices()
    split = split_nodes(labelled, config.train_config().split_ratios, config.seed)
    features = build_feature_table(data.records, fit_rows=split.train.tolist())

    aadb = data.targets.aadb[labelled].astype(np.float64)
    skew_by_kind = {"no": skewness(aadb)}
    for kind in TRANSFORM_KINDS:
        transformed, _params = transform_target(aadb, kind)
        key = "sqrt" if kind == "sqrt" else kind
        skew_by_kind[key] = skewness(transformed)
    csv_path, md_path = write_skewness_report(out_dir, skew_by_kind)

    fitted = replace(features.fitted, target=data.targets.transform)
    params_path = out_dir / "transform_params.json"
    params_path.write_text(fitted.to_json() + "\n", encoding="utf-8")

    np.savez(
        out_dir / "features.npz",
        matrix=features.matrix,
        feature_names=np.array(features.feature_names),
        aadb=data.targets.aadb,
        transformed=data.targets.transformed,
        labelled_mask=data.targets.labelled_mask,
        split_train=split.train,
        split_validation=split.validation,
        split_test=split.test,
    )
    config.write_manifest("preprocess", out_dir)
    print(f"wrote {csv_path}, {md_path}, {params_path}, {out_dir / 'features.npz'}")
    print("skewness:", " ".join(f"{k}={v:.3f}" for k, v in skew_by_kind.items()))
    return EXIT_OK


def cmd_train(config: ExperimentConfig, args, out_dir: Path) -> int:
    data = config.load_dataset()
    labelled = data.targets.labelled_indices()
    train_cfg = config.train_config()
    split = split_nodes(labelled, train_cfg.split_ratios, config.seed)
    features = build_feature_table(data.records, fit_rows=split.train.tolist())

    kept = split.train
    if args.level is not None:
        kept = apply_sparsity(split.train, _parse_level(args.level), config.seed)

    kind = config.doc["model"]["kind"]
    if kind == "gcn":
        from bikevolume.sparsity import mask_targets

        masked = mask_targets(data.targets, np.concatenate([kept, split.validation, split.test]))
        model = train(
            data.adj,
            features,
            masked,
            SplitAssignment(kept, split.validation, split.test),
            config.doc["model"]["gcn_config"],
            train_cfg,
        )
        (out_dir / "model.json").write_text(model.to_json() + "\n", encoding="utf-8")
        write_loss_curve(out_dir / "loss_curve.csv", model)
        test_m = evaluate(model, data.adj, features, data.targets, split.test)
        val_m = evaluate(model, data.adj, features, data.targets, split.validation)
        print(f"trained configuration {config.doc['model']['gcn_config']}: "
              f"stopped at epoch {model.stopped_epoch}, best epoch {model.best_epoch}")
    else:
        params = config.doc["model"]["baseline_params"][kind]
        fitted = fit_baseline(kind, features.matrix[kept], data.targets.transformed[kept], params, seed=config.seed)
        tt = data.targets.transform
        pred = fitted.predict(features.matrix)
        counts = tt.inverse(tt.inverse_domain_clip(pred)) if tt is not None else pred
        test_m = compute_metrics(data.targets.aadb[split.test], counts[split.test])
        val_m = compute_metrics(data.targets.aadb[split.validation], counts[split.validation])
        print(f"trained {kind} with {json.dumps(params, sort_keys=True)}")

    for name, m in (("test", test_m), ("validation", val_m)):
        mape = "undefined" if m.mape is None else f"{m.mape:.3f}%"
        print(f"{name}: rmse={m.rmse:.3f} mse={m.mse:.3f} mae={m.mae:.3f} mape={mape}")
    config.write_manifest("train", out_dir)
    return EXIT_OK


def cmd_grid_search(config: ExperimentConfig, args, out_dir: Path) -> int:
    data = config.load_dataset()
    labelled = data.targets.labelled_indices()
    train_cfg = config.train_config()
    split = split_nodes(labelled, train_cfg.split_ratios, config.seed)
    features = build_feature_table(data.records, fit_rows=split.train.tolist())

    X_train = features.matrix[split.train]
    y_train = data.targets.transformed[split.train]

    custom_grids = config.doc["grid_search"]["grids"] or {}
    best: dict[str, dict] = {}
    score_rows: list[dict] = []
    for family in config.doc["grid_search"]["families"]:
        grid = tuple(custom_grids.get(family) or DEFAULT_GRIDS[family])
        spec = GridSearchSpec(
            model_family=family,
            grid=grid,
            folds=int(config.doc["grid_search"]["folds"]),
            seed=config.seed,
        )
        params, rows = grid_search_cv(spec, X_train, y_train)
        best[family] = params
        score_rows.extend(rows)
        print(f"{family}: best {json.dumps(params, sort_keys=True)}")

    with open(out_dir / "cv_scores.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["model", "params_json", "fold", "rmse"])
        w.writeheader()
        for row in score_rows:
            w.writerow(row)

    gcn_rows = []
    for label in config.doc["grid_search"]["gcn_labels"]:
        for early in (True, False):
            cfg = replace(train_cfg, early_stopping=early)
            masked_split = SplitAssignment(split.train, split.validation, split.test)
            model = train(data.adj, features, data.targets, masked_split, label, cfg)
            m = evaluate(model, data.adj, features, data.targets, split.test)
            gcn_rows.append({"label": label, "early_stopping": early, "rmse": m.rmse})
            print(f"gcn {label} early_stopping={early}: test rmse {m.rmse:.3f}")
    if gcn_rows:
        with open(out_dir / "gcn_config_scores.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["label", "early_stopping", "rmse"])
            w.writeheader()
            for row in gcn_rows:
                w.writerow({**row, "rmse": repr(row["rmse"])})
        write_config_comparison(out_dir, gcn_rows)

    (out_dir / "best_params.json").write_text(
        json.dumps(best, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    config.write_manifest("grid-search", out_dir)
    return EXIT_OK


def cmd_sweep(config: ExperimentConfig, args, out_dir: Path) -> int:
    data = config.load_dataset()
    plan = config.sparsity_plan()
    if args.model is not None:
        plan = replace(plan, models=(args.model,))
    if args.level is not None:
        plan = replace(plan, levels=(_parse_level(args.level),))
    results = run_sweep(
        plan,
        data,
        train_cfg=config.train_config(),
        baseline_params=config.doc["model"]["baseline_params"],
        curves_dir=out_dir / "curves",
    )
    write_results_csv(out_dir / "results.csv", results)
    write_timings_csv(out_dir / "timings.csv", results)
    rows = [row for res in results for row in res.rows()]
    for row in rows:
        for key in ("rmse", "mse", "mae", "mape"):
            row[key] = float(row[key]) if row[key] != "" else None
    write_sparsity_table(out_dir, rows)
    write_metric_series(out_dir, rows)
    config.write_manifest("sweep", out_dir, extra={"plan": plan.to_dict()})
    failures = [r for r in results if r.status != "ok"]
    print(f"sweep complete: {len(results)} runs, {len(failures)} failed; results in {out_dir / 'results.csv'}")
    return EXIT_OK


def cmd_report(config: ExperimentConfig, args, out_dir: Path) -> int:
    written = regenerate_reports(args.results, out_dir)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "grid-search": cmd_grid_search,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


if __name__ == "__main__":
    sys.exit(main())
