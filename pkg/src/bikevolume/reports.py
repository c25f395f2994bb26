"""Derived tables: skewness comparison, configuration sweep, sparsity sweep.

Everything here is a deterministic function of the CSV artifacts it reads,
so regeneration is idempotent. Reports are CSV plus a plain markdown
rendering; plotting is left to external tools.
"""

from __future__ import annotations

import csv
from pathlib import Path

from bikevolume.sparsity import MODEL_ORDER, read_results_csv

METRIC_NAMES = ("rmse", "mse", "mae", "mape")


def write_skewness_report(out_dir, skew_by_kind: dict[str, float]) -> tuple[Path, Path]:
    """One column per transform kind, mirroring the published comparison."""
    out = Path(out_dir)
    columns = ["no", "sqrt", "log", "quantile", "yeo_johnson", "box_cox"]
    present = [c for c in columns if c in skew_by_kind]
    csv_path = out / "skewness.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["transform"] + present)
        w.writerow(["skewness"] + [f"{skew_by_kind[c]:.4f}" for c in present])
    md_path = out / "skewness.md"
    with open(md_path, "w", encoding="utf-8") as fh:
        fh.write("| transform | " + " | ".join(present) + " |\n")
        fh.write("|---" * (len(present) + 1) + "|\n")
        fh.write("| skewness | " + " | ".join(f"{skew_by_kind[c]:.4f}" for c in present) + " |\n")
    return csv_path, md_path


def write_sparsity_table(out_dir, rows: list[dict]) -> Path:
    """Markdown table grouped by sparsity level, one block per model."""
    out = Path(out_dir) / "sparsity_table.md"
    by_key: dict[tuple, dict] = {}
    level_order: list[str] = []
    counts: dict[str, set] = {}
    for row in rows:
        if row["split"] not in ("test", "validation") or row["status"] != "ok":
            continue
        key = (row["level"], row["model"], row["seed"], row["split"])
        by_key[key] = row
        if row["level"] not in level_order:
            level_order.append(row["level"])
        counts.setdefault(row["level"], set()).add(row["labelled_count"])

    seeds = sorted({k[2] for k in by_key})
    models = [m for m in MODEL_ORDER if any(k[1] == m for k in by_key)]

    def cell(level, model, split, metric):
        vals = [by_key[(level, model, s, split)][metric] for s in seeds if (level, model, s, split) in by_key]
        vals = [v for v in vals if v is not None]
        if not vals:
            return ""
        return f"{sorted(vals)[len(vals) // 2]:.3f}" if len(vals) > 1 else f"{vals[0]:.3f}"

    with open(out, "w", encoding="utf-8") as fh:
        fh.write("| level | labelled | model | test RMSE | test MAE | test MAPE | val RMSE | val MAE | val MAPE |\n")
        fh.write("|---|---|---|---|---|---|---|---|---|\n")
        for level in level_order:
            labelled = "/".join(str(c) for c in sorted(counts[level]))
            for model in models:
                fh.write(
                    f"| {level} | {labelled} | {model} | "
                    f"{cell(level, model, 'test', 'rmse')} | {cell(level, model, 'test', 'mae')} | "
                    f"{cell(level, model, 'test', 'mape')} | {cell(level, model, 'validation', 'rmse')} | "
                    f"{cell(level, model, 'validation', 'mae')} | {cell(level, model, 'validation', 'mape')} |\n"
                )
    return out


def write_metric_series(out_dir, rows: list[dict]) -> list[Path]:
    """Per-metric CSV series (level ascending) for external plotting."""
    out = Path(out_dir)
    paths = []
    ok_rows = [r for r in rows if r["status"] == "ok" and r["split"] == "test"]
    level_order: list[str] = []
    for r in ok_rows:
        if r["level"] not in level_order:
            level_order.append(r["level"])
    for metric in METRIC_NAMES:
        path = out / f"series_{metric}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "labelled_count", "model", "seed", metric])
            for level in level_order:
                for model in MODEL_ORDER:
                    for r in ok_rows:
                        if r["level"] == level and r["model"] == model and r[metric] is not None:
                            w.writerow([r["level"], r["labelled_count"], r["model"], r["seed"], repr(r[metric])])
        paths.append(path)
    return paths


def write_config_comparison(out_dir, rows: list[dict]) -> Path:
    """Configuration sweep table: test RMSE with and without early stopping.

    `rows` carry label, early_stopping (bool), and rmse.
    """
    out = Path(out_dir) / "gcn_config_comparison.csv"
    labels = sorted({r["label"] for r in rows})
    by = {(r["label"], bool(r["early_stopping"])): r["rmse"] for r in rows}
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["gcn_configuration"] + labels)
        for arm, flag in (("rmse_without_early_stopping", False), ("rmse_with_early_stopping", True)):
            w.writerow([arm] + [_num(by.get((lab, flag))) for lab in labels])
    return out


def _num(x) -> str:
    return "" if x is None else f"{x:.4f}"


def regenerate_reports(results_path, out_dir) -> list[Path]:
    """Rebuild every table derivable from a results.csv; byte-stable."""
    rows = read_results_csv(results_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [write_sparsity_table(out, rows)]
    written.extend(write_metric_series(out, rows))
    return written
