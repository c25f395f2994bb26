"""Experiment configuration: one JSON document with every default explicit.

A config file may set any subset of the keys below; everything else takes
the default, and the fully resolved document is echoed into the manifest
written next to each command's outputs, so any artifact can be regenerated
from its manifest alone. Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from bikevolume.graph import load_edge_csv, normalize
from bikevolume.preprocess import build_target_vector, load_counts_csv, load_node_csv
from bikevolume.sparsity import Level, PreparedData, SparsityPlan, DEFAULT_BASELINE_PARAMS
from bikevolume.gcn.training import TrainConfig
from bikevolume.synth import SynthParams, generate_synthetic_city


class ConfigError(ValueError):
    """Malformed experiment configuration."""


DEFAULTS = {
    "seed": 0,
    "out_dir": "out",
    "data": {
        "node_csv": None,
        "edge_csv": None,
        "counts_csv": None,
        "continuous_columns": None,
        "categorical_columns": None,
        "synthetic": None,  # or {"n_nodes": ..., **SynthParams fields}
    },
    "transform": "box_cox",
    "model": {
        "kind": "gcn",  # gcn | lr | svm | rf
        "gcn_config": "G",
        "baseline_params": copy.deepcopy(DEFAULT_BASELINE_PARAMS),
    },
    "train": {
        "learning_rate": 1e-3,
        "weight_decay": 5e-4,
        "max_epochs": 2500,
        "dropout_p": 0.4,
        "patience": 100,
        "min_improvement": 1e-6,
        "eval_interval": 50,
        "split_ratios": [0.80, 0.05, 0.15],
        "early_stopping": True,
    },
    "sparsity": {
        "levels": [0.0, 0.20, 0.50, 0.60, 0.70, 0.80, 0.90, 0.989],
        "seeds": [0],
        "models": ["lr", "svm", "rf", "gcn"],
        "gcn_label": "G",
        "retune_baselines": False,
    },
    "grid_search": {
        "folds": 5,
        "families": ["lr", "svm", "rf"],
        "gcn_labels": ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J"],
        # per-family grids as explicit parameter dicts; null -> built-in grids
        "grids": None,
    },
}

SYNTH_DEFAULTS = {
    "n_nodes": 2000,
    "graph_family": "geometric",
    "avg_degree": 7.0,
    "n_days": 28,
    "diffusion_depth": 3,
    "signal_scale": 0.8,
    "noise_scale": 0.15,
    "base_intensity": 12.0,
    "latent_clip": 3.5,
    "missing_rate": 0.02,
}


def _merge(defaults, overrides, path: str):
    if isinstance(defaults, dict):
        if overrides is None:
            return copy.deepcopy(defaults)
        if not isinstance(overrides, dict):
            raise ConfigError(f"config key {path or '<root>'} must be an object")
        out = copy.deepcopy(defaults)
        for key, value in overrides.items():
            child = f"{path}.{key}" if path else key
            if key not in defaults:
                raise ConfigError(f"unknown config key {child}")
            if isinstance(defaults[key], dict):
                out[key] = _merge(defaults[key], value, child)
            else:
                out[key] = copy.deepcopy(value)
        return out
    # scalar or list default: the override (including an explicit null) wins
    return copy.deepcopy(overrides)


class ExperimentConfig:
    """Resolved configuration with typed accessors for each subsystem."""

    def __init__(self, doc: dict | None = None):
        self.doc = _merge(DEFAULTS, doc or {}, "")
        synth = self.doc["data"]["synthetic"]
        if synth is not None:
            self.doc["data"]["synthetic"] = _merge(SYNTH_DEFAULTS, synth, "data.synthetic")
        self._validate()

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")
        return cls(doc)

    def _validate(self):
        if self.doc["transform"] not in ("log", "sqrt", "quantile", "yeo_johnson", "box_cox"):
            raise ConfigError(f"unknown transform {self.doc['transform']!r}")
        kind = self.doc["model"]["kind"]
        if kind not in ("gcn", "lr", "svm", "rf"):
            raise ConfigError(f"unknown model kind {kind!r}")
        label = self.doc["model"]["gcn_config"]
        if label not in "ABCDEFGHIJ" or len(label) != 1:
            raise ConfigError(f"unknown GCN configuration label {label!r}")
        for lv in self.doc["sparsity"]["levels"]:
            Level.parse(lv)
        data = self.doc["data"]
        has_csv = data["node_csv"] is not None
        if has_csv and data["synthetic"] is not None:
            raise ConfigError("config sets both CSV inputs and a synthetic generator")

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def out_dir(self) -> Path:
        return Path(self.doc["out_dir"])

    def synth_params(self) -> tuple[int, SynthParams]:
        synth = self.doc["data"]["synthetic"]
        if synth is None:
            raise ConfigError("config does not define data.synthetic")
        doc = dict(synth)
        n_nodes = int(doc.pop("n_nodes"))
        return n_nodes, SynthParams(**doc)

    def train_config(self, seed: int | None = None) -> TrainConfig:
        t = self.doc["train"]
        return TrainConfig(
            learning_rate=float(t["learning_rate"]),
            weight_decay=float(t["weight_decay"]),
            max_epochs=int(t["max_epochs"]),
            dropout_p=float(t["dropout_p"]),
            patience=int(t["patience"]),
            min_improvement=float(t["min_improvement"]),
            eval_interval=int(t["eval_interval"]),
            seed=self.seed if seed is None else seed,
            split_ratios=tuple(float(r) for r in t["split_ratios"]),
            early_stopping=bool(t["early_stopping"]),
        )

    def sparsity_plan(self) -> SparsityPlan:
        s = self.doc["sparsity"]
        return SparsityPlan(
            levels=tuple(Level.parse(lv) for lv in s["levels"]),
            seeds=tuple(int(x) for x in s["seeds"]),
            models=tuple(s["models"]),
            gcn_label=s["gcn_label"],
            retune_baselines=bool(s["retune_baselines"]),
        )

    def load_dataset(self) -> PreparedData:
        """Materialize the graph, records, and targets this config describes."""
        data = self.doc["data"]
        if data["synthetic"] is not None:
            n_nodes, params = self.synth_params()
            city = generate_synthetic_city(n_nodes, params, seed=self.seed)
            graph, records = city.graph, city.records
        elif data["node_csv"] is not None:
            if data["edge_csv"] is None or data["counts_csv"] is None:
                raise ConfigError("CSV input needs data.node_csv, data.edge_csv and data.counts_csv")
            records = load_node_csv(
                data["node_csv"],
                continuous=data["continuous_columns"],
                categorical=data["categorical_columns"],
            )
            load_counts_csv(data["counts_csv"], records)
            graph = load_edge_csv(data["edge_csv"], [r.segment_id for r in records])
        else:
            raise ConfigError("config must define either data.synthetic or the three CSV paths")
        targets = build_target_vector(records, self.doc["transform"])
        return PreparedData(graph=graph, adj=normalize(graph), records=records, targets=targets)

    def manifest(self, command: str, extra: dict | None = None) -> dict:
        from bikevolume import __version__

        doc = {
            "command": command,
            "package_version": __version__,
            "config": copy.deepcopy(self.doc),
        }
        inputs = {}
        for key in ("node_csv", "edge_csv", "counts_csv"):
            path = self.doc["data"][key]
            if path is not None and Path(path).exists():
                inputs[key] = _sha256(path)
        if inputs:
            doc["input_hashes"] = inputs
        if extra:
            doc.update(extra)
        return doc

    def write_manifest(self, command: str, out_dir, extra: dict | None = None) -> Path:
        path = Path(out_dir) / "manifest.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.manifest(command, extra), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
