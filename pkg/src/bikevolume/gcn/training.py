"""Full-batch training with Adam, early stopping, and loss-curve capture.

Every epoch runs one gradient step over the whole graph, then computes the
validation loss with a deterministic eval-mode forward. Training halts when
the validation loss has not improved by more than `min_improvement` for
`patience` consecutive epochs, and the parameters are restored to the best
validation epoch. Losses are recorded every epoch; full metric snapshots
(in original count units) are taken every `eval_interval` epochs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from bikevolume.gcn.config import (
    BatchNormSpec,
    DropoutSpec,
    FullyConnectedSpec,
    GCNConvSpec,
    ModelConfig,
    ReluSpec,
    config_catalog,
)
from bikevolume.gcn.network import (
    Parameters,
    backward,
    forward,
    init_parameters,
    masked_mse,
    masked_mse_grad,
)
from bikevolume.gcn.optimizer import AdamState, adam_step
from bikevolume.graph import NormalizedAdjacency
from bikevolume.metrics import Metrics, compute_metrics
from bikevolume.preprocess import FeatureTable, TargetVector

FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 5e-4
    max_epochs: int = 2500
    dropout_p: float = 0.4
    patience: int = 100
    min_improvement: float = 1e-6
    eval_interval: int = 50
    seed: int = 0
    split_ratios: tuple[float, float, float] = (0.80, 0.05, 0.15)
    early_stopping: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "max_epochs": self.max_epochs,
            "dropout_p": self.dropout_p,
            "patience": self.patience,
            "min_improvement": self.min_improvement,
            "eval_interval": self.eval_interval,
            "seed": self.seed,
            "split_ratios": list(self.split_ratios),
            "early_stopping": self.early_stopping,
        }


@dataclass
class TrainedModel:
    config: ModelConfig
    params: Parameters
    train_losses: list[float]
    val_losses: list[float]
    stopped_epoch: int
    best_epoch: int
    seed: int
    snapshots: list[dict] = field(default_factory=list)
    transform: object = None  # TargetTransform used on the labels, if any

    def predict_transformed(self, x: np.ndarray, adj: NormalizedAdjacency) -> np.ndarray:
        pred, _ = forward(self.config, self.params, x, adj, mode="eval")
        return pred

    def predict_counts(self, x: np.ndarray, adj: NormalizedAdjacency) -> np.ndarray:
        """Predictions mapped back to original count units."""
        pred = self.predict_transformed(x, adj)
        if self.transform is None:
            return pred
        return self.transform.inverse(self.transform.inverse_domain_clip(pred))

    def loss_curve_rows(self):
        for epoch, (tr, va) in enumerate(zip(self.train_losses, self.val_losses), start=1):
            yield epoch, tr, va

    def to_json(self) -> str:
        layer_docs = []
        for spec in self.config.layers:
            if isinstance(spec, GCNConvSpec):
                layer_docs.append({"kind": "gcn_conv", "in_dim": spec.in_dim, "out_dim": spec.out_dim})
            elif isinstance(spec, FullyConnectedSpec):
                layer_docs.append({"kind": "fully_connected", "in_dim": spec.in_dim, "out_dim": spec.out_dim})
            elif isinstance(spec, ReluSpec):
                layer_docs.append({"kind": "relu"})
            elif isinstance(spec, BatchNormSpec):
                layer_docs.append({"kind": "batch_norm", "dim": spec.dim})
            elif isinstance(spec, DropoutSpec):
                layer_docs.append({"kind": "dropout", "p": spec.p})
        doc = {
            "format_version": FORMAT_VERSION,
            "label": self.config.label,
            "layers": layer_docs,
            "head": {"in_dim": self.config.output_head.in_dim, "out_dim": 1},
            "params": {
                "layers": [
                    {k: v.tolist() for k, v in p.items()} if p is not None else None
                    for p in self.params.layers
                ],
                "head": {k: v.tolist() for k, v in self.params.head.items()},
            },
            "seed": self.seed,
            "stopped_epoch": self.stopped_epoch,
            "best_epoch": self.best_epoch,
            "transform": self.transform.to_dict() if self.transform is not None else None,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        from bikevolume.transforms import TargetTransform

        doc = json.loads(text)
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {doc.get('format_version')!r}")
        layers = []
        for d in doc["layers"]:
            kind = d["kind"]
            if kind == "gcn_conv":
                layers.append(GCNConvSpec(d["in_dim"], d["out_dim"]))
            elif kind == "fully_connected":
                layers.append(FullyConnectedSpec(d["in_dim"], d["out_dim"]))
            elif kind == "relu":
                layers.append(ReluSpec())
            elif kind == "batch_norm":
                layers.append(BatchNormSpec(d["dim"]))
            elif kind == "dropout":
                layers.append(DropoutSpec(d["p"]))
            else:
                raise ValueError(f"unknown layer kind {kind!r}")
        config = ModelConfig(
            layers=tuple(layers),
            output_head=FullyConnectedSpec(doc["head"]["in_dim"], 1),
            label=doc.get("label", "custom"),
        )
        params = Parameters(
            layers=[
                {k: np.asarray(v, dtype=np.float64) for k, v in p.items()} if p is not None else None
                for p in doc["params"]["layers"]
            ],
            head={k: np.asarray(v, dtype=np.float64) for k, v in doc["params"]["head"].items()},
        )
        transform = TargetTransform.from_dict(doc["transform"]) if doc.get("transform") else None
        return cls(
            config=config,
            params=params,
            train_losses=[],
            val_losses=[],
            stopped_epoch=doc["stopped_epoch"],
            best_epoch=doc["best_epoch"],
            seed=doc["seed"],
            transform=transform,
        )


def train(
    adj: NormalizedAdjacency,
    features: FeatureTable,
    targets: TargetVector,
    split,
    config: ModelConfig | str,
    train_cfg: TrainConfig,
) -> TrainedModel:
    """Fit the configuration on the labelled training nodes of one graph.

    `split` provides disjoint train/validation node-index sets; only nodes
    that are both in a set and labelled contribute to its loss. Runs are a
    pure function of the seed: two calls with identical inputs produce
    identical loss curves and parameters.
    """
    if isinstance(config, str):
        config = config_catalog(config, features.feature_dim, dropout_p=train_cfg.dropout_p)

    x = features.matrix
    labelled = targets.labelled_mask
    train_idx = np.asarray(sorted(set(split.train) & set(np.nonzero(labelled)[0].tolist())), dtype=np.int64)
    val_idx = np.asarray(sorted(set(split.validation) & set(np.nonzero(labelled)[0].tolist())), dtype=np.int64)
    if train_idx.size == 0:
        raise ValueError("no labelled training nodes")
    if val_idx.size == 0:
        raise ValueError("no labelled validation nodes")

    y = targets.transformed

    # one child stream for initialization, another for the dropout masks
    init_seq, dropout_seq = np.random.SeedSequence(train_cfg.seed).spawn(2)
    params = init_parameters(config, np.random.Generator(np.random.PCG64(init_seq)))
    dropout_rng = np.random.Generator(np.random.PCG64(dropout_seq))

    state = AdamState.initial(params)
    train_losses: list[float] = []
    val_losses: list[float] = []
    snapshots: list[dict] = []

    best_val = np.inf
    best_epoch = 0
    best_params = params.copy()
    stall = 0
    stopped_epoch = 0

    for epoch in range(1, train_cfg.max_epochs + 1):
        pred, cache = forward(config, params, x, adj, mode="train", rng=dropout_rng)
        train_loss = masked_mse(pred, y, train_idx)
        grad = masked_mse_grad(pred, y, train_idx)
        grads = backward(config, params, cache, grad)
        state = adam_step(params, grads, state, train_cfg.learning_rate, train_cfg.weight_decay)

        val_pred, _ = forward(config, params, x, adj, mode="eval")
        val_loss = masked_mse(val_pred, y, val_idx)

        train_losses.append(train_loss)
        val_losses.append(val_loss)
        stopped_epoch = epoch

        if train_cfg.eval_interval and epoch % train_cfg.eval_interval == 0:
            snapshots.append(
                _snapshot(epoch, val_pred, targets, train_idx, val_idx)
            )

        if best_val - val_loss > train_cfg.min_improvement:
            best_val = val_loss
            best_epoch = epoch
            best_params = params.copy()
            stall = 0
        else:
            stall += 1
            if train_cfg.early_stopping and stall >= train_cfg.patience:
                break

    if best_epoch == 0:
        # non-finite validation losses throughout; fall back to the final state
        best_epoch = stopped_epoch
        best_params = params.copy()

    return TrainedModel(
        config=config,
        params=best_params,
        train_losses=train_losses,
        val_losses=val_losses,
        stopped_epoch=stopped_epoch,
        best_epoch=best_epoch,
        seed=train_cfg.seed,
        snapshots=snapshots,
        transform=targets.transform,
    )


def _snapshot(epoch: int, val_pred, targets: TargetVector, train_idx, val_idx) -> dict:
    doc = {"epoch": epoch}
    if targets.transform is not None:
        counts = targets.transform.inverse(targets.transform.inverse_domain_clip(val_pred))
    else:
        counts = val_pred
    for name, idx in (("train", train_idx), ("validation", val_idx)):
        m = compute_metrics(targets.aadb[idx], counts[idx])
        doc[name] = m.as_row()
    return doc


def evaluate(
    model: TrainedModel,
    adj: NormalizedAdjacency,
    features: FeatureTable,
    targets: TargetVector,
    mask,
) -> Metrics:
    """Eval-mode metrics over the masked nodes, in original count units."""
    idx = np.asarray(mask, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("evaluation mask is empty")
    counts = model.predict_counts(features.matrix, adj)
    return compute_metrics(targets.aadb[idx], counts[idx])
