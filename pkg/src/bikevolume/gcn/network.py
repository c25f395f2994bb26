"""Forward and reverse passes for the layer stack, in plain numpy.

The whole graph is one batch: a forward pass maps the node-feature matrix
H through every layer, with graph convolutions propagating through the
fixed normalized adjacency S,

    GCNConv:  Z = S @ H @ W + b

followed by ReLU, then batch normalization over the node axis, then
dropout. The backward pass returns exact analytic gradients, including the
batch-statistic chain rule for batch normalization; the adjacency is a
constant and receives no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from bikevolume.gcn.config import (
    BatchNormSpec,
    DropoutSpec,
    FullyConnectedSpec,
    GCNConvSpec,
    ModelConfig,
    ReluSpec,
)
from bikevolume.graph import NormalizedAdjacency


@dataclass
class Parameters:
    """Learnable arrays per layer, plus batch-norm running statistics."""

    layers: list  # dict per layer index, or None for parameter-free layers
    head: dict

    def copy(self) -> "Parameters":
        return Parameters(
            layers=[{k: v.copy() for k, v in p.items()} if p is not None else None for p in self.layers],
            head={k: v.copy() for k, v in self.head.items()},
        )

    def named_arrays(self):
        """Yield (name, array) for every learnable parameter (running stats excluded)."""
        for i, p in enumerate(self.layers):
            if p is None:
                continue
            for key, arr in p.items():
                if key.startswith("running_"):
                    continue
                yield f"layer{i}.{key}", arr
        for key, arr in self.head.items():
            yield f"head.{key}", arr


@dataclass
class ForwardCache:
    """Intermediates recorded by a train-mode forward, consumed by backward."""

    label: str
    n_layers: int
    mode: str
    adj: NormalizedAdjacency
    layer_caches: list = field(default_factory=list)
    head_input: np.ndarray | None = None


def init_parameters(config: ModelConfig, seed) -> Parameters:
    """Glorot-uniform weights, zero biases, unit batch-norm scale.

    `seed` may be an int, a SeedSequence, or a ready Generator.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(seed))
    layers = []
    for spec in config.layers:
        if isinstance(spec, (GCNConvSpec, FullyConnectedSpec)):
            layers.append(_init_linear(spec.in_dim, spec.out_dim, rng))
        elif isinstance(spec, BatchNormSpec):
            layers.append(
                {
                    "gamma": np.ones(spec.dim),
                    "beta": np.zeros(spec.dim),
                    "running_mean": np.zeros(spec.dim),
                    "running_var": np.ones(spec.dim),
                }
            )
        else:
            layers.append(None)
    head = _init_linear(config.output_head.in_dim, config.output_head.out_dim, rng)
    return Parameters(layers=layers, head=head)


def _init_linear(fan_in: int, fan_out: int, rng) -> dict:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return {
        "W": rng.uniform(-limit, limit, size=(fan_in, fan_out)),
        "b": np.zeros(fan_out),
    }


def forward(
    config: ModelConfig,
    params: Parameters,
    x: np.ndarray,
    adj: NormalizedAdjacency,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the stack over all nodes; returns (predictions, cache).

    In train mode, dropout draws Bernoulli masks from `rng` (scaling the
    survivors by 1/(1-p)) and batch normalization uses batch statistics,
    updating the running estimates in place. In eval mode both layers are
    deterministic: dropout is the identity and batch normalization uses the
    running statistics.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    h = np.asarray(x, dtype=np.float64)
    if h.ndim != 2:
        raise ValueError("feature matrix must be 2-dimensional")
    if h.shape[0] != adj.node_count:
        raise ValueError(f"feature matrix has {h.shape[0]} rows but graph has {adj.node_count} nodes")

    cache = ForwardCache(label=config.label, n_layers=len(config.layers), mode=mode, adj=adj)
    train = mode == "train"

    for spec, p in zip(config.layers, params.layers):
        if isinstance(spec, GCNConvSpec):
            if h.shape[1] != spec.in_dim:
                raise ValueError(f"GCNConv expects {spec.in_dim} features, got {h.shape[1]}")
            ax = adj.matmul(h)
            cache.layer_caches.append({"ax": ax})
            h = ax @ p["W"] + p["b"]
        elif isinstance(spec, FullyConnectedSpec):
            if h.shape[1] != spec.in_dim:
                raise ValueError(f"FullyConnected expects {spec.in_dim} features, got {h.shape[1]}")
            cache.layer_caches.append({"x": h})
            h = h @ p["W"] + p["b"]
        elif isinstance(spec, ReluSpec):
            mask = h > 0
            cache.layer_caches.append({"mask": mask})
            h = np.where(mask, h, 0.0)
        elif isinstance(spec, BatchNormSpec):
            if train:
                mu = h.mean(axis=0)
                var = h.var(axis=0)
                inv_std = 1.0 / np.sqrt(var + spec.eps)
                xhat = (h - mu) * inv_std
                n = h.shape[0]
                unbiased = var * n / (n - 1) if n > 1 else var
                p["running_mean"] *= 1.0 - spec.momentum
                p["running_mean"] += spec.momentum * mu
                p["running_var"] *= 1.0 - spec.momentum
                p["running_var"] += spec.momentum * unbiased
                cache.layer_caches.append({"xhat": xhat, "inv_std": inv_std})
                h = xhat * p["gamma"] + p["beta"]
            else:
                inv_std = 1.0 / np.sqrt(p["running_var"] + spec.eps)
                xhat = (h - p["running_mean"]) * inv_std
                cache.layer_caches.append({})
                h = xhat * p["gamma"] + p["beta"]
        elif isinstance(spec, DropoutSpec):
            if train and spec.p > 0.0:
                if rng is None:
                    raise ValueError("train-mode forward with dropout requires an rng")
                keep = rng.random(h.shape) >= spec.p
                cache.layer_caches.append({"keep": keep, "p": spec.p})
                h = np.where(keep, h, 0.0) / (1.0 - spec.p)
            else:
                cache.layer_caches.append({"keep": None, "p": spec.p})
        else:
            raise TypeError(f"unknown layer spec {spec!r}")

    cache.head_input = h
    pred = h @ params.head["W"] + params.head["b"]
    return pred[:, 0], cache


@dataclass
class Gradients:
    layers: list
    head: dict


def backward(
    config: ModelConfig,
    params: Parameters,
    cache: ForwardCache,
    loss_grad: np.ndarray,
) -> Gradients:
    """Exact gradients of the scalar loss w.r.t. every learnable parameter.

    `loss_grad` is d(loss)/d(prediction) per node. Requires a cache produced
    by a train-mode forward so dropout masks and batch statistics are the
    ones the loss actually saw.
    """
    if cache.label != config.label or cache.n_layers != len(config.layers):
        raise ValueError("cache does not belong to this configuration")
    if cache.mode != "train":
        raise ValueError("backward requires a train-mode forward cache")

    adj = cache.adj
    d = np.asarray(loss_grad, dtype=np.float64)[:, None]

    head_grad = {
        "W": cache.head_input.T @ d,
        "b": d.sum(axis=0),
    }
    d = d @ params.head["W"].T

    layer_grads: list = [None] * len(config.layers)
    for i in range(len(config.layers) - 1, -1, -1):
        spec = config.layers[i]
        p = params.layers[i]
        c = cache.layer_caches[i]
        if isinstance(spec, GCNConvSpec):
            layer_grads[i] = {"W": c["ax"].T @ d, "b": d.sum(axis=0)}
            # S is symmetric, so dH = S^T (dZ W^T) = S (dZ W^T)
            d = adj.matmul(d @ p["W"].T)
        elif isinstance(spec, FullyConnectedSpec):
            layer_grads[i] = {"W": c["x"].T @ d, "b": d.sum(axis=0)}
            d = d @ p["W"].T
        elif isinstance(spec, ReluSpec):
            d = np.where(c["mask"], d, 0.0)
        elif isinstance(spec, BatchNormSpec):
            xhat = c["xhat"]
            inv_std = c["inv_std"]
            n = xhat.shape[0]
            layer_grads[i] = {
                "gamma": np.sum(d * xhat, axis=0),
                "beta": np.sum(d, axis=0),
            }
            dxhat = d * p["gamma"]
            # chain rule through the batch mean and variance
            d = (inv_std / n) * (
                n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0)
            )
        elif isinstance(spec, DropoutSpec):
            if c["keep"] is not None:
                d = np.where(c["keep"], d, 0.0) / (1.0 - c["p"])
        else:
            raise TypeError(f"unknown layer spec {spec!r}")

    return Gradients(layers=layer_grads, head=head_grad)


def masked_mse(pred: np.ndarray, target: np.ndarray, mask) -> float:
    """Mean squared residual over the masked nodes only."""
    idx = _mask_indices(mask, len(pred))
    if idx.size == 0:
        raise ValueError("masked_mse requires a non-empty mask")
    resid = np.asarray(pred, dtype=np.float64)[idx] - np.asarray(target, dtype=np.float64)[idx]
    return float(np.mean(resid**2))


def masked_mse_grad(pred: np.ndarray, target: np.ndarray, mask) -> np.ndarray:
    """d(masked mse)/d(pred): 2*(pred - target)/|mask| on the mask, else 0."""
    idx = _mask_indices(mask, len(pred))
    if idx.size == 0:
        raise ValueError("masked_mse requires a non-empty mask")
    grad = np.zeros(len(pred))
    grad[idx] = 2.0 * (pred[idx] - target[idx]) / idx.size
    return grad


def _mask_indices(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if len(mask) != n:
            raise ValueError("boolean mask length must match node count")
        return np.nonzero(mask)[0]
    idx = mask.astype(np.int64, copy=False)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError("mask index out of range")
    return idx
