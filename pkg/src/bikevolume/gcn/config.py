"""The catalog of network configurations A through J.

Each configuration is an ordered stack over five layer kinds: graph
convolution (propagate through the normalized adjacency, then a linear map
with bias), ReLU, batch normalization, dropout, and fully connected. Graph
convolutions and hidden fully connected layers are each followed by ReLU;
batch normalization sits after the activation; dropout comes last in the
block. Every configuration ends with a linear head mapping the last hidden
width to a single output per node.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

CONFIG_LABELS = ("A", "B", "C", "D", "E", "F", "G", "H", "I", "J")

DEFAULT_DROPOUT_P = 0.4


@dataclass(frozen=True)
class GCNConvSpec:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class ReluSpec:
    pass


@dataclass(frozen=True)
class BatchNormSpec:
    dim: int
    eps: float = 1e-8  # double precision throughout; keeps normalized variance within 1e-6 of 1
    momentum: float = 0.1


@dataclass(frozen=True)
class DropoutSpec:
    p: float


@dataclass(frozen=True)
class FullyConnectedSpec:
    in_dim: int
    out_dim: int


LayerSpec = Union[GCNConvSpec, ReluSpec, BatchNormSpec, DropoutSpec, FullyConnectedSpec]


@dataclass(frozen=True)
class ModelConfig:
    layers: tuple[LayerSpec, ...]
    output_head: FullyConnectedSpec
    label: str = "custom"

    def __post_init__(self):
        width = None
        for spec in self.layers:
            if isinstance(spec, (GCNConvSpec, FullyConnectedSpec)):
                if spec.in_dim <= 0 or spec.out_dim <= 0:
                    raise ValueError(f"{self.label}: layer dimensions must be positive")
                if width is not None and spec.in_dim != width:
                    raise ValueError(
                        f"{self.label}: layer expects {spec.in_dim} features but receives {width}"
                    )
                width = spec.out_dim
            elif isinstance(spec, BatchNormSpec):
                if spec.dim != width:
                    raise ValueError(f"{self.label}: batch norm dim {spec.dim} != stream width {width}")
            elif isinstance(spec, DropoutSpec):
                if not 0.0 <= spec.p < 1.0:
                    raise ValueError(f"{self.label}: dropout p must lie in [0, 1)")
        if width is None:
            raise ValueError(f"{self.label}: configuration has no parameterized layer")
        if self.output_head.in_dim != width or self.output_head.out_dim != 1:
            raise ValueError(f"{self.label}: output head must map {width} -> 1")


# Per label: ordered rows of the architecture table. ("gcn", k) / ("fc", k)
# give the output width; "bn" and "drop" mark the normalization/dropout rows
# attached to the preceding block.
_CATALOG_ROWS: dict[str, tuple] = {
    "A": (("gcn", 32), ("gcn", 64), ("fc", 64)),
    "B": (("gcn", 32), ("gcn", 64), "bn", "drop", ("fc", 64)),
    "C": (("gcn", 32), ("gcn", 64), "bn", "drop", ("fc", 64), "drop", ("fc", 64)),
    "D": (("gcn", 32), ("gcn", 64), "bn", "drop", ("gcn", 128), ("fc", 128), "drop", ("fc", 64)),
    "E": (
        ("gcn", 32), ("gcn", 64), "bn", "drop",
        ("gcn", 128), "bn", "drop",
        ("fc", 128), "drop", ("fc", 64),
    ),
    "F": (
        ("gcn", 32), ("gcn", 64), "bn", "drop",
        ("gcn", 256), "bn", "drop",
        ("fc", 256), "drop", ("fc", 128), "drop", ("fc", 64),
    ),
    "G": (
        ("gcn", 32), ("gcn", 64), "bn", "drop",
        ("gcn", 128), "bn", "drop",
        ("gcn", 256),
        ("fc", 256), "drop", ("fc", 128), "drop", ("fc", 64),
    ),
    "H": (
        ("gcn", 32), ("gcn", 64), "bn", "drop",
        ("gcn", 128), "bn", "drop",
        ("gcn", 256), "bn", "drop",
        ("fc", 256), "drop", ("fc", 128), "drop", ("fc", 64),
    ),
    "I": (
        ("gcn", 64), ("gcn", 128), "bn", "drop",
        ("gcn", 256), "bn", "drop",
        ("fc", 256), "drop", ("fc", 128), "drop", ("fc", 64),
    ),
    "J": (
        ("gcn", 64), ("gcn", 128), "bn", "drop",
        ("gcn", 256), "bn", "drop",
        ("gcn", 512), "bn", "drop",
        ("fc", 512), "drop", ("fc", 128), "drop", ("fc", 64),
    ),
}


def config_catalog(label: str, feature_dim: int, dropout_p: float = DEFAULT_DROPOUT_P) -> ModelConfig:
    """Instantiate configuration A..J for the given input feature count."""
    if label not in _CATALOG_ROWS:
        raise ValueError(f"unknown configuration label {label!r}: expected one of {'..'.join(['A', 'J'])}")
    if feature_dim <= 0:
        raise ValueError("feature_dim must be positive")

    layers: list[LayerSpec] = []
    width = feature_dim
    for row in _CATALOG_ROWS[label]:
        if row == "bn":
            layers.append(BatchNormSpec(dim=width))
        elif row == "drop":
            layers.append(DropoutSpec(p=dropout_p))
        else:
            kind, out = row
            if kind == "gcn":
                layers.append(GCNConvSpec(in_dim=width, out_dim=out))
            else:
                layers.append(FullyConnectedSpec(in_dim=width, out_dim=out))
            layers.append(ReluSpec())
            width = out
    head = FullyConnectedSpec(in_dim=width, out_dim=1)
    return ModelConfig(layers=tuple(layers), output_head=head, label=label)


def parameter_count(config: ModelConfig) -> int:
    """Total learnable scalars: weights, biases, and batch-norm scale/shift."""
    total = 0
    for spec in config.layers:
        if isinstance(spec, (GCNConvSpec, FullyConnectedSpec)):
            total += spec.in_dim * spec.out_dim + spec.out_dim
        elif isinstance(spec, BatchNormSpec):
            total += 2 * spec.dim
    total += config.output_head.in_dim * config.output_head.out_dim + config.output_head.out_dim
    return total
