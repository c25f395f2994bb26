from bikevolume.gcn.config import (
    CONFIG_LABELS,
    BatchNormSpec,
    DropoutSpec,
    FullyConnectedSpec,
    GCNConvSpec,
    ModelConfig,
    ReluSpec,
    config_catalog,
    parameter_count,
)
from bikevolume.gcn.network import backward, forward, init_parameters, masked_mse
from bikevolume.gcn.optimizer import AdamState, adam_step
from bikevolume.gcn.training import TrainConfig, TrainedModel, evaluate, train

__all__ = [
    "CONFIG_LABELS",
    "GCNConvSpec",
    "ReluSpec",
    "BatchNormSpec",
    "DropoutSpec",
    "FullyConnectedSpec",
    "ModelConfig",
    "config_catalog",
    "parameter_count",
    "init_parameters",
    "forward",
    "backward",
    "masked_mse",
    "AdamState",
    "adam_step",
    "TrainConfig",
    "TrainedModel",
    "train",
    "evaluate",
]
