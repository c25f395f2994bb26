import pytest

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


def independent_param_count(config: ModelConfig) -> int:
    # shape-walking counter, separate from the library implementation
    count = 0
    specs = list(config.layers) + [config.output_head]
    for spec in specs:
        if isinstance(spec, (GCNConvSpec, FullyConnectedSpec)):
            count += spec.in_dim * spec.out_dim  # weight
            count += spec.out_dim  # bias
        elif isinstance(spec, BatchNormSpec):
            count += spec.dim * 2  # scale and shift
    return count


def widths(config: ModelConfig):
    out = []
    for spec in config.layers:
        if isinstance(spec, (GCNConvSpec, FullyConnectedSpec)):
            kind = "gcn" if isinstance(spec, GCNConvSpec) else "fc"
            out.append((kind, spec.out_dim))
    return out


class TestCatalog:
    def test_label_a_structure(self):
        cfg = config_catalog("A", 10)
        assert widths(cfg) == [("gcn", 32), ("gcn", 64), ("fc", 64)]
        assert not any(isinstance(s, BatchNormSpec) for s in cfg.layers)
        assert not any(isinstance(s, DropoutSpec) for s in cfg.layers)
        assert cfg.output_head == FullyConnectedSpec(64, 1)

    def test_label_a_parameter_count(self):
        # 10*32 + 32 + 32*64 + 64 + 64*64 + 64 + 64*1 + 1 = 6689
        assert parameter_count(config_catalog("A", 10)) == 6689

    def test_label_g_structure(self):
        cfg = config_catalog("G", 12)
        assert widths(cfg) == [
            ("gcn", 32), ("gcn", 64), ("gcn", 128), ("gcn", 256),
            ("fc", 256), ("fc", 128), ("fc", 64),
        ]
        bn_dims = [s.dim for s in cfg.layers if isinstance(s, BatchNormSpec)]
        assert bn_dims == [64, 128]
        assert sum(isinstance(s, DropoutSpec) for s in cfg.layers) == 4

    def test_label_i_first_conv_is_64(self):
        cfg = config_catalog("I", 8)
        first = next(s for s in cfg.layers if isinstance(s, GCNConvSpec))
        assert first.out_dim == 64

    def test_label_j_deepest(self):
        cfg = config_catalog("J", 8)
        assert widths(cfg) == [
            ("gcn", 64), ("gcn", 128), ("gcn", 256), ("gcn", 512),
            ("fc", 512), ("fc", 128), ("fc", 64),
        ]
        bn_dims = [s.dim for s in cfg.layers if isinstance(s, BatchNormSpec)]
        assert bn_dims == [128, 256, 512]

    def test_all_labels_construct_and_chain(self):
        for label in CONFIG_LABELS:
            cfg = config_catalog(label, 7)
            assert cfg.label == label
            assert parameter_count(cfg) == independent_param_count(cfg)

    def test_relu_follows_every_parameterized_layer(self):
        for label in CONFIG_LABELS:
            cfg = config_catalog(label, 7)
            for i, spec in enumerate(cfg.layers):
                if isinstance(spec, (GCNConvSpec, FullyConnectedSpec)):
                    assert isinstance(cfg.layers[i + 1], ReluSpec)

    def test_norm_follows_activation(self):
        # batch normalization sits after the activation, never directly
        # after the linear map
        for label in CONFIG_LABELS:
            cfg = config_catalog(label, 7)
            for i, spec in enumerate(cfg.layers):
                if isinstance(spec, BatchNormSpec):
                    assert isinstance(cfg.layers[i - 1], ReluSpec)

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError, match="unknown configuration label"):
            config_catalog("K", 10)

    def test_dropout_probability_propagates(self):
        cfg = config_catalog("G", 5, dropout_p=0.25)
        assert all(s.p == 0.25 for s in cfg.layers if isinstance(s, DropoutSpec))

    def test_bad_feature_dim_rejected(self):
        with pytest.raises(ValueError):
            config_catalog("A", 0)


class TestModelConfigValidation:
    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="expects"):
            ModelConfig(
                layers=(GCNConvSpec(4, 8), GCNConvSpec(16, 4)),
                output_head=FullyConnectedSpec(4, 1),
            )

    def test_head_must_map_to_one(self):
        with pytest.raises(ValueError, match="output head"):
            ModelConfig(
                layers=(GCNConvSpec(4, 8),),
                output_head=FullyConnectedSpec(8, 2),
            )

    def test_bad_dropout_rejected(self):
        with pytest.raises(ValueError, match="dropout"):
            ModelConfig(
                layers=(GCNConvSpec(4, 8), DropoutSpec(p=1.0)),
                output_head=FullyConnectedSpec(8, 1),
            )

    def test_batch_norm_dim_must_match_stream(self):
        with pytest.raises(ValueError, match="batch norm"):
            ModelConfig(
                layers=(GCNConvSpec(4, 8), BatchNormSpec(dim=16)),
                output_head=FullyConnectedSpec(8, 1),
            )
