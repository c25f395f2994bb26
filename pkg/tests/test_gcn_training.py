import numpy as np
import pytest

from bikevolume.gcn.config import FullyConnectedSpec, ModelConfig
from bikevolume.gcn.network import Gradients, init_parameters
from bikevolume.gcn.optimizer import AdamState, adam_step
from bikevolume.gcn.training import TrainConfig, TrainedModel, evaluate, train
from bikevolume.graph import normalize
from bikevolume.preprocess import build_feature_table, build_target_vector
from bikevolume.sparsity import SplitAssignment, split_nodes
from bikevolume.synth import generate_synthetic_city


def scalar_adam_oracle(grads, lr, steps):
    """Hand-rolled scalar Adam, the reference for one parameter."""
    b1, b2, eps = 0.9, 0.999, 1e-8
    m = v = 0.0
    theta = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        theta -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta


def tiny_model():
    cfg = ModelConfig(
        layers=(FullyConnectedSpec(1, 1),),
        output_head=FullyConnectedSpec(1, 1),
    )
    params = init_parameters(cfg, seed=0)
    return cfg, params


def grads_like(params, fill):
    layers = []
    for p in params.layers:
        if p is None:
            layers.append(None)
        else:
            layers.append({k: np.full_like(v, fill) for k, v in p.items() if not k.startswith("running_")})
    head = {k: np.full_like(v, fill) for k, v in params.head.items()}
    return Gradients(layers=layers, head=head)


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        _, params = tiny_model()
        before = params.copy()
        state = AdamState.initial(params)
        adam_step(params, grads_like(params, 0.0), state, lr=1e-3, weight_decay=0.0)
        for (n1, a), (n2, b) in zip(before.named_arrays(), params.named_arrays()):
            assert np.array_equal(a, b), n1

    def test_single_step_matches_scalar_oracle(self):
        _, params = tiny_model()
        params.layers[0]["W"][:] = 0.0
        state = AdamState.initial(params)
        g = 0.37
        grads = grads_like(params, 0.0)
        grads.layers[0]["W"][:] = g
        adam_step(params, grads, state, lr=1e-3, weight_decay=0.0)
        expected = scalar_adam_oracle([g], lr=1e-3, steps=1)
        assert params.layers[0]["W"][0, 0] == pytest.approx(expected, abs=1e-10)

    def test_multi_step_matches_scalar_oracle(self):
        _, params = tiny_model()
        params.layers[0]["W"][:] = 0.0
        state = AdamState.initial(params)
        gs = [0.5, -0.2, 0.8, 0.1]
        for g in gs:
            grads = grads_like(params, 0.0)
            grads.layers[0]["W"][:] = g
            adam_step(params, grads, state, lr=1e-2, weight_decay=0.0)
        expected = scalar_adam_oracle(gs, lr=1e-2, steps=len(gs))
        assert params.layers[0]["W"][0, 0] == pytest.approx(expected, abs=1e-10)

    def test_bias_correction_depends_on_step_counter(self):
        _, p1 = tiny_model()
        _, p2 = tiny_model()
        p1.layers[0]["W"][:] = 0.0
        p2.layers[0]["W"][:] = 0.0
        s1 = AdamState.initial(p1)
        s2 = AdamState.initial(p2)
        s2.step = 1  # pretend one step already happened
        g1 = grads_like(p1, 0.0)
        g1.layers[0]["W"][:] = 0.3
        g2 = grads_like(p2, 0.0)
        g2.layers[0]["W"][:] = 0.3
        adam_step(p1, g1, s1, lr=1e-3)
        adam_step(p2, g2, s2, lr=1e-3)
        assert p1.layers[0]["W"][0, 0] != p2.layers[0]["W"][0, 0]

    def test_weight_decay_applies_to_weights_only(self):
        _, params = tiny_model()
        params.layers[0]["W"][:] = 1.0
        params.layers[0]["b"][:] = 1.0
        state = AdamState.initial(params)
        adam_step(params, grads_like(params, 0.0), state, lr=1e-3, weight_decay=0.1)
        assert params.layers[0]["W"][0, 0] != 1.0  # decayed
        assert params.layers[0]["b"][0] == 1.0  # untouched

    def test_non_finite_gradient_names_layer(self):
        _, params = tiny_model()
        state = AdamState.initial(params)
        grads = grads_like(params, 0.0)
        grads.layers[0]["W"][:] = np.nan
        with pytest.raises(FloatingPointError, match="layer0.W"):
            adam_step(params, grads, state, lr=1e-3)


def small_city(n=120, seed=0):
    city = generate_synthetic_city(n, seed=seed)
    targets = build_target_vector(city.records, "box_cox")
    adj = normalize(city.graph)
    split = split_nodes(targets.labelled_indices(), (0.8, 0.05, 0.15), seed)
    features = build_feature_table(city.records, fit_rows=split.train.tolist())
    return adj, features, targets, split


class TestTrain:
    def test_loss_decreases(self):
        adj, features, targets, split = small_city()
        cfg = TrainConfig(seed=0, max_epochs=200, patience=200, early_stopping=False)
        model = train(adj, features, targets, split, "A", cfg)
        assert model.train_losses[-1] < model.train_losses[0]
        assert model.stopped_epoch == 200

    def test_constant_validation_stops_at_patience_plus_one(self):
        # loss on an untrainable stream: freeze by zero learning rate so the
        # validation loss never improves after the first epoch
        adj, features, targets, split = small_city()
        cfg = TrainConfig(seed=0, learning_rate=1e-30, max_epochs=500, patience=7)
        model = train(adj, features, targets, split, "A", cfg)
        assert model.stopped_epoch == 8  # patience + 1
        assert model.best_epoch == 1

    def test_same_seed_identical_curves(self):
        adj, features, targets, split = small_city()
        cfg = TrainConfig(seed=42, max_epochs=40, patience=40)
        m1 = train(adj, features, targets, split, "B", cfg)
        m2 = train(adj, features, targets, split, "B", cfg)
        assert m1.train_losses == m2.train_losses
        assert m1.val_losses == m2.val_losses

    def test_different_seeds_differ(self):
        adj, features, targets, split = small_city()
        m1 = train(adj, features, targets, split, "B", TrainConfig(seed=1, max_epochs=25, patience=25))
        m2 = train(adj, features, targets, split, "B", TrainConfig(seed=2, max_epochs=25, patience=25))
        assert m1.train_losses != m2.train_losses

    def test_best_epoch_has_minimal_validation_loss(self):
        adj, features, targets, split = small_city()
        cfg = TrainConfig(seed=3, max_epochs=120, patience=30)
        model = train(adj, features, targets, split, "C", cfg)
        assert model.best_epoch <= model.stopped_epoch
        best = model.val_losses[model.best_epoch - 1]
        assert best <= min(model.val_losses) + 1e-12

    def test_snapshots_every_interval(self):
        adj, features, targets, split = small_city()
        cfg = TrainConfig(seed=0, max_epochs=120, patience=120, eval_interval=50)
        model = train(adj, features, targets, split, "A", cfg)
        epochs = [s["epoch"] for s in model.snapshots]
        assert epochs == [50, 100]
        assert "validation" in model.snapshots[0]

    def test_empty_training_labels_rejected(self):
        adj, features, targets, split = small_city()
        bad = SplitAssignment(
            train=np.array([], dtype=np.int64),
            validation=split.validation,
            test=split.test,
        )
        with pytest.raises(ValueError, match="training"):
            train(adj, features, targets, bad, "A", TrainConfig(seed=0))


class TestEvaluateAndSerialize:
    def test_perfect_predictions_zero_metrics(self):
        from bikevolume.metrics import compute_metrics

        y = np.array([3.0, 17.0, 8.0, 1.0])
        m = compute_metrics(y, y.copy())
        assert m.rmse == 0.0 and m.mse == 0.0 and m.mae == 0.0 and m.mape == 0.0

    def test_single_gcn_a_run_on_500_node_city_is_fast(self):
        # full default training protocol on a 500-node city stays well
        # under a minute on commodity hardware
        import time

        adj, features, targets, split = small_city(n=500, seed=1)
        t0 = time.perf_counter()
        model = train(adj, features, targets, split, "A", TrainConfig(seed=0))
        elapsed = time.perf_counter() - t0
        assert elapsed < 60.0
        assert model.stopped_epoch >= 1
        m = evaluate(model, adj, features, targets, split.test)
        assert np.isfinite(m.rmse)

    def test_metrics_match_hand_example(self):
        from bikevolume.metrics import compute_metrics

        m = compute_metrics([10.0], [8.0])
        assert m.rmse == pytest.approx(2.0)
        assert m.mae == pytest.approx(2.0)
        assert m.mape == pytest.approx(20.0)

    def test_rmse_is_sqrt_mse_and_mae_bounded(self):
        from bikevolume.metrics import compute_metrics

        rng = np.random.Generator(np.random.PCG64(5))
        for _ in range(25):
            y = rng.integers(0, 50, size=30).astype(float)
            pred = y + rng.normal(size=30) * 3
            m = compute_metrics(y, pred)
            assert m.rmse**2 == pytest.approx(m.mse, abs=1e-9)
            assert m.mae <= m.rmse + 1e-12

    def test_metrics_loop_oracle(self):
        from bikevolume.metrics import compute_metrics

        rng = np.random.Generator(np.random.PCG64(6))
        y = rng.integers(0, 40, size=25).astype(float)
        pred = rng.normal(size=25) * 10 + 10
        m = compute_metrics(y, pred)
        n = len(y)
        rmse = (sum((a - b) ** 2 for a, b in zip(y, pred)) / n) ** 0.5
        mae = sum(abs(a - b) for a, b in zip(y, pred)) / n
        mape_terms = [abs(a - b) / a for a, b in zip(y, pred) if a >= 1]
        mape = 100.0 * sum(mape_terms) / len(mape_terms)
        assert m.rmse == pytest.approx(rmse, abs=1e-10)
        assert m.mae == pytest.approx(mae, abs=1e-10)
        assert m.mape == pytest.approx(mape, abs=1e-10)

    def test_all_zero_targets_mape_undefined(self):
        from bikevolume.metrics import compute_metrics

        m = compute_metrics([0.0, 0.0], [1.0, 2.0])
        assert m.mape is None
        assert m.excluded_zero_targets == 2
        assert m.rmse > 0  # other metrics still present

    def test_model_json_round_trip(self):
        adj, features, targets, split = small_city()
        cfg = TrainConfig(seed=0, max_epochs=10, patience=10)
        model = train(adj, features, targets, split, "B", cfg)
        revived = TrainedModel.from_json(model.to_json())
        p1 = model.predict_counts(features.matrix, adj)
        p2 = revived.predict_counts(features.matrix, adj)
        assert np.array_equal(p1, p2)
        assert revived.config.label == "B"
        assert revived.best_epoch == model.best_epoch
