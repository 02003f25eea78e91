import numpy as np
import numpy.testing as npt
import pytest

from spikekit import training
from spikekit.data import gen_poisson_patterns
from spikekit.errors import ConfigError, DimensionError, StateError, TrainingDiverged
from spikekit.network import init_network
from spikekit.training import (
    Adam,
    RunMetrics,
    TrainConfig,
    covering_bin_edges,
    evaluate,
    spike_count_report,
    train,
    weight_shift_report,
    write_metrics_csv,
    write_metrics_json,
    write_spike_counts_csv,
    write_weight_shift_csv,
)


def _toy():
    kw = dict(class_count=2, neurons=8, timesteps=3, rate_lo=0.1, rate_hi=0.9, seed=2)
    return (gen_poisson_patterns(n_per_class=6, split="train", **kw),
            gen_poisson_patterns(n_per_class=4, split="test", **kw))


def _toy_net(model="lif", seed=1):
    return init_network([8, 6, 2], model=model, timesteps=3, seed=seed)


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig(epochs=1, batch_size=1, seed=0)
        assert cfg.learning_rate == 1e-3
        assert cfg.adam_beta1 == 0.9
        assert cfg.adam_beta2 == 0.999
        assert cfg.adam_eps == 1e-8

    def test_validation(self):
        good = dict(epochs=1, batch_size=1, seed=0)
        with pytest.raises(ConfigError):
            TrainConfig(**{**good, "epochs": 0})
        with pytest.raises(ConfigError):
            TrainConfig(**{**good, "batch_size": 0})
        with pytest.raises(ConfigError):
            TrainConfig(**{**good, "learning_rate": -1e-3})
        with pytest.raises(ConfigError):
            TrainConfig(**{**good, "adam_beta1": 1.0})
        with pytest.raises(ConfigError):
            TrainConfig(**{**good, "adam_eps": 0.0})
        with pytest.raises(ConfigError):
            TrainConfig(**{**good, "model": "gru"})
        with pytest.raises(ConfigError):
            TrainConfig(**{**good, "timesteps": 0})
        with pytest.raises(ConfigError):
            TrainConfig(**{**good, "seed": -1})


class TestAdam:
    def test_first_step_magnitude_is_learning_rate(self):
        """With m-hat = v-hat = 1 the first step is lr / (1 + eps)."""
        for lr in (1e-3, 0.05):
            p = np.array([0.0])
            opt = Adam([("p", p)], learning_rate=lr)
            opt.step([("p", np.array([1.0]))])
            npt.assert_allclose(-p[0], lr, rtol=1e-6)
            assert p[0] == -(lr * 1.0 / (np.sqrt(1.0) + 1e-8))

    def test_matches_reference_implementation(self):
        rng = np.random.default_rng(6)
        p = rng.normal(size=(3, 4))
        p_ref = p.copy()
        opt = Adam([("w", p)], learning_rate=0.01, beta1=0.9, beta2=0.99, eps=1e-8)
        m = np.zeros_like(p_ref)
        v = np.zeros_like(p_ref)
        for t in range(1, 11):
            g = rng.normal(size=(3, 4))
            opt.step([("w", g)])
            m = 0.9 * m + 0.1 * g
            v = 0.99 * v + 0.01 * g * g
            p_ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.99 ** t)) + 1e-8)
            npt.assert_allclose(p, p_ref, rtol=1e-12, atol=1e-15)

    def test_handles_zero_d_parameters(self):
        p = np.zeros(())
        opt = Adam([("raw", p)], learning_rate=0.1)
        opt.step([("raw", np.asarray(1.0))])
        assert p.shape == ()
        assert p < 0

    def test_missing_gradient_rejected(self):
        opt = Adam([("a", np.zeros(2)), ("b", np.zeros(2))], learning_rate=0.1)
        with pytest.raises(StateError, match="b"):
            opt.step([("a", np.ones(2))])


class TestTrainLoop:
    def test_zero_learning_rate_is_a_bitwise_fixpoint(self):
        train_ds, test_ds = _toy()
        net = _toy_net()
        before = [arr.copy() for _, arr in net.parameter_items()]
        cfg = TrainConfig(epochs=3, batch_size=4, seed=9, learning_rate=0.0)
        trained, metrics = train(net, train_ds, cfg, test_ds)
        for (name, arr), orig in zip(trained.parameter_items(), before):
            assert arr.tobytes() == orig.tobytes(), name
        assert metrics.epoch_count == 3

    def test_input_network_not_mutated(self):
        train_ds, _ = _toy()
        net = _toy_net()
        before = net.layers[0].w.copy()
        train(net, train_ds, TrainConfig(epochs=2, batch_size=4, seed=0))
        assert net.layers[0].w.tobytes() == before.tobytes()

    def test_same_config_twice_gives_identical_runs(self):
        train_ds, test_ds = _toy()
        cfg = TrainConfig(epochs=4, batch_size=4, seed=5)
        n1, m1 = train(_toy_net(), train_ds, cfg, test_ds)
        n2, m2 = train(_toy_net(), train_ds, cfg, test_ds)
        assert m1.train_loss == m2.train_loss
        assert m1.test_accuracy == m2.test_accuracy
        assert m1.shuffle_seeds == m2.shuffle_seeds
        assert m1.spike_counts == m2.spike_counts
        for (_, a), (_, b) in zip(n1.parameter_items(), n2.parameter_items()):
            assert a.tobytes() == b.tobytes()

    def test_epoch_orders_differ_but_are_recorded(self):
        train_ds, _ = _toy()
        cfg = TrainConfig(epochs=3, batch_size=4, seed=5)
        _, metrics = train(_toy_net(), train_ds, cfg)
        assert len(set(metrics.shuffle_seeds)) == 3

    @pytest.mark.parametrize("model", ["lif", "if", "plif", "aia", "cached-aia"])
    def test_every_model_trains_without_error(self, model):
        train_ds, test_ds = _toy()
        cfg = TrainConfig(epochs=2, batch_size=4, seed=3, model=model)
        trained, metrics = train(_toy_net(model), train_ds, cfg, test_ds)
        assert metrics.epoch_count == 2
        assert all(0.0 <= a <= 1.0 for a in metrics.train_accuracy + metrics.test_accuracy)

    def test_plif_leak_actually_moves(self):
        train_ds, _ = _toy()
        net = _toy_net("plif")
        cfg = TrainConfig(epochs=3, batch_size=4, seed=3, model="plif", learning_rate=1e-2)
        trained, _ = train(net, train_ds, cfg)
        assert float(trained.layers[0].plif_raw) != 0.0

    def test_final_test_row_reproducible_by_evaluate(self):
        train_ds, test_ds = _toy()
        cfg = TrainConfig(epochs=3, batch_size=4, seed=7)
        trained, metrics = train(_toy_net(), train_ds, cfg, test_ds)
        result = evaluate(trained, test_ds)
        assert result.loss == metrics.test_loss[-1]
        assert result.accuracy == metrics.test_accuracy[-1]
        assert result.spike_counts == metrics.spike_counts

    def test_divergence_names_first_bad_parameter(self):
        train_ds, _ = _toy()
        net = _toy_net()
        net.layers[0].w[0, 0] = np.nan
        with pytest.raises(TrainingDiverged) as info:
            train(net, train_ds, TrainConfig(epochs=1, batch_size=4, seed=0))
        assert info.value.parameter == "layer0.w"
        assert "layer0.w" in str(info.value)

    def test_nan_loss_with_finite_parameters(self, monkeypatch):
        train_ds, _ = _toy()

        def poisoned(tape, labels):
            return float("nan"), np.zeros_like(tape.readout), np.zeros(len(labels), dtype=int)

        monkeypatch.setattr(training, "readout_and_loss", poisoned)
        with pytest.raises(TrainingDiverged) as info:
            train(_toy_net(), train_ds, TrainConfig(epochs=1, batch_size=4, seed=0))
        assert info.value.parameter == "loss"

    def test_width_mismatch_rejected(self):
        train_ds, _ = _toy()
        bad = init_network([9, 6, 2], model="lif", timesteps=3, seed=1)
        with pytest.raises(DimensionError):
            train(bad, train_ds, TrainConfig(epochs=1, batch_size=4, seed=0))
        bad_t = init_network([8, 6, 2], model="lif", timesteps=4, seed=1)
        with pytest.raises(DimensionError):
            train(bad_t, train_ds, TrainConfig(epochs=1, batch_size=4, seed=0))


class TestEvaluate:
    def test_zero_input_gives_zero_spikes_and_chance_loss(self):
        ds = gen_poisson_patterns(2, 8, 3, 0.1, 0.9, n_per_class=3, seed=1)
        ds.data[:] = 0.0
        result = evaluate(_toy_net(), ds)
        assert result.spike_counts == [0, 0]
        npt.assert_allclose(result.loss, np.log(2.0), rtol=1e-12)

    def test_counts_respect_binarity_bound(self):
        train_ds, _ = _toy()
        net = _toy_net()
        result = evaluate(net, train_ds)
        for count, width in zip(result.spike_counts, [6, 2]):
            assert 0 <= count <= len(train_ds) * width * train_ds.timesteps
        assert spike_count_report(net, train_ds) == result.spike_counts


class TestWeightShift:
    def test_identical_networks_give_zero_deltas(self):
        net = _toy_net()
        edges = covering_bin_edges(net, net)
        npt.assert_array_equal(weight_shift_report(net, net, edges), 0.0)

    def test_hand_computed_two_bin_case(self):
        a = _toy_net()
        b = a.copy()
        for layer in a.layers:
            layer.w[:] = 0.5
        for layer in b.layers:
            layer.w[:] = -0.5
        deltas = weight_shift_report(a, b, np.array([-1.0, 0.0, 1.0]))
        npt.assert_array_equal(deltas, [1.0, -1.0])

    def test_deltas_conserve_mass_over_covering_range(self):
        rng = np.random.default_rng(23)
        a = _toy_net(seed=4)
        b = _toy_net(seed=5)
        for layer in b.layers:
            layer.w += rng.normal(0, 0.2, size=layer.w.shape)
        edges = covering_bin_edges(a, b)
        deltas = weight_shift_report(a, b, edges)
        assert abs(deltas.sum()) <= 1e-12
        assert np.any(deltas != 0.0)

    def test_covering_edges_actually_cover(self):
        a, b = _toy_net(seed=6), _toy_net(seed=7)
        edges = covering_bin_edges(a, b)
        pooled = np.concatenate([l.w.ravel() for l in a.layers + b.layers])
        assert edges[0] < pooled.min() and pooled.max() < edges[-1]

    def test_shape_mismatch_rejected(self):
        a = _toy_net()
        b = init_network([8, 5, 2], model="lif", timesteps=3, seed=0)
        with pytest.raises(DimensionError):
            weight_shift_report(a, b, np.array([-1.0, 0.0, 1.0]))


class TestReports:
    def _metrics(self):
        train_ds, test_ds = _toy()
        cfg = TrainConfig(epochs=2, batch_size=4, seed=5)
        return train(_toy_net(), train_ds, cfg, test_ds)[1]

    def test_metrics_csv_layout_and_precision(self, tmp_path):
        metrics = self._metrics()
        path = tmp_path / "metrics.csv"
        write_metrics_csv(metrics, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,split,loss,accuracy"
        assert len(lines) == 1 + 2 * 2  # train and test row per epoch
        epoch, split, loss, acc = lines[1].split(",")
        assert (epoch, split) == ("1", "train")
        # printed with enough digits to reparse to the identical float
        assert float(loss) == metrics.train_loss[0]
        assert float(acc) == metrics.train_accuracy[0]
        assert "wall" not in path.read_text()

    def test_metrics_csv_is_byte_stable(self, tmp_path):
        metrics = self._metrics()
        write_metrics_csv(metrics, tmp_path / "a.csv")
        write_metrics_csv(metrics, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_metrics_json_carries_timing_and_seeds(self, tmp_path):
        import json
        metrics = self._metrics()
        path = tmp_path / "metrics.json"
        write_metrics_json(metrics, path)
        doc = json.loads(path.read_text())
        assert len(doc["epochs"]) == 2
        assert {"epoch", "shuffle_seed", "train_loss", "train_accuracy", "wall_clock_s",
                "test_loss", "test_accuracy"} <= set(doc["epochs"][0])
        assert doc["spike_counts"] == metrics.spike_counts

    def test_weight_shift_csv(self, tmp_path):
        path = tmp_path / "shift.csv"
        write_weight_shift_csv(np.array([-1.0, 0.0, 1.0]), np.array([0.25, -0.25]), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "bin_lo,bin_hi,delta"
        assert lines[1] == "-1,0,0.25"
        assert len(lines) == 3

    def test_spike_counts_csv(self, tmp_path):
        path = tmp_path / "spikes.csv"
        write_spike_counts_csv({"checkpoint_a": [10, 3], "checkpoint_b": [8, 4]}, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "layer,checkpoint_a,checkpoint_b"
        assert lines[1] == "0,10,8"
        assert lines[2] == "1,3,4"
