"""Forward scoring, input gradients, training, and persistence."""

import json

import numpy as np
import pytest

from flipaudit.errors import ModelFormatError, TrainingDivergedError
from flipaudit.model import (
    MlpModel,
    TrainConfig,
    accuracy,
    load_model,
    save_model,
    train_model,
)

from conftest import linear_model, random_mlp


class TestForward:
    def test_zero_weights_give_even_scores(self):
        m = MlpModel([3, 4, 2], [np.zeros((3, 4)), np.zeros((4, 2))],
                     [np.zeros(4), np.zeros(2)])
        z = m.forward(np.array([1.0, -2.0, 3.0]))
        assert z.z1 == pytest.approx(0.5) and z.z2 == pytest.approx(0.5)

    def test_zero_logit_difference(self):
        # single layer, w1 - w2 = (1, 0), equal biases: x = (0, anything) sits
        # on the boundary
        m = linear_model(np.array([1.0, 0.0]), 0.0)
        z = m.forward(np.array([0.0, 123.4]))
        assert z.z1 == pytest.approx(0.5, abs=1e-15)

    def test_hand_built_2_2_2(self):
        # expected value computed with math.erf and a by-hand softmax
        m = MlpModel(
            [2, 2, 2],
            [np.array([[0.3, -0.2], [0.1, 0.4]]), np.array([[0.7, -0.3], [-0.5, 0.6]])],
            [np.array([0.05, -0.1]), np.array([0.02, -0.04])])
        z = m.forward(np.array([0.8, -1.1]))
        assert z.z1 == pytest.approx(0.73233799739770056, abs=1e-12)
        assert z.z2 == pytest.approx(0.26766200260229939, abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_softmax_normalization(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mlp([5, 7, 4, 2], rng, scale=2.0)
        z = m.scores(rng.normal(size=(20, 5)))
        assert np.abs(z.sum(axis=1) - 1.0).max() <= 1e-12

    def test_dimension_mismatch(self):
        m = linear_model(np.array([1.0, 2.0]), 0.0)
        with pytest.raises(ValueError):
            m.forward(np.array([1.0, 2.0, 3.0]))


class TestInputGradient:
    def test_zero_weights_zero_gradient(self):
        m = MlpModel([3, 2, 2], [np.zeros((3, 2)), np.zeros((2, 2))],
                     [np.zeros(2), np.zeros(2)])
        assert np.allclose(m.input_gradient(np.ones(3)), 0.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_difference_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        m = random_mlp([4, 6, 5, 2], rng, scale=1.5)
        x = rng.normal(size=4)
        grad = m.input_gradient(x)
        h = 1e-5
        for i in range(4):
            e = np.zeros(4)
            e[i] = h
            fd = (m.forward(x + e).z1 - m.forward(x - e).z1) / (2 * h)
            assert grad[i] == pytest.approx(fd, abs=1e-5)

    def test_logistic_closed_form(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=4)
        m = linear_model(a, 0.7)
        x = rng.normal(size=4)
        z1 = m.forward(x).z1
        assert np.abs(m.input_gradient(x) - z1 * (1 - z1) * a).max() <= 1e-12


class TestTraining:
    def test_xor(self):
        x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        y = np.array([0, 1, 1, 0])
        model, losses = train_model(
            x, y, [2, 4, 2],
            TrainConfig(epochs=800, batch_size=4, learning_rate=0.3, seed=3,
                        l2_penalty=0.0))
        assert accuracy(model, x, y) == 1.0
        assert losses[-1] < losses[0]

    def test_determinism(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(60, 3))
        y = (x[:, 0] + x[:, 1] > 0).astype(int)
        cfg = TrainConfig(epochs=20, batch_size=16, learning_rate=0.1, seed=11)
        m1, l1 = train_model(x, y, [3, 5, 2], cfg)
        m2, l2 = train_model(x, y, [3, 5, 2], cfg)
        assert l1 == l2
        for w1, w2 in zip(m1.weights, m2.weights):
            assert np.array_equal(w1, w2)

    def test_soft_label_pulls_score_to_half(self):
        x = np.array([[0.5, -0.3]])
        y = np.array([[0.5, 0.5]])
        model, _ = train_model(
            x, y, [2, 3, 2],
            TrainConfig(epochs=400, batch_size=1, learning_rate=0.2, seed=0,
                        l2_penalty=0.0))
        z = model.forward(x[0])
        assert z.z1 == pytest.approx(0.5, abs=1e-3)

    def test_loss_decreases(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(200, 4))
        y = (x @ np.array([1.0, -1.0, 0.5, 0.0]) > 0).astype(int)
        _, losses = train_model(
            x, y, [4, 6, 2],
            TrainConfig(epochs=40, batch_size=32, learning_rate=0.1, seed=0))
        tail = int(len(losses) * 0.9)
        assert np.mean(losses[tail:]) < losses[0]

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train_model(np.zeros((0, 2)), np.zeros(0), [2, 2], TrainConfig())

    def test_divergence_reports_epoch(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(50, 2))
        y = (x[:, 0] > 0).astype(int)
        # learning_rate * l2 >> 2 makes the weight-decay step expansive, so
        # the weights blow up to overflow
        with pytest.raises(TrainingDivergedError) as excinfo:
            train_model(x, y, [2, 8, 2],
                        TrainConfig(epochs=80, batch_size=8, learning_rate=10.0,
                                    seed=0, l2_penalty=10.0))
        assert excinfo.value.epoch >= 0

    def test_bad_layer_sizes(self):
        x = np.zeros((4, 3))
        y = np.zeros(4)
        with pytest.raises(ValueError):
            train_model(x, y, [2, 4, 2], TrainConfig())
        with pytest.raises(ValueError):
            train_model(x, y, [3, 4, 3], TrainConfig())


class TestPersistence:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(7)
        m = random_mlp([6, 5, 4, 2], rng, scale=1.7)
        path = tmp_path / "model.json"
        save_model(m, path)
        loaded = load_model(path)
        xs = rng.normal(size=(100, 6))
        assert np.array_equal(m.scores(xs), loaded.scores(xs))

    def test_truncated_file_is_parse_error(self, tmp_path):
        rng = np.random.default_rng(8)
        m = random_mlp([3, 3, 2], rng)
        path = tmp_path / "model.json"
        save_model(m, path)
        text = path.read_text()
        path.write_text(text[:len(text) // 2])
        with pytest.raises(ModelFormatError, match="offset"):
            load_model(path)

    def test_shape_mismatch_names_layer(self, tmp_path):
        rng = np.random.default_rng(9)
        m = random_mlp([3, 4, 2], rng)
        path = tmp_path / "model.json"
        save_model(m, path)
        payload = json.loads(path.read_text())
        payload["layer_sizes"] = [3, 5, 2]
        path.write_text(json.dumps(payload))
        with pytest.raises(ModelFormatError, match="layer 0"):
            load_model(path)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"layer_sizes": [2, 2]}))
        with pytest.raises(ModelFormatError, match="weights"):
            load_model(path)

    def test_schema_hash_preserved(self, tmp_path):
        rng = np.random.default_rng(10)
        m = random_mlp([2, 2], rng)
        m.feature_schema_hash = "abc123"
        path = tmp_path / "model.json"
        save_model(m, path)
        assert load_model(path).feature_schema_hash == "abc123"
