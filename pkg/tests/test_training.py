import math

import numpy as np
import pytest

from inceptiontime.architecture import NetworkConfig, build_network, load_model
from inceptiontime.data import Dataset, SyntheticSpec, generate_synthetic
from inceptiontime.errors import ConfigError, ShapeError, TrainingError
from inceptiontime.numerics import cross_entropy, make_rng
from inceptiontime.training import (
    PlateauState,
    TrainConfig,
    evaluate,
    reduce_lr_on_plateau,
    train,
)


def tiny_config(num_classes=2, **kw) -> NetworkConfig:
    return NetworkConfig(num_classes=num_classes, depth=kw.pop("depth", 2)).with_module(
        filter_lengths=(3, 9), filters_per_branch=4, bottleneck_size=4, **kw)


@pytest.fixture(scope="module")
def small_data():
    return generate_synthetic(SyntheticSpec(length=48, n_train=32, n_test=64, seed=5))


class ConstantModel:
    def __init__(self, proba):
        self.proba = np.asarray(proba, dtype=float)

    def predict_proba(self, x):
        return np.tile(self.proba, (len(x), 1))


class TestPlateau:
    def test_decreasing_loss_never_reduces(self):
        state = PlateauState(lr=1e-3)
        for loss in np.linspace(1.0, 0.1, 200):
            lr = reduce_lr_on_plateau(loss, state, 0.5, 5, 1e-4)
        assert lr == 1e-3

    def test_flat_loss_halves_once(self):
        state = PlateauState(lr=1e-3)
        lrs = [reduce_lr_on_plateau(1.0, state, 0.5, 50, 1e-4) for _ in range(51)]
        assert lrs[-1] == 5e-4
        assert lrs.count(5e-4) == 1

    def test_floor(self):
        state = PlateauState(lr=1e-4)
        for _ in range(20):
            lr = reduce_lr_on_plateau(1.0, state, 0.5, 2, 1e-4)
        assert lr == 1e-4

    def test_tiny_improvement_is_not_improvement(self):
        state = PlateauState(lr=1.0)
        reduce_lr_on_plateau(1.0, state, 0.5, 3, 0.0)
        for i in range(3):
            lr = reduce_lr_on_plateau(1.0 - 1e-5 * (i + 1), state, 0.5, 3, 0.0)
        assert lr == 0.5

    def test_invalid_factor(self):
        with pytest.raises(ValueError):
            reduce_lr_on_plateau(1.0, PlateauState(lr=1.0), 1.0, 3, 0.0)


class TestTrainConfig:
    @pytest.mark.parametrize("kw", [{"batch_size": 0}, {"epochs": 0},
                                    {"plateau_factor": 1.0}, {"plateau_factor": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw).validate()


class TestTrain:
    def test_zero_lr_leaves_parameters(self):
        ds = Dataset(np.random.default_rng(0).normal(size=(1, 1, 20)), np.array([1]),
                     np.zeros((1, 1, 20)), np.array([1]))
        net = build_network(tiny_config(), make_rng(0))
        before = {k: v.copy() for k, v in net.params.items()}
        train(net, ds, TrainConfig(epochs=1, lr=0.0))
        for k, v in net.params.items():
            assert v.tobytes() == before[k].tobytes()

    def test_loss_decreases(self, small_data):
        net = build_network(tiny_config(), make_rng(1))
        _, hist = train(net, small_data, TrainConfig(epochs=8, batch_size=16, seed=1))
        assert len(hist) == 8
        assert min(hist.loss[1:]) < hist.loss[0]

    def test_initial_loss_near_log_c(self):
        ds = generate_synthetic(SyntheticSpec(length=60, n_classes=3, n_train=60, n_test=3))
        net = build_network(NetworkConfig(num_classes=3), make_rng(2))
        logits = net.logits(ds.x_train)
        assert abs(float(cross_entropy(logits, ds.y_train).data) - math.log(3)) < 0.15

    def test_same_seed_same_history(self, small_data):
        runs = []
        for _ in range(2):
            net = build_network(tiny_config(), make_rng(7))
            _, hist = train(net, small_data, TrainConfig(epochs=3, batch_size=8, seed=7))
            runs.append(hist.loss)
        assert runs[0] == runs[1]

    def test_best_epoch_restored(self, small_data):
        net = build_network(tiny_config(), make_rng(3))
        _, hist = train(net, small_data, TrainConfig(epochs=6, batch_size=8, lr=0.05, seed=3))
        assert hist.best_epoch == int(np.argmin(hist.loss)) + 1
        assert min(hist.loss) <= hist.loss[-1]

    def test_lr_non_increasing(self, small_data):
        net = build_network(tiny_config(), make_rng(3))
        _, hist = train(net, small_data, TrainConfig(epochs=6, batch_size=16, lr=0.5,
                                                     plateau_patience=1, min_lr=1e-3))
        assert all(a >= b for a, b in zip(hist.lr, hist.lr[1:]))

    def test_nan_aborts_with_location(self, small_data):
        bad = Dataset(small_data.x_train.copy(), small_data.y_train, small_data.x_test,
                      small_data.y_test)
        bad.x_train[20, 0, 3] = np.nan
        net = build_network(tiny_config(), make_rng(0))
        with pytest.raises(TrainingError) as info:
            train(net, bad, TrainConfig(epochs=2, batch_size=8, shuffle=False))
        assert info.value.epoch == 1 and info.value.batch == 3
        assert "epoch 1, batch 3" in str(info.value)

    def test_channel_mismatch_before_training(self, small_data):
        net = build_network(NetworkConfig(num_classes=2, input_channels=2, depth=1), make_rng(0))
        with pytest.raises(ShapeError):
            train(net, small_data, TrainConfig(epochs=1))

    def test_history_csv(self, small_data, tmp_path):
        net = build_network(tiny_config(), make_rng(0))
        _, hist = train(net, small_data, TrainConfig(epochs=2, batch_size=16))
        text = hist.to_csv(tmp_path / "h.csv").read_text().splitlines()
        assert text[0] == "epoch,loss,accuracy,lr,seconds"
        assert len(text) == 3

    def test_checkpoint_written(self, small_data, tmp_path):
        net = build_network(tiny_config(), make_rng(0))
        path = tmp_path / "best.ckpt"
        train(net, small_data, TrainConfig(epochs=1, checkpoint_path=str(path)))
        np.testing.assert_allclose(load_model(path).forward(small_data.x_test[:4]),
                                   net.forward(small_data.x_test[:4]), atol=1e-6)


class TestEvaluate:
    def test_all_correct(self):
        ds = Dataset(np.zeros((2, 1, 3)), np.array([1, 2]), np.zeros((3, 1, 3)),
                     np.array([2, 2, 2]))
        assert evaluate(ConstantModel([0.1, 0.9]), ds) == 1.0

    def test_constant_predictor_frequency(self):
        y = np.random.default_rng(0).integers(1, 3, size=101)
        ds = Dataset(np.zeros((2, 1, 3)), np.array([1, 2]), np.zeros((101, 1, 3)), y)
        assert evaluate(ConstantModel([0.7, 0.3]), ds) == pytest.approx(np.mean(y == 1))

    def test_ties_go_to_lowest_class(self):
        ds = Dataset(np.zeros((2, 1, 3)), np.array([1, 2]), np.zeros((4, 1, 3)),
                     np.array([1, 1, 1, 1]))
        assert evaluate(ConstantModel([0.5, 0.5]), ds) == 1.0

    def test_empty_split(self):
        ds = Dataset(np.zeros((2, 1, 3)), np.array([1, 2]), np.zeros((0, 1, 3)),
                     np.zeros(0, dtype=int))
        with pytest.raises(ValueError):
            evaluate(ConstantModel([0.5, 0.5]), ds)

    def test_range_for_trained_net(self, small_data):
        net = build_network(tiny_config(), make_rng(0))
        train(net, small_data, TrainConfig(epochs=2, batch_size=16))
        for split in ("train", "test"):
            assert 0.0 <= evaluate(net, small_data, split) <= 1.0
