import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inceptiontime.architecture import NetworkConfig, build_network
from inceptiontime.data import Dataset, SyntheticSpec, generate_synthetic
from inceptiontime.ensemble import (
    DEFAULT_SIZE,
    EnsembleModel,
    ensemble_predict,
    ensemble_size_sweep,
    load_ensemble,
    mean_probabilities,
    save_ensemble,
    train_ensemble,
)
from inceptiontime.errors import CheckpointError, ConfigError, TrainingError
from inceptiontime.numerics import make_rng
from inceptiontime.training import TrainConfig, evaluate


def tiny_config() -> NetworkConfig:
    return NetworkConfig(num_classes=2, depth=1).with_module(
        filter_lengths=(3, 5), filters_per_branch=3, bottleneck_size=3)


def random_ensemble(n, dtype=np.float64, config=None):
    config = config or tiny_config()
    members = [build_network(config, make_rng(s), dtype) for s in range(n)]
    return EnsembleModel(members, config, list(range(n)))


@pytest.fixture(scope="module")
def data():
    return generate_synthetic(SyntheticSpec(length=40, n_train=16, n_test=24, seed=1))


class FixedMember:
    def __init__(self, rows):
        self.rows = np.asarray(rows, dtype=float)
        self.config = tiny_config()

    def forward(self, x):
        return self.rows


class TestPredict:
    def test_two_member_mean(self):
        out = ensemble_predict([FixedMember([[0.8, 0.2]]), FixedMember([[0.6, 0.4]])], None)
        np.testing.assert_allclose(out, [[0.7, 0.3]])

    def test_identical_members(self):
        rows = [[0.25, 0.75], [0.9, 0.1]]
        out = ensemble_predict([FixedMember(rows)] * 4, None)
        np.testing.assert_allclose(out, rows, rtol=1e-15)

    def test_matches_independent_mean(self):
        ens = random_ensemble(3)
        x = np.random.default_rng(0).normal(size=(7, 1, 30))
        member_rows = np.stack([m.forward(x) for m in ens.members])
        oracle = np.array([[math.fsum(member_rows[:, i, c]) / 3 for c in range(2)]
                           for i in range(7)])
        np.testing.assert_allclose(ens.predict_proba(x), oracle, atol=1e-12, rtol=0)

    def test_single_member_is_bit_exact(self):
        ens = random_ensemble(1, np.float32)
        x = np.random.default_rng(1).normal(size=(5, 1, 30)).astype(np.float32)
        assert ens.predict_proba(x).tobytes() == ens.members[0].forward(x).tobytes()

    def test_single_series_input(self):
        ens = random_ensemble(2)
        assert ens.predict_proba(np.zeros((1, 12))).shape == (1, 2)

    def test_empty(self):
        with pytest.raises(ValueError):
            ensemble_predict([], np.zeros((1, 1, 5)))
        with pytest.raises(ValueError):
            mean_probabilities([])

    def test_permutation_invariance(self):
        ens = random_ensemble(4)
        x = np.random.default_rng(2).normal(size=(6, 1, 20))
        a = ensemble_predict(ens.members, x)
        b = ensemble_predict(ens.members[::-1], x)
        np.testing.assert_allclose(a, b, atol=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(1, 6), c=st.integers(2, 6), rows=st.integers(1, 5),
           seed=st.integers(0, 10_000), scale=st.floats(0.1, 10.0))
    def test_rows_sum_to_one_and_argmax_invariance(self, n, c, rows, seed, scale):
        rng = np.random.default_rng(seed)
        probs = [rng.dirichlet(np.ones(c), size=rows) for _ in range(n)]
        mean = mean_probabilities(probs)
        np.testing.assert_allclose(mean.sum(axis=1), 1.0, atol=1e-6)
        rescaled = [p * scale / (p * scale).sum(axis=1, keepdims=True) for p in probs]
        np.testing.assert_array_equal(np.argmax(mean_probabilities(rescaled), axis=1),
                                      np.argmax(mean, axis=1))


class TestModel:
    def test_default_size(self):
        assert DEFAULT_SIZE == 5

    def test_invariants(self):
        cfg = tiny_config()
        a, b = build_network(cfg, make_rng(0)), build_network(cfg, make_rng(1))
        with pytest.raises(ConfigError, match="distinct"):
            EnsembleModel([a, b], cfg, [3, 3])
        other = build_network(NetworkConfig(num_classes=3, depth=1).with_module(
            filter_lengths=(3,), filters_per_branch=2, bottleneck_size=2), make_rng(0))
        with pytest.raises(ConfigError):
            EnsembleModel([a, other], cfg, [0, 1])

    def test_save_load(self, tmp_path):
        ens = random_ensemble(3, np.float32)
        ens.base_seed = 0
        save_ensemble(ens, tmp_path / "ens")
        manifest = json.loads((tmp_path / "ens" / "manifest.json").read_text())
        assert manifest["n"] == 3 and manifest["base_seed"] == 0
        assert manifest["config_hash"] == ens.config.digest()
        back = load_ensemble(tmp_path / "ens")
        x = np.random.default_rng(0).normal(size=(4, 1, 30))
        np.testing.assert_allclose(back.predict_proba(x), ens.predict_proba(x), atol=1e-6)
        assert back.seeds == ens.seeds

    def test_load_errors(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_ensemble(tmp_path / "missing")
        (tmp_path / "empty").mkdir()
        with pytest.raises(CheckpointError, match="manifest"):
            load_ensemble(tmp_path / "empty")


class TestTraining:
    def test_member_seeds(self, data):
        ens, hists = train_ensemble(data, tiny_config(), n=3, base_seed=10,
                                    train_cfg=TrainConfig(epochs=1, batch_size=8))
        assert ens.seeds == [10, 11, 12]
        assert len(hists) == 3
        first = ens.members[0].params["head.weight"]
        assert not np.array_equal(first, ens.members[1].params["head.weight"])

    def test_n1_equals_single_network(self, data):
        cfg = TrainConfig(epochs=2, batch_size=8, seed=4)
        ens, _ = train_ensemble(data, tiny_config(), n=1, base_seed=4, train_cfg=cfg)
        from inceptiontime.training import train

        net, _ = train(build_network(tiny_config(), make_rng(4)), data, cfg)
        assert ens.predict_proba(data.x_test).tobytes() == net.forward(data.x_test).tobytes()

    def test_sequential_determinism(self, data):
        cfg = TrainConfig(epochs=1, batch_size=8)
        a, _ = train_ensemble(data, tiny_config(), n=2, base_seed=3, train_cfg=cfg)
        b, _ = train_ensemble(data, tiny_config(), n=2, base_seed=3, train_cfg=cfg)
        for ma, mb in zip(a.members, b.members):
            for k in ma.params:
                assert ma.params[k].tobytes() == mb.params[k].tobytes()

    def test_parallel_matches_sequential(self, data):
        cfg = TrainConfig(epochs=1, batch_size=8)
        a, _ = train_ensemble(data, tiny_config(), n=2, base_seed=3, train_cfg=cfg)
        b, _ = train_ensemble(data, tiny_config(), n=2, base_seed=3, train_cfg=cfg, workers=2)
        np.testing.assert_allclose(a.predict_proba(data.x_test), b.predict_proba(data.x_test),
                                   atol=1e-6)

    def test_member_index_on_failure(self, data):
        bad = Dataset(data.x_train.copy(), data.y_train, data.x_test, data.y_test)
        bad.x_train[0, 0, 0] = np.inf
        with pytest.raises(TrainingError) as info:
            train_ensemble(bad, tiny_config(), n=2, train_cfg=TrainConfig(epochs=1))
        assert info.value.member == 0
        assert str(info.value).startswith("member 0")

    def test_invalid_size(self, data):
        with pytest.raises(ConfigError):
            train_ensemble(data, tiny_config(), n=0)


class TestSizeSweep:
    def test_size_one_is_single_network(self, data):
        ens = random_ensemble(3, np.float32)
        rows = ensemble_size_sweep(data, [1], model=ens)
        acc = evaluate(ens.members[0], data)
        assert rows == [{"size": 1, "accuracy": acc, "accuracies": [acc]}]

    def test_table_shape(self, data):
        ens = random_ensemble(5, np.float32)
        rows = ensemble_size_sweep(data, [1, 2, 5], model=ens)
        assert [r["size"] for r in rows] == [1, 2, 5]
        assert all(0 <= r["accuracy"] <= 1 for r in rows)
        assert rows[1]["accuracy"] == evaluate(ens.subset(2), data)

    def test_pool_too_small(self, data):
        with pytest.raises(ConfigError, match="exceeds"):
            ensemble_size_sweep(data, [10], model=random_ensemble(5, np.float32))

    def test_trains_largest_pool(self, data):
        rows = ensemble_size_sweep(data, [1, 2], config=tiny_config(),
                                   train_cfg=TrainConfig(epochs=1, batch_size=8))
        assert len(rows) == 2

    def test_median_over_runs(self, data):
        rows = ensemble_size_sweep(data, [1, 2], config=tiny_config(), runs=3,
                                   train_cfg=TrainConfig(epochs=1, batch_size=8))
        for r in rows:
            assert len(r["accuracies"]) == 3
            assert r["accuracy"] == float(np.median(r["accuracies"]))

    def test_runs_with_supplied_pool(self, data):
        with pytest.raises(ConfigError):
            ensemble_size_sweep(data, [1], model=random_ensemble(2), runs=2)

    def test_empty_sizes(self, data):
        with pytest.raises(ConfigError):
            ensemble_size_sweep(data, [], model=random_ensemble(1))
