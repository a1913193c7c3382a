"""Equal-weight ensembles of identically configured, differently seeded networks."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .architecture import Network, NetworkConfig, build_network, load_model, save_model
from .data import Dataset
from .errors import CheckpointError, ConfigError, InceptionTimeError, TrainingError
from .numerics import make_rng
from .training import TrainConfig, TrainHistory, accuracy_from_proba, train

DEFAULT_SIZE = 5
MANIFEST = "manifest.json"


@dataclass
class EnsembleModel:
    members: list[Network]
    config: NetworkConfig
    seeds: list[int]
    base_seed: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.members) != len(self.seeds):
            raise ConfigError("one seed per member is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"member seeds must be distinct, got {self.seeds}")
        for j, m in enumerate(self.members):
            if m.config != self.config:
                raise ConfigError(f"member {j} has a different network config")

    def __len__(self) -> int:
        return len(self.members)

    def subset(self, size: int) -> "EnsembleModel":
        """The first ``size`` members, sharing their networks with this ensemble."""
        if not 1 <= size <= len(self):
            raise ConfigError(f"cannot take {size} members from an ensemble of {len(self)}")
        return EnsembleModel(self.members[:size], self.config, self.seeds[:size], self.base_seed,
                             dict(self.metadata))

    def predict_proba(self, x) -> np.ndarray:
        return ensemble_predict(self, x)

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1) + 1

    def save(self, directory) -> Path:
        return save_ensemble(self, directory)


def mean_probabilities(member_probs: Sequence[np.ndarray]) -> np.ndarray:
    """Arithmetic mean accumulated in member order, so results are reproducible bit for bit."""
    if len(member_probs) == 0:
        raise ValueError("ensemble has no members")
    total = np.array(member_probs[0], dtype=np.result_type(member_probs[0], np.float32),
                     copy=True)
    for p in member_probs[1:]:
        total += p
    if len(member_probs) > 1:
        total /= len(member_probs)
    return total


def ensemble_predict(model: EnsembleModel | Sequence[Network], x) -> np.ndarray:
    """Mean of member class-probability outputs.

    ``x`` may be one series ``(M, T)`` (a ``(1, C)`` row comes back) or a
    batch ``(N, M, T)``.
    """
    members = model.members if isinstance(model, EnsembleModel) else list(model)
    if not members:
        raise ValueError("ensemble has no members")
    return mean_probabilities([m.forward(x) for m in members])


def member_seed(base_seed: int, index: int) -> int:
    return base_seed + index


def _train_member(args) -> tuple[Network, TrainHistory]:
    dataset, config, seed, train_cfg, dtype = args
    net = build_network(config, make_rng(seed), dtype)
    return train(net, dataset, replace(train_cfg, seed=seed, checkpoint_path=None))


def train_ensemble(dataset: Dataset, config: NetworkConfig, n: int = DEFAULT_SIZE,
                   base_seed: int = 0, train_cfg: TrainConfig = TrainConfig(),
                   workers: int = 1, dtype=np.float32
                   ) -> tuple[EnsembleModel, list[TrainHistory]]:
    """Train ``n`` members; member ``j`` is initialized and shuffled with seed ``base_seed + j``.

    With ``workers > 1`` members train in separate processes; results are
    collected in member order either way.
    """
    if n < 1:
        raise ConfigError(f"ensemble size must be >= 1, got {n}")
    config.validate()
    seeds = [member_seed(base_seed, j) for j in range(n)]
    jobs = [(dataset, config, s, train_cfg, dtype) for s in seeds]
    results: list[tuple[Network, TrainHistory]] = []
    if workers <= 1 or n == 1:
        for j, job in enumerate(jobs):
            results.append(_run_member(j, lambda: _train_member(job)))
    else:
        with ProcessPoolExecutor(max_workers=min(workers, n)) as pool:
            futures = [pool.submit(_train_member, job) for job in jobs]
            for j, fut in enumerate(futures):
                results.append(_run_member(j, fut.result))
    members = [r[0] for r in results]
    histories = [r[1] for r in results]
    return EnsembleModel(members, config, seeds, base_seed), histories


def _run_member(index: int, fn):
    try:
        return fn()
    except TrainingError as exc:
        raise TrainingError(f"member {index}: {exc}", epoch=exc.epoch, batch=exc.batch,
                            member=index) from exc
    except InceptionTimeError as exc:
        exc.member = index
        raise


def ensemble_size_sweep(dataset: Dataset, sizes: Sequence[int],
                        model: EnsembleModel | None = None, config: NetworkConfig | None = None,
                        base_seed: int = 0, train_cfg: TrainConfig = TrainConfig(),
                        workers: int = 1, runs: int = 1) -> list[dict]:
    """Test accuracy of nested sub-ensembles, median over ``runs`` pools.

    The size-``x`` ensemble is the first ``x`` members of one pool, so every
    member is trained (and run on the test set) once. Pass ``model`` to reuse
    an existing pool or ``config`` to train pools of size ``max(sizes)``; run
    ``r`` uses seeds starting at ``base_seed + r * max(sizes)``.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ConfigError("sizes must be non-empty")
    if min(sizes) < 1:
        raise ConfigError(f"ensemble sizes must be >= 1, got {sizes}")
    if runs < 1:
        raise ConfigError(f"runs must be >= 1, got {runs}")
    needed = max(sizes)
    if model is not None:
        if runs != 1:
            raise ConfigError("a supplied ensemble gives exactly one run")
        pools = [model]
    elif config is None:
        raise ConfigError("either an ensemble or a network config is required")
    else:
        pools = [train_ensemble(dataset, config, needed, base_seed + r * needed, train_cfg,
                                workers)[0] for r in range(runs)]
    if needed > len(pools[0]):
        raise ConfigError(f"requested ensemble size {needed} exceeds the pool of "
                          f"{len(pools[0])} members")
    x, y = dataset.split("test")
    per_run = []
    for pool in pools:
        probs = [m.forward(x) for m in pool.members[:needed]]
        per_run.append([accuracy_from_proba(mean_probabilities(probs[:s]), y) for s in sizes])
    return [{"size": s, "accuracy": float(np.median([run[i] for run in per_run])),
             "accuracies": [run[i] for run in per_run]} for i, s in enumerate(sizes)]


def save_ensemble(model: EnsembleModel, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for j, m in enumerate(model.members):
        name = f"member_{j:03d}.ckpt"
        save_model(m, directory / name)
        files.append(name)
    manifest = {"n": len(model), "base_seed": model.base_seed, "seeds": model.seeds,
                "config_hash": model.config.digest(), "config": model.config.to_dict(),
                "members": files, "metadata": model.metadata}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_ensemble(path) -> EnsembleModel:
    """Load an ensemble directory, or wrap a single checkpoint file as a one-member ensemble."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"model path not found: {path}")
    if path.is_file():
        net = load_model(path)
        return EnsembleModel([net], net.config, [0], 0)
    manifest_path = path / MANIFEST
    if not manifest_path.exists():
        raise CheckpointError(f"ensemble manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt ensemble manifest {manifest_path}: {exc}") from exc
    members = [load_model(path / f) for f in manifest["members"]]
    if len(members) != manifest["n"]:
        raise CheckpointError(f"manifest lists {manifest['n']} members, found {len(members)}")
    config = members[0].config
    if config.digest() != manifest["config_hash"]:
        raise CheckpointError("member config does not match the manifest config hash")
    try:
        return EnsembleModel(members, config, list(manifest["seeds"]), manifest["base_seed"],
                             manifest.get("metadata", {}))
    except ConfigError as exc:
        raise CheckpointError(str(exc)) from exc
