"""Mini-batch training with Adam, a plateau schedule and best-epoch restore."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .architecture import Network, save_model
from .data import Dataset, batch_iterator
from .errors import ConfigError, ShapeError, TrainingError
from .numerics import Adam, Tensor, cross_entropy, make_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    plateau_factor: float = 0.5
    plateau_patience: int = 50
    min_lr: float = 1e-4
    min_delta: float = 1e-4
    seed: int = 0
    shuffle: bool = True
    restore_best: bool = True
    checkpoint_path: str | None = None

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not 0 < self.plateau_factor < 1:
            raise ConfigError("plateau_factor must lie in (0, 1)")
        if self.lr < 0 or self.min_lr < 0:
            raise ConfigError("learning rates must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def __len__(self) -> int:
        return len(self.loss)

    def append(self, loss: float, accuracy: float, lr: float, seconds: float) -> None:
        self.loss.append(loss)
        self.accuracy.append(accuracy)
        self.lr.append(lr)
        self.seconds.append(seconds)

    def rows(self):
        for i in range(len(self)):
            yield {"epoch": i + 1, "loss": self.loss[i], "accuracy": self.accuracy[i],
                   "lr": self.lr[i], "seconds": self.seconds[i]}

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["epoch", "loss", "accuracy", "lr", "seconds"])
            w.writeheader()
            for row in self.rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return path


@dataclass
class PlateauState:
    lr: float
    best: float = math.inf
    wait: int = 0


def reduce_lr_on_plateau(loss: float, state: PlateauState, factor: float = 0.5,
                         patience: int = 50, min_lr: float = 1e-4,
                         min_delta: float = 1e-4) -> float:
    """Update ``state`` with this epoch's loss and return the learning rate to use next.

    The rate is multiplied by ``factor`` (floored at ``min_lr``) once the loss
    has gone ``patience`` consecutive epochs without beating the best by more
    than ``min_delta``; the counter restarts after every reduction.
    """
    if not 0 < factor < 1:
        raise ValueError("factor must lie in (0, 1)")
    if loss < state.best - min_delta:
        state.best = loss
        state.wait = 0
        return state.lr
    state.wait += 1
    if state.wait >= patience:
        state.lr = max(state.lr * factor, min_lr) if state.lr > min_lr else state.lr
        state.wait = 0
    return state.lr


def _check_compatible(net: Network, dataset: Dataset) -> None:
    if dataset.n_channels != net.config.input_channels:
        raise ShapeError(f"dataset has {dataset.n_channels} channels, network expects "
                         f"{net.config.input_channels}", "channels")
    if dataset.n_classes > net.config.num_classes:
        raise ShapeError(f"dataset has {dataset.n_classes} classes, network outputs "
                         f"{net.config.num_classes}", "classes")
    if len(dataset.y_train) == 0:
        raise ShapeError("training split is empty", "batch")


def train_step(net: Network, xb: np.ndarray, yb: np.ndarray, optimizer: Adam
               ) -> tuple[float, int]:
    """Forward, backward and one optimizer update. Returns (loss, correct count)."""
    leaves = {k: Tensor(v, requires_grad=True) for k, v in net.params.items()}
    logits = net.logits(xb, training=True, leaves=leaves)
    loss = cross_entropy(logits, yb)
    value = float(loss.data)
    correct = int(np.sum(np.argmax(logits.data, axis=1) + 1 == yb))
    if not math.isfinite(value):
        return value, correct
    loss.backward()
    grads = {k: t.grad for k, t in leaves.items() if t.grad is not None}
    optimizer.step(net.params, grads)
    return value, correct


def train(net: Network, dataset: Dataset, cfg: TrainConfig = TrainConfig(),
          on_epoch: Callable[[int, dict], None] | None = None
          ) -> tuple[Network, TrainHistory]:
    """Train ``net`` in place and return it with its history.

    Model selection monitors training loss: with ``restore_best`` the
    parameters (and normalization statistics) from the epoch with the lowest
    mean training loss are restored at the end.
    """
    cfg.validate()
    _check_compatible(net, dataset)
    x = dataset.x_train.astype(net.dtype, copy=False)
    y = dataset.y_train
    n = len(y)
    rng = make_rng(cfg.seed)
    optimizer = Adam(lr=cfg.lr)
    plateau = PlateauState(lr=cfg.lr)
    history = TrainHistory()
    best_loss, best = math.inf, None
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        lr_used = optimizer.lr
        total, correct = 0.0, 0
        for b, idx in enumerate(batch_iterator(n, cfg.batch_size, rng if cfg.shuffle else None),
                                start=1):
            value, hits = train_step(net, x[idx], y[idx], optimizer)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}, batch {b}",
                                    epoch=epoch, batch=b)
            total += value * len(idx)
            correct += hits
        epoch_loss = total / n
        history.append(epoch_loss, correct / n, lr_used, time.perf_counter() - start)
        if epoch_loss < best_loss:
            best_loss, history.best_epoch = epoch_loss, epoch
            if cfg.restore_best:
                best = net.copy()
        optimizer.lr = reduce_lr_on_plateau(epoch_loss, plateau, cfg.plateau_factor,
                                            cfg.plateau_patience, cfg.min_lr, cfg.min_delta)
        log.debug("epoch %d loss %.5f acc %.4f lr %.2e", epoch, epoch_loss, correct / n, lr_used)
        if on_epoch is not None:
            on_epoch(epoch, {"loss": epoch_loss, "accuracy": correct / n, "lr": lr_used})
    if cfg.restore_best and best is not None:
        net.params, net.norm_states = best.params, best.norm_states
    if cfg.checkpoint_path:
        save_model(net, cfg.checkpoint_path)
    return net, history


def accuracy_from_proba(proba: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("cannot evaluate on an empty split")
    pred = np.argmax(proba, axis=1) + 1
    return float(np.mean(pred == labels))


def evaluate(model, dataset: Dataset, split: str = "test") -> float:
    """Fraction of series whose argmax class equals the label.

    ``model`` is anything with ``predict_proba`` (a network or an ensemble).
    """
    x, y = dataset.split(split)
    if len(y) == 0:
        raise ValueError(f"{split} split is empty")
    return accuracy_from_proba(model.predict_proba(x), y)
