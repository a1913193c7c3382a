"""Datasets: UCR text files, z-normalization and the synthetic pattern generator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataFormatError
from .numerics import make_rng


@dataclass(frozen=True)
class Dataset:
    """Train/test split of ``(N, M, T)`` series with 1-based labels.

    ``label_map`` maps each contiguous label back to the label as written in
    the source file (string form), when the data came from disk.
    """

    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    name: str = "dataset"
    label_map: dict[int, str] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for split in ("train", "test"):
            x, y = getattr(self, f"x_{split}"), getattr(self, f"y_{split}")
            if x.ndim != 3:
                raise DataFormatError(f"{split} series must be (N, M, T), got {x.shape}")
            if len(y) != len(x):
                raise DataFormatError(f"{split}: {len(x)} series but {len(y)} labels")
        if self.x_train.shape[1:] != self.x_test.shape[1:]:
            raise DataFormatError(f"train/test shapes differ: {self.x_train.shape[1:]} vs "
                                  f"{self.x_test.shape[1:]}")
        labels = np.concatenate([self.y_train, self.y_test])
        if labels.size and labels.min() < 1:
            raise DataFormatError("labels must be >= 1")

    @property
    def n_classes(self) -> int:
        return int(max(self.y_train.max(initial=0), self.y_test.max(initial=0)))

    @property
    def n_channels(self) -> int:
        return self.x_train.shape[1]

    @property
    def length(self) -> int:
        return self.x_train.shape[2]

    def split(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        if which not in ("train", "test"):
            raise ValueError(f"split must be 'train' or 'test', got {which!r}")
        return getattr(self, f"x_{which}"), getattr(self, f"y_{which}")


def z_normalize(series: np.ndarray) -> np.ndarray:
    """Per-channel (x - mean) / std over the last axis, population std.

    Works on ``(T,)``, ``(M, T)`` or ``(N, M, T)``. Constant channels map to zeros.
    """
    x = np.asarray(series, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    sd = np.sqrt(np.mean(centered * centered, axis=-1, keepdims=True))
    constant = sd <= 1e-12 * np.maximum(1.0, np.abs(mu))
    out = np.divide(centered, sd, out=np.zeros_like(centered), where=~constant)
    return out


# --------------------------------------------------------------------------- UCR files


def _detect_delimiter(line: str) -> str | None:
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    return None  # whitespace


def _read_ucr_file(path: Path) -> tuple[list[str], np.ndarray]:
    if not path.exists():
        raise DataFormatError(f"file not found: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path} is empty")
    delim = _detect_delimiter(lines[0])
    labels: list[str] = []
    rows: list[list[float]] = []
    width = None
    for r, line in enumerate(lines, start=1):
        fields = line.strip().split(delim) if delim else line.split()
        fields = [f.strip() for f in fields]
        if len(fields) < 2:
            raise DataFormatError(f"{path}: needs a label and at least one value", row=r)
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise DataFormatError(f"{path}: ragged row with {len(fields) - 1} values, "
                                  f"expected {width - 1}", row=r)
        values = []
        for c, tok in enumerate(fields[1:], start=2):
            try:
                values.append(float(tok))
            except ValueError:
                raise DataFormatError(f"{path}: non-numeric value {tok!r}", row=r,
                                      column=c) from None
        labels.append(_canonical_label(fields[0], path, r))
        rows.append(values)
    x = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        bad = int(np.argwhere(~np.isfinite(x))[0, 0]) + 1
        raise DataFormatError(f"{path}: missing or non-finite values are not supported",
                              row=bad)
    return labels, x


def _canonical_label(tok: str, path: Path, row: int) -> str:
    if not tok:
        raise DataFormatError(f"{path}: empty label", row=row, column=1)
    try:
        value = float(tok)
    except ValueError:
        return tok
    if math.isfinite(value) and value == int(value):
        return str(int(value))
    return tok


def _label_sort_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def load_ucr(train_path, test_path, normalize: bool = True, name: str | None = None
             ) -> Dataset:
    """Read a UCR-format train/test pair (label first, tab/comma/space separated).

    Labels are remapped to ``1..C`` in sorted order of the train labels; the
    mapping is kept in ``Dataset.label_map``.
    """
    train_path, test_path = Path(train_path), Path(test_path)
    ytr_raw, xtr = _read_ucr_file(train_path)
    yte_raw, xte = _read_ucr_file(test_path)
    if xtr.shape[1] != xte.shape[1]:
        raise DataFormatError(f"train series have length {xtr.shape[1]}, test series "
                              f"{xte.shape[1]}")
    classes = sorted(set(ytr_raw), key=_label_sort_key)
    index = {lab: i + 1 for i, lab in enumerate(classes)}
    for r, lab in enumerate(yte_raw, start=1):
        if lab not in index:
            raise DataFormatError(f"{test_path}: label {lab!r} does not occur in the "
                                  f"training split", row=r, column=1)
    ytr = np.array([index[v] for v in ytr_raw], dtype=np.int64)
    yte = np.array([index[v] for v in yte_raw], dtype=np.int64)
    xtr, xte = xtr[:, None, :], xte[:, None, :]
    if normalize:
        xtr, xte = z_normalize(xtr), z_normalize(xte)
    return Dataset(xtr, ytr, xte, yte, name=name or train_path.stem.replace("_TRAIN", ""),
                   label_map={i: lab for lab, i in index.items()},
                   provenance={"train": str(train_path), "test": str(test_path),
                               "normalized": normalize})


def read_ucr_split(path, label_map: dict[int, str] | None = None, normalize: bool = True
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Read one UCR file as ``(x, y)`` with ``x`` shaped ``(N, 1, T)``.

    Labels are translated through ``label_map`` (class index -> file label);
    without one they must already be integers.
    """
    path = Path(path)
    raw, x = _read_ucr_file(path)
    if label_map is not None:
        index = {str(lab): int(i) for i, lab in label_map.items()}
    y = np.empty(len(raw), dtype=np.int64)
    for r, lab in enumerate(raw, start=1):
        if label_map is None:
            try:
                y[r - 1] = int(lab)
            except ValueError:
                raise DataFormatError(f"{path}: label {lab!r} is not an integer", row=r,
                                      column=1) from None
        elif lab in index:
            y[r - 1] = index[lab]
        else:
            raise DataFormatError(f"{path}: label {lab!r} is unknown to the model", row=r,
                                  column=1)
    x = x[:, None, :]
    return (z_normalize(x) if normalize else x), y


def _write_split(path: Path, x: np.ndarray, y: np.ndarray, label_map: dict[int, str],
                 delimiter: str) -> None:
    if x.shape[1] != 1:
        raise DataFormatError("the UCR text format holds univariate series only")
    with path.open("w") as fh:
        for series, lab in zip(x[:, 0, :], y):
            label = label_map.get(int(lab), str(int(lab)))
            fh.write(delimiter.join([label] + [repr(float(v)) for v in series]))
            fh.write("\n")


def save_ucr(dataset: Dataset, train_path, test_path, delimiter: str = "\t") -> None:
    """Write both splits in UCR text format; values are written with full precision."""
    _write_split(Path(train_path), dataset.x_train, dataset.y_train, dataset.label_map,
                 delimiter)
    _write_split(Path(test_path), dataset.x_test, dataset.y_test, dataset.label_map,
                 delimiter)


# --------------------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SyntheticSpec:
    """Uniform noise with one class-specific plateau per series."""

    length: int
    n_classes: int = 2
    n_train: int = 128
    n_test: int = 1024
    noise_low: float = 0.0
    noise_high: float = 0.1
    amplitude: float = 1.0
    pattern_fraction: float = 0.10
    starts: tuple[int, ...] | None = None
    seed: int = 0

    @property
    def pattern_length(self) -> int:
        return int(math.floor(self.pattern_fraction * self.length + 1e-9))

    def class_starts(self) -> tuple[int, ...]:
        if self.starts is not None:
            return tuple(int(s) for s in self.starts)
        span = self.length - self.pattern_length
        return tuple(min((c * self.length) // self.n_classes, span)
                     for c in range(self.n_classes))

    def windows(self) -> list[tuple[int, int]]:
        """Half-open ``[start, stop)`` pattern window per class (index 0 is class 1)."""
        length = self.pattern_length
        return [(s, s + length) for s in self.class_starts()]

    def validate(self) -> None:
        if self.length < 1 or self.n_classes < 1:
            raise ConfigError("length and n_classes must be positive")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("n_train and n_test must be positive")
        if self.pattern_length < 1:
            raise ConfigError(f"pattern length is 0 for series length {self.length} "
                              f"(need length >= {math.ceil(1 / self.pattern_fraction)})")
        if not self.noise_low <= self.noise_high:
            raise ConfigError("noise_low must not exceed noise_high")
        wins = self.windows()
        if len(wins) != self.n_classes:
            raise ConfigError(f"{len(wins)} start positions given for {self.n_classes} classes")
        for c, (a, b) in enumerate(wins, start=1):
            if a < 0 or b > self.length:
                raise ConfigError(f"class {c} window [{a}, {b}) falls outside [0, {self.length})")
        ordered = sorted(wins)
        for (a0, b0), (a1, _) in zip(ordered, ordered[1:]):
            if a1 < b0:
                raise ConfigError(f"class windows overlap: [{a0}, {b0}) and [{a1}, ...)")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["starts"] = list(self.starts) if self.starts is not None else None
        return d


def _synthetic_split(spec: SyntheticSpec, n: int, rng: np.random.Generator
                     ) -> tuple[np.ndarray, np.ndarray]:
    labels = np.tile(np.arange(1, spec.n_classes + 1), -(-n // spec.n_classes))[:n]
    labels = rng.permutation(labels)
    x = rng.uniform(spec.noise_low, spec.noise_high, size=(n, spec.length))
    for c, (a, b) in enumerate(spec.windows(), start=1):
        x[labels == c, a:b] = spec.amplitude
    return x[:, None, :], labels.astype(np.int64)


def generate_raw(spec: SyntheticSpec) -> Dataset:
    """Generator output before z-normalization."""
    spec.validate()
    train_seq, test_seq = np.random.SeedSequence(spec.seed).spawn(2)
    xtr, ytr = _synthetic_split(spec, spec.n_train, make_rng(train_seq))
    xte, yte = _synthetic_split(spec, spec.n_test, make_rng(test_seq))
    return Dataset(xtr, ytr, xte, yte, name=f"synthetic_T{spec.length}_C{spec.n_classes}",
                   label_map={c: str(c) for c in range(1, spec.n_classes + 1)},
                   provenance={"generator": spec.to_dict(), "normalized": False})


def generate_synthetic(spec: SyntheticSpec, normalize: bool = True) -> Dataset:
    raw = generate_raw(spec)
    if not normalize:
        return raw
    return Dataset(z_normalize(raw.x_train), raw.y_train, z_normalize(raw.x_test), raw.y_test,
                   name=raw.name, label_map=raw.label_map,
                   provenance={**raw.provenance, "normalized": True})


def locate_pattern_class(series: np.ndarray, spec: SyntheticSpec) -> int:
    """Brute-force oracle: the class whose window is entirely at the pattern amplitude."""
    s = np.asarray(series).reshape(-1)
    hits = [c for c, (a, b) in enumerate(spec.windows(), start=1)
            if np.all(s[a:b] == spec.amplitude)]
    return hits[0] if len(hits) == 1 else 0


# --------------------------------------------------------------------------- batching


def batch_iterator(n: int, batch_size: int, rng: np.random.Generator | None = None
                   ) -> Iterator[np.ndarray]:
    """Index batches covering ``range(n)`` once; shuffled when ``rng`` is given."""
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def as_series_batch(x: Sequence | np.ndarray) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, None, :]
    elif arr.ndim == 2:
        arr = arr[:, None, :]
    return arr
