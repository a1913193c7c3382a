"""Random streams and weight initialization."""

from __future__ import annotations

import numpy as np


def make_rng(seed) -> np.random.Generator:
    """Deterministic generator for ``seed``.

    Backed by Philox, a counter-based bit generator whose output depends only
    on the seed, so a given seed yields the same stream on every platform.
    ``seed`` may also be a ``numpy.random.SeedSequence``.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.Philox(seed))


def glorot_bound(fan_in: int, fan_out: int) -> float:
    if fan_in < 1 or fan_out < 1:
        raise ValueError("fan_in and fan_out must be >= 1")
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def glorot_uniform(fan_in: int, fan_out: int, shape, rng: np.random.Generator,
                   dtype=np.float32) -> np.ndarray:
    """I.i.d. samples from U(-L, L) with L = sqrt(6 / (fan_in + fan_out)).

    For a conv kernel of shape (F, M, k) pass fan_in = M*k and fan_out = F*k.
    """
    bound = glorot_bound(fan_in, fan_out)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def conv_fans(shape) -> tuple[int, int]:
    f, m, k = shape
    return m * k, f * k
