"""Central finite differences, the independent oracle for every backward rule."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor


def finite_difference_gradient(f: Callable[[np.ndarray], float], x, h: float = 1e-5
                               ) -> np.ndarray:
    """(f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate, in float64."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(f(x))
        flat[i] = orig - h
        down = float(f(x))
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8
                       ) -> float:
    """max |a - n| / max(|a|, |n|, floor); the floor keeps zero gradients from blowing up."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def gradient_check(objective: Callable[[dict], Tensor], inputs: dict[str, np.ndarray],
                   h: float = 1e-5, floor: float = 1e-6) -> dict[str, float]:
    """Compare backprop against central differences for every named input.

    ``objective`` maps a dict of tensors to a scalar tensor and must be a pure
    function of those tensors (create any mutable state inside it). Everything
    runs in float64. Returns the max relative error per input.

    ``floor`` bounds the denominator from below: a gradient that is exactly
    zero (a bias feeding a normalization layer) is compared against central
    differences whose round-off is around 1e-11, not against itself.
    """
    arrays = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    leaves = {k: Tensor(v.copy(), requires_grad=True) for k, v in arrays.items()}
    objective(leaves).backward()
    errors = {}
    for name, base in arrays.items():
        def f(value, name=name):
            local = {k: Tensor(value if k == name else arrays[k]) for k in arrays}
            return float(objective(local).data)

        numeric = finite_difference_gradient(f, base, h)
        analytic = leaves[name].grad
        if analytic is None:
            analytic = np.zeros_like(base)
        errors[name] = max_relative_error(analytic, numeric, floor)
    return errors
