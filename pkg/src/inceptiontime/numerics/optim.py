"""Adam with bias-corrected moment estimates."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ShapeError


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, param: np.ndarray, **hyper) -> "AdamState":
        return cls(np.zeros_like(param), np.zeros_like(param), **hyper)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState
              ) -> tuple[np.ndarray, AdamState]:
    """One Adam update. Pure: inputs are not modified."""
    if param.shape != grad.shape:
        raise ShapeError(f"gradient shape {grad.shape} != parameter shape {param.shape}",
                         "shape")
    if state.m.shape != param.shape or state.v.shape != param.shape:
        raise ShapeError("optimizer state does not match parameter shape", "shape")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m = b1 * state.m + (1 - b1) * grad
    v = b2 * state.v + (1 - b2) * (grad * grad)
    m_hat = m / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    update = (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.dtype, copy=False)
    new_param = param - update
    return new_param, replace(state, m=m.astype(param.dtype, copy=False),
                              v=v.astype(param.dtype, copy=False), step=t)


class Adam:
    """Keeps one :class:`AdamState` per named parameter.

    The learning rate lives here so a schedule can change it between steps;
    it is copied into each state before the update.
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.states: dict[str, AdamState] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            st = self.states.get(name)
            if st is None:
                st = AdamState.zeros_like(p, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
            st = replace(st, lr=self.lr)
            params[name], self.states[name] = adam_step(p, g, st)
