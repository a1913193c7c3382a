"""Differentiable layer kernels for 1D convolutional networks.

Signals are laid out channels-first: ``(N, M, T)`` for a batch, ``(M, T)`` for
a single series (the ops that accept one promote it internally and return
the matching rank). Every op returns a :class:`Tensor` whose backward rule
produces exact gradients for each input that requires them.

Padding conventions
-------------------
``conv1d`` with ``padding="same"`` zero-pads ``(k - 1) // 2`` steps on the
left and the remaining ``k - 1 - (k - 1) // 2`` on the right, so even kernel
lengths lean one step to the right. ``maxpool1d`` pads ``window // 2`` on the
left with ``-inf``; padded steps can therefore never be selected and each
window is effectively clipped to the valid range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, as_tensor, make_node

# Upper bound on im2col buffer size (elements) before the batch is chunked.
_IM2COL_BUDGET = 1 << 22


def same_padding(k: int) -> tuple[int, int]:
    left = (k - 1) // 2
    return left, k - 1 - left


def _im2col_rows(xp: np.ndarray, k: int, stride: int, t_out: int) -> np.ndarray:
    """Patch matrix ``(n*t_out, m*k)``; column order matches ``w.reshape(F, m*k)``."""
    n, m, _ = xp.shape
    win = sliding_window_view(xp, k, axis=2)
    if stride != 1:
        win = win[:, :, ::stride]
    win = win[:, :, :t_out]
    return win.transpose(0, 2, 1, 3).reshape(n * t_out, m * k)


def _im2col_batched(xp: np.ndarray, k: int, stride: int, t_out: int) -> np.ndarray:
    """Patch tensor ``(n, m*k, t_out)``, the layout the weight gradient wants."""
    n, m, _ = xp.shape
    win = sliding_window_view(xp, k, axis=2)
    if stride != 1:
        win = win[:, :, ::stride]
    win = win[:, :, :t_out]
    return win.transpose(0, 1, 3, 2).reshape(n, m * k, t_out)


def _chunks(n: int, per_item: int):
    step = max(1, _IM2COL_BUDGET // max(per_item, 1))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def _correlate(xp: np.ndarray, w2t: np.ndarray, k: int, stride: int, t_out: int,
               out: np.ndarray) -> None:
    """``out[n, f, t] = sum_c cols[n, t, c] * w2t[c, f]``, chunked over the batch."""
    n, m, _ = xp.shape
    f = w2t.shape[1]
    for s in _chunks(n, m * k * t_out):
        rows = _im2col_rows(xp[s], k, stride, t_out) @ w2t
        out[s] = rows.reshape(-1, t_out, f).transpose(0, 2, 1)


def conv1d(x, weight, bias=None, stride: int = 1, padding: str = "same") -> Tensor:
    """Cross-correlate ``x`` with ``weight`` of shape ``(F, M, k)``.

    No kernel flip: ``y[f, t] = b[f] + sum_{m, j} w[f, m, j] * xpad[m, t*stride + j]``.
    The input gradient at stride 1 is itself a correlation of the padded output
    gradient with the flipped, channel-transposed kernel.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    bias = as_tensor(bias) if bias is not None else None
    xd = x.data
    single = xd.ndim == 2
    if single:
        xd = xd[None]
    if xd.ndim != 3:
        raise ShapeError(f"conv1d input must be (M, T) or (N, M, T), got {x.shape}", "rank")
    w = weight.data
    if w.ndim != 3:
        raise ShapeError(f"conv1d weight must be (F, M, k), got {w.shape}", "rank")
    n, m, t = xd.shape
    f, wm, k = w.shape
    if wm != m:
        raise ShapeError(f"weight expects {wm} input channels, input has {m}", "channels")
    if k < 1:
        raise ShapeError("kernel length must be >= 1", "kernel")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if bias is not None and bias.data.shape != (f,):
        raise ShapeError(f"bias must have shape ({f},), got {bias.shape}", "filters")
    if padding == "same":
        left, right = same_padding(k)
    elif padding == "valid":
        if k > t:
            raise ShapeError(f"kernel length {k} exceeds series length {t} with valid padding",
                             "length")
        left = right = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")

    dtype = np.result_type(xd, w)
    xp = np.pad(xd, ((0, 0), (0, 0), (left, right))) if (left or right) else xd
    t_out = (t + left + right - k) // stride + 1
    w2 = w.reshape(f, m * k)
    pointwise = k == 1 and stride == 1
    if pointwise:
        out = np.matmul(w2, xd)
    else:
        out = np.empty((n, f, t_out), dtype=dtype)
        _correlate(xp, w2.T, k, stride, t_out, out)
    if bias is not None:
        out += bias.data[:, None]

    def backward(g: np.ndarray) -> None:
        if single:
            g = g[None]
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=(0, 2)))
        need_w, need_x = weight.requires_grad, x.requires_grad
        if pointwise:
            if need_w:
                weight.accumulate(np.matmul(g, xd.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape))
            if need_x:
                dx = np.matmul(w2.T, g)
                x.accumulate(dx[0] if single else dx)
            return
        if need_w:
            dw2 = np.zeros_like(w2)
            for s in _chunks(n, m * k * t_out):
                cols = _im2col_batched(xp[s], k, stride, t_out)
                dw2 += np.matmul(g[s], cols.transpose(0, 2, 1)).sum(axis=0)
            weight.accumulate(dw2.reshape(w.shape))
        if not need_x:
            return
        if stride == 1:
            gp = np.pad(g, ((0, 0), (0, 0), (right, left)))
            flipped = w[:, :, ::-1].transpose(1, 0, 2).reshape(m, f * k)
            dx = np.empty((n, m, t), dtype=dtype)
            _correlate(gp, flipped.T, k, 1, t, dx)
        else:
            dxp = np.zeros_like(xp)
            span = stride * (t_out - 1) + 1
            for s in _chunks(n, m * k * t_out):
                dcols = np.matmul(w2.T, g[s]).reshape(-1, m, k, t_out)
                target = dxp[s]
                for j in range(k):
                    target[:, :, j:j + span:stride] += dcols[:, :, j, :]
            dx = dxp[:, :, left:left + t]
        x.accumulate(dx[0] if single else dx)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out[0] if single else out, parents, backward, "conv1d")


def maxpool1d(x, window: int = 3, stride: int = 1, padding: str = "same") -> Tensor:
    """Sliding maximum; the gradient goes to the leftmost maximal position."""
    if window < 1:
        raise ValueError(f"maxpool window must be >= 1, got {window}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    x = as_tensor(x)
    xd = x.data
    single = xd.ndim == 2
    if single:
        xd = xd[None]
    if xd.ndim != 3:
        raise ShapeError(f"maxpool1d input must be (M, T) or (N, M, T), got {x.shape}", "rank")
    t = xd.shape[2]
    if padding == "same":
        left = window // 2
        right = window - 1 - left
    elif padding == "valid":
        if window > t:
            raise ShapeError(f"window {window} exceeds series length {t}", "length")
        left = right = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")
    xp = np.pad(xd, ((0, 0), (0, 0), (left, right)), constant_values=-np.inf)
    t_out = (t + left + right - window) // stride + 1
    span = stride * (t_out - 1) + 1
    out = xp[:, :, 0:span:stride].copy()
    arg = np.zeros(out.shape, dtype=np.int8 if window < 128 else np.int32)
    for j in range(1, window):
        cand = xp[:, :, j:j + span:stride]
        better = cand > out  # strict: ties keep the earlier position
        np.maximum(out, cand, out=out)
        np.putmask(arg, better, j)

    def backward(g: np.ndarray) -> None:
        if single:
            g = g[None]
        dxp = np.zeros(xp.shape, dtype=xd.dtype)
        for j in range(window):
            dxp[:, :, j:j + span:stride] += g * (arg == j)
        dx = dxp[:, :, left:left + t]
        x.accumulate(dx[0] if single else dx)

    return make_node(out[0] if single else out, (x,), backward, "maxpool1d")


@dataclass
class BatchNormState:
    """Running statistics for one normalization layer (not learnable)."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-3

    @classmethod
    def create(cls, channels: int, dtype=np.float32, momentum: float = 0.9,
               eps: float = 1e-3) -> "BatchNormState":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype),
                   momentum, eps)


def batch_norm(x, gamma, beta, state: BatchNormState, training: bool) -> Tensor:
    """Per-channel normalization over batch and time, then scale and shift.

    In training mode with at least two series the batch statistics are used
    and the running statistics are updated in ``state``; otherwise the
    running statistics are used and ``state`` is left untouched.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    xd = x.data
    if xd.ndim != 3:
        raise ShapeError(f"batch_norm input must be (N, C, T), got {x.shape}", "rank")
    n, c, t = xd.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"scale/shift must have shape ({c},)", "channels")
    eps = state.eps
    g_ = gamma.data[:, None]
    use_batch = training and n >= 2
    if use_batch:
        mean = xd.mean(axis=(0, 2))
        centered = xd - mean[:, None]
        var = np.mean(centered * centered, axis=(0, 2))
        inv = (1.0 / np.sqrt(var + eps)).astype(xd.dtype)
        xhat = centered * inv[:, None]
        mom = state.momentum
        state.running_mean = (mom * state.running_mean + (1 - mom) * mean).astype(
            state.running_mean.dtype)
        state.running_var = (mom * state.running_var + (1 - mom) * var).astype(
            state.running_var.dtype)
    else:
        inv = (1.0 / np.sqrt(state.running_var + eps)).astype(xd.dtype)
        xhat = (xd - state.running_mean[:, None]) * inv[:, None]
    out = g_ * xhat + beta.data[:, None]

    def backward(g: np.ndarray) -> None:
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=(0, 2)))
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=(0, 2)))
        if not x.requires_grad:
            return
        dxhat = g * g_
        if use_batch:
            count = n * t
            s1 = dxhat.sum(axis=(0, 2))[:, None]
            s2 = (dxhat * xhat).sum(axis=(0, 2))[:, None]
            dx = (inv[:, None] / count) * (count * dxhat - s1 - xhat * s2)
        else:
            dx = dxhat * inv[:, None]
        x.accumulate(dx)

    return make_node(out, (x, gamma, beta), backward, "batch_norm")


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = np.maximum(x.data, 0)
    mask = out > 0

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * mask)

    return make_node(out, (x,), backward, "relu")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add operands differ: {a.shape} vs {b.shape}", "shape")

    def backward(g: np.ndarray) -> None:
        a.accumulate(g)
        b.accumulate(g)

    return make_node(a.data + b.data, (a, b), backward, "add")


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + sizes)

    def backward(g: np.ndarray) -> None:
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t.accumulate(g[tuple(index)])

    return make_node(out, tuple(tensors), backward, "concat")


def global_average_pool(x) -> Tensor:
    """Mean over the time axis: ``(N, M, T) -> (N, M)`` or ``(M, T) -> (M,)``."""
    x = as_tensor(x)
    if x.data.ndim not in (2, 3):
        raise ShapeError(f"expected (M, T) or (N, M, T), got {x.shape}", "rank")
    t = x.data.shape[-1]
    out = x.data.mean(axis=-1)

    def backward(g: np.ndarray) -> None:
        x.accumulate(np.broadcast_to((g / t)[..., None], x.data.shape))

    return make_node(out, (x,), backward, "global_average_pool")


def dense(x, weight, bias=None) -> Tensor:
    """Affine map ``x @ W.T + b`` with ``W`` of shape ``(C, M)``."""
    x, weight = as_tensor(x), as_tensor(weight)
    bias = as_tensor(bias) if bias is not None else None
    xd, w = x.data, weight.data
    if w.ndim != 2:
        raise ShapeError(f"dense weight must be (C, M), got {w.shape}", "rank")
    if xd.ndim not in (1, 2) or xd.shape[-1] != w.shape[1]:
        raise ShapeError(f"dense expects {w.shape[1]} input features, got shape {xd.shape}",
                         "features")
    if bias is not None and bias.data.shape != (w.shape[0],):
        raise ShapeError(f"bias must have shape ({w.shape[0]},)", "classes")
    out = xd @ w.T
    if bias is not None:
        out = out + bias.data

    def backward(g: np.ndarray) -> None:
        g2 = g[None] if g.ndim == 1 else g
        x2 = xd[None] if xd.ndim == 1 else xd
        if weight.requires_grad:
            weight.accumulate(g2.T @ x2)
        if bias is not None and bias.requires_grad:
            bias.accumulate(g2.sum(axis=0))
        if x.requires_grad:
            x.accumulate(g @ w)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, backward, "dense")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _zero_based(labels, n_classes: int) -> np.ndarray:
    lab = np.asarray(labels)
    if not np.issubdtype(lab.dtype, np.integer):
        if not np.all(np.equal(np.mod(lab, 1), 0)):
            raise ValueError("labels must be integers")
        lab = lab.astype(np.int64)
    if lab.size and (lab.min() < 1 or lab.max() > n_classes):
        raise ValueError(f"label out of range [1, {n_classes}]: {lab.min()}..{lab.max()}")
    return lab - 1


def softmax_cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient with respect to ``logits``.

    ``logits`` is ``(C,)`` with a scalar label or ``(N, C)`` with ``N`` labels;
    labels are 1-based.
    """
    z = np.asarray(logits)
    single = z.ndim == 1
    z2 = z[None] if single else z
    idx = _zero_based(np.atleast_1d(labels), z2.shape[1])
    if idx.shape[0] != z2.shape[0]:
        raise ShapeError("one label per row required", "batch")
    shifted = z2 - z2.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z2.shape[0])
    loss = float(np.mean(logsum - shifted[rows, idx]))
    p = np.exp(shifted - logsum[:, None])
    p[rows, idx] -= 1
    grad = p / z2.shape[0]
    return loss, (grad[0] if single else grad)


def cross_entropy(logits, labels) -> Tensor:
    """Graph-recording wrapper around :func:`softmax_cross_entropy` (scalar output)."""
    logits = as_tensor(logits)
    loss, grad = softmax_cross_entropy(logits.data, labels)

    def backward(g: np.ndarray) -> None:
        logits.accumulate(grad * g)

    return make_node(np.asarray(loss, dtype=logits.data.dtype), (logits,), backward,
                     "cross_entropy")


def total(x) -> Tensor:
    """Sum of all elements (scalar); handy for building test objectives."""
    x = as_tensor(x)

    def backward(g: np.ndarray) -> None:
        x.accumulate(np.broadcast_to(g, x.data.shape))

    return make_node(np.asarray(x.data.sum()), (x,), backward, "total")


def multiply(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g: np.ndarray) -> None:
        a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return make_node(a.data * b.data, (a, b), backward, "multiply")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g
