"""The Inception network: construction, forward pass and parameter bookkeeping."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import ShapeError
from ..numerics import (
    BatchNormState,
    Tensor,
    add,
    batch_norm,
    concat,
    conv1d,
    conv_fans,
    dense,
    glorot_uniform,
    global_average_pool,
    maxpool1d,
    relu,
    softmax,
)
from .config import NetworkConfig

# Infer-mode forward passes are chunked to bound activation memory.
_INFER_CHUNK = 128


def uses_bottleneck(config: NetworkConfig, in_channels: int) -> bool:
    """A bottleneck only runs where it actually reduces channels."""
    m = config.module
    return m.use_bottleneck and in_channels > 1 and m.bottleneck_size <= in_channels


def module_input_channels(config: NetworkConfig) -> list[int]:
    return [config.input_channels] + [config.module.out_channels] * (config.depth - 1)


def parameter_shapes(config: NetworkConfig) -> "OrderedDict[str, tuple[int, ...]]":
    """Name -> shape for every learnable tensor, in initialization order."""
    config.validate()
    mc = config.module
    f = mc.filters_per_branch
    shapes: OrderedDict[str, tuple[int, ...]] = OrderedDict()
    in_channels = module_input_channels(config)
    shortcuts = set(config.shortcut_points())
    block_in = config.input_channels
    for i, c_in in enumerate(in_channels):
        p = f"module{i}"
        z = c_in
        if uses_bottleneck(config, c_in):
            shapes[f"{p}.bottleneck.weight"] = (mc.bottleneck_size, c_in, 1)
            shapes[f"{p}.bottleneck.bias"] = (mc.bottleneck_size,)
            z = mc.bottleneck_size
        for j, k in enumerate(mc.filter_lengths):
            shapes[f"{p}.conv{j}.weight"] = (f, z, k)
            shapes[f"{p}.conv{j}.bias"] = (f,)
        if mc.use_maxpool_branch:
            shapes[f"{p}.pool_conv.weight"] = (f, c_in, 1)
            shapes[f"{p}.pool_conv.bias"] = (f,)
        shapes[f"{p}.bn.gamma"] = (mc.out_channels,)
        shapes[f"{p}.bn.beta"] = (mc.out_channels,)
        if i in shortcuts:
            s = f"shortcut{i}"
            shapes[f"{s}.conv.weight"] = (mc.out_channels, block_in, 1)
            shapes[f"{s}.conv.bias"] = (mc.out_channels,)
            shapes[f"{s}.bn.gamma"] = (mc.out_channels,)
            shapes[f"{s}.bn.beta"] = (mc.out_channels,)
            block_in = mc.out_channels
    shapes["head.weight"] = (config.num_classes, mc.out_channels)
    shapes["head.bias"] = (config.num_classes,)
    return shapes


def norm_layer_names(config: NetworkConfig) -> list[str]:
    names = [f"module{i}.bn" for i in range(config.depth)]
    names += [f"shortcut{i}.bn" for i in config.shortcut_points()]
    return names


class Network:
    """Parameters, normalization statistics and the forward computation.

    ``params`` maps names to plain arrays; the graph is built per call from
    whatever tensors are passed as ``leaves``, so training and inference share
    one code path.
    """

    def __init__(self, config: NetworkConfig, params: "OrderedDict[str, np.ndarray]",
                 norm_states: dict[str, BatchNormState], dtype=np.float32):
        self.config = config
        self.params = params
        self.norm_states = norm_states
        self.dtype = np.dtype(dtype)
        self.training = False

    def copy(self) -> "Network":
        params = OrderedDict((k, v.copy()) for k, v in self.params.items())
        states = {k: BatchNormState(s.running_mean.copy(), s.running_var.copy(), s.momentum,
                                    s.eps) for k, s in self.norm_states.items()}
        return Network(self.config, params, states, self.dtype)

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3:
            raise ShapeError(f"expected (N, M, T) input, got shape {x.shape}", "rank")
        if x.shape[1] != self.config.input_channels:
            raise ShapeError(f"network expects {self.config.input_channels} channels, "
                             f"input has {x.shape[1]}", "channels")
        if x.shape[2] < 1:
            raise ShapeError("series length must be >= 1", "length")
        return x.astype(self.dtype, copy=False)

    def logits(self, x, training: bool = False,
               leaves: dict[str, Tensor] | None = None) -> Tensor:
        """Class scores before the softmax.

        ``leaves`` supplies the parameter tensors (with ``requires_grad`` set
        when gradients are wanted); by default the stored arrays are wrapped
        without gradient tracking.
        """
        x = self._check_input(x)
        p = leaves if leaves is not None else {k: Tensor(v) for k, v in self.params.items()}
        cfg = self.config
        shortcuts = set(cfg.shortcut_points())
        h = Tensor(x)
        block_input = h
        for i in range(cfg.depth):
            h = self._module(h, i, p, training)
            if i in shortcuts:
                s = f"shortcut{i}"
                h = apply_shortcut(block_input, h, p[f"{s}.conv.weight"], p[f"{s}.conv.bias"],
                                   p[f"{s}.bn.gamma"], p[f"{s}.bn.beta"],
                                   self.norm_states[f"{s}.bn"], training)
                block_input = h
        pooled = global_average_pool(h)
        return dense(pooled, p["head.weight"], p["head.bias"])

    def _module(self, x: Tensor, i: int, p: dict[str, Tensor], training: bool) -> Tensor:
        mc = self.config.module
        pre = f"module{i}"
        z = x
        if uses_bottleneck(self.config, x.shape[1]):
            z = conv1d(x, p[f"{pre}.bottleneck.weight"], p[f"{pre}.bottleneck.bias"])
        branches = [conv1d(z, p[f"{pre}.conv{j}.weight"], p[f"{pre}.conv{j}.bias"])
                    for j in range(len(mc.filter_lengths))]
        if mc.use_maxpool_branch:
            pooled = maxpool1d(x, mc.maxpool_window)
            branches.append(conv1d(pooled, p[f"{pre}.pool_conv.weight"],
                                   p[f"{pre}.pool_conv.bias"]))
        h = concat(branches, axis=1) if len(branches) > 1 else branches[0]
        h = batch_norm(h, p[f"{pre}.bn.gamma"], p[f"{pre}.bn.beta"],
                       self.norm_states[f"{pre}.bn"], training)
        return relu(h)

    def forward(self, x, training: bool = False) -> np.ndarray:
        """Class probabilities, one row per input series."""
        x = self._check_input(x)
        if training:
            return softmax(self.logits(x, training=True).data)
        rows = [softmax(self.logits(x[s:s + _INFER_CHUNK]).data)
                for s in range(0, x.shape[0], _INFER_CHUNK)]
        return np.concatenate(rows, axis=0)

    predict_proba = forward

    def predict(self, x) -> np.ndarray:
        """1-based class labels (ties go to the lowest class index)."""
        return np.argmax(self.forward(x), axis=1) + 1

    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))


def apply_shortcut(block_input, block_output, weight, bias, gamma, beta,
                   state: BatchNormState, training: bool) -> Tensor:
    """relu(block_output + norm(conv1x1(block_input)))."""
    if block_input.shape[-1] != block_output.shape[-1]:
        raise ShapeError(f"shortcut length mismatch: {block_input.shape[-1]} vs "
                         f"{block_output.shape[-1]}", "length")
    projected = conv1d(block_input, weight, bias)
    projected = batch_norm(projected, gamma, beta, state, training)
    return relu(add(block_output, projected))


def build_network(config: NetworkConfig, rng: np.random.Generator,
                  dtype=np.float32) -> Network:
    """Glorot-uniform weights, zero biases, unit scale and zero shift."""
    shapes = parameter_shapes(config)
    params: OrderedDict[str, np.ndarray] = OrderedDict()
    for name, shape in shapes.items():
        if name.endswith(".weight"):
            if len(shape) == 3:
                fan_in, fan_out = conv_fans(shape)
            else:
                fan_out, fan_in = shape
            params[name] = glorot_uniform(fan_in, fan_out, shape, rng, dtype)
        elif name.endswith(".gamma"):
            params[name] = np.ones(shape, dtype=dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    states = {n: BatchNormState.create(config.module.out_channels, dtype)
              for n in norm_layer_names(config)}
    return Network(config, params, states, dtype)


def parameter_breakdown(net_or_config) -> "OrderedDict[str, int]":
    """Learnable scalars per layer (parameter names with the last component dropped)."""
    config = net_or_config.config if isinstance(net_or_config, Network) else net_or_config
    out: OrderedDict[str, int] = OrderedDict()
    for name, shape in parameter_shapes(config).items():
        layer = name.rsplit(".", 1)[0]
        out[layer] = out.get(layer, 0) + int(np.prod(shape))
    return out


def parameter_count(net_or_config) -> int:
    """Exact number of learnable scalars; running statistics are not counted."""
    return sum(parameter_breakdown(net_or_config).values())
