"""Theoretical receptive field of stride-1 stacked convolutions."""

from __future__ import annotations

from typing import Sequence

from .config import NetworkConfig


def receptive_field(kernel_lengths: Sequence[int]) -> int:
    """1 + sum(k_i - 1) over the stacked layers; 1 for an empty stack."""
    total = 1
    for k in kernel_lengths:
        if k < 1:
            raise ValueError(f"filter lengths must be >= 1, got {k}")
        total += k - 1
    return total


def network_kernel_lengths(config: NetworkConfig) -> list[int]:
    """Per-module contribution: the longest branch filter sets the field of view."""
    lengths = config.module.filter_lengths
    k = max(lengths) if lengths else 1
    return [k] * config.depth


def network_receptive_field(config: NetworkConfig) -> int:
    return receptive_field(network_kernel_lengths(config))
