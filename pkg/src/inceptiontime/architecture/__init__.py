"""Inception network construction, introspection and persistence."""

from .checkpoint import load_model, read_model_header, save_model
from .config import RESIDUAL_PERIOD, InceptionModuleConfig, NetworkConfig
from .network import (
    Network,
    apply_shortcut,
    build_network,
    parameter_breakdown,
    parameter_count,
    parameter_shapes,
)
from .receptive_field import network_kernel_lengths, network_receptive_field, receptive_field

__all__ = [
    "RESIDUAL_PERIOD", "InceptionModuleConfig", "Network", "NetworkConfig", "apply_shortcut",
    "build_network", "load_model", "network_kernel_lengths", "network_receptive_field",
    "parameter_breakdown", "parameter_count", "parameter_shapes", "read_model_header",
    "receptive_field", "save_model",
]
