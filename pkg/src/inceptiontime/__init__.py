"""Inception-network ensembles for time series classification, on a small numpy engine."""

from .architecture import (
    InceptionModuleConfig,
    Network,
    NetworkConfig,
    build_network,
    load_model,
    network_receptive_field,
    parameter_count,
    receptive_field,
    save_model,
)
from .data import Dataset, SyntheticSpec, generate_synthetic, load_ucr, save_ucr, z_normalize
from .ensemble import (
    EnsembleModel,
    ensemble_predict,
    ensemble_size_sweep,
    load_ensemble,
    save_ensemble,
    train_ensemble,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DataFormatError,
    InceptionTimeError,
    ShapeError,
    TrainingError,
)
from .training import TrainConfig, TrainHistory, evaluate, reduce_lr_on_plateau, train

__version__ = "0.1.0"
