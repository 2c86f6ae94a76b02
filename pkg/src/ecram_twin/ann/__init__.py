"""Digit classification with conductance-pair weights."""

from .data import N_CLASSES, N_FEATURES, DatasetError, DigitsDataset, load_digits
from .device import UpdateReport, WeightArray, device_weight_update, positions, pulse_many, pulses_to_saturation
from .network import (
    CROSS_ENTROPY,
    DEVICE,
    IDEAL,
    MLP,
    MSE,
    NetworkConfig,
    TrainingError,
    backward_sgd_step,
    numerical_gradients,
)
from .training import (
    LOG_HEADER,
    CrossValidationResult,
    DeviceNetwork,
    FoldResult,
    apply_epoch_retention,
    confusion_matrix,
    cross_validate,
    normalize_rows,
    stratified_folds,
    train_fold,
)

__all__ = [name for name in dir() if not name.startswith("_")]
