"""Python bindings for the emosphere C++ library."""

from ._emosphere import (
    ConfigError,
    DomainError,
    Error,
    Example,
    FormatError,
    IndexError,
    IoError,
    Model,
    ModelConfig,
    Pooling,
    RegionPartition,
    ShapeError,
    StateError,
    TrainingError,
    ValidationError,
    ccc,
    ccc_loss,
    denormalize_vad,
    evaluate,
    evaluate_classification,
    evaluate_regression,
    fit,
    gradient_suite,
    inverse_frequency_weights,
    lambda_schedule,
    load_checkpoint,
    load_examples,
    make_partition,
    normalize_vad,
    predict,
    synthesize_dataset,
    synthetic_split,
    to_cartesian,
    to_spherical,
    weighted_cross_entropy,
)

__version__ = "0.1.0"
