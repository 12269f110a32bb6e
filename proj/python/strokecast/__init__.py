"""Badminton stroke forecasting: synthesize, train, predict and score rallies."""

from ._core import (
    ConfigError,
    Forecaster,
    InputError,
    ModelConfig,
    NumericError,
    PredictionFile,
    Rally,
    ScoreReport,
    Stroke,
    TrainConfig,
    coord_to_zone,
    load_dataset,
    round_trend,
    score,
    score_min6,
    shot_types,
    synthesize,
    train,
    write_dataset,
)

__all__ = [
    "ConfigError",
    "Forecaster",
    "InputError",
    "ModelConfig",
    "NumericError",
    "PredictionFile",
    "Rally",
    "ScoreReport",
    "Stroke",
    "TrainConfig",
    "coord_to_zone",
    "load_dataset",
    "round_trend",
    "score",
    "score_min6",
    "shot_types",
    "synthesize",
    "train",
    "write_dataset",
]
