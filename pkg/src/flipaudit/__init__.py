"""Audit, explain, and debug small feed-forward classifiers via decision-boundary
flip points."""

from .data import (
    Dataset,
    Feature,
    FeatureSchema,
    GroupFilter,
    drop_features,
    flip_binary_feature,
    load_csv,
    split,
    undersample,
)
from .flipsolve import FlipConstraint, FlipResult, FlipSolver, SolverOptions
from .linalg import PcaResult, PivotedQr, condition_number, numerical_rank, pca, pivoted_qr, singular_values
from .model import MlpModel, ScoreVector, TrainConfig, accuracy, load_model, save_model, train_model

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Feature", "FeatureSchema", "GroupFilter",
    "drop_features", "flip_binary_feature", "load_csv", "split", "undersample",
    "FlipConstraint", "FlipResult", "FlipSolver", "SolverOptions",
    "PcaResult", "PivotedQr", "condition_number", "numerical_rank", "pca",
    "pivoted_qr", "singular_values",
    "MlpModel", "ScoreVector", "TrainConfig", "accuracy", "load_model",
    "save_model", "train_model",
    "__version__",
]
