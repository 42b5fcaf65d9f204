"""Classifiers for response-latency classes and their persistence."""

from .estimators import (
    GaussianNaiveBayes,
    GradientBoostedTrees,
    KNearestNeighbors,
    LinearSVM,
    MultilayerPerceptron,
    RandomForest,
    SoftmaxRegression,
    logistic_loss_grad,
    mlp_loss_grad,
)
from .model import (
    ALL_KINDS,
    CLASSES,
    DEFAULT_HYPERPARAMS,
    ModelKind,
    ResponseLatencyModel,
    predict_scores,
    resolve_hyperparams,
    train,
)
from .persist import dumps_model, load_model, loads_model, save_model

__all__ = [
    "ALL_KINDS",
    "CLASSES",
    "DEFAULT_HYPERPARAMS",
    "GaussianNaiveBayes",
    "GradientBoostedTrees",
    "KNearestNeighbors",
    "LinearSVM",
    "ModelKind",
    "MultilayerPerceptron",
    "RandomForest",
    "ResponseLatencyModel",
    "SoftmaxRegression",
    "dumps_model",
    "load_model",
    "loads_model",
    "logistic_loss_grad",
    "mlp_loss_grad",
    "predict_scores",
    "resolve_hyperparams",
    "save_model",
    "train",
]
