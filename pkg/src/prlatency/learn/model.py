"""Model kinds, default hyperparameters and the trained-model wrapper."""

from __future__ import annotations

import copy
import enum
from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.pipeline import Pipeline
from sklearn.utils.validation import check_is_fitted

from ..errors import ConfigError, DegenerateError, FeatureMismatchError, NonFiniteError, TooFewRowsError
from ..features import ORDINAL_FEATURES, FeatureMatrix, LatencyClass
from ..preprocess import Log1pTransformer, MedianImputer, OrdinalOneHot, ZScoreScaler
from .estimators import (
    GaussianNaiveBayes,
    GradientBoostedTrees,
    KNearestNeighbors,
    LinearSVM,
    MultilayerPerceptron,
    RandomForest,
    SoftmaxRegression,
)

CLASSES = tuple(int(c) for c in LatencyClass)
MIN_TRAIN_ROWS = 10


class ModelKind(str, enum.Enum):
    GBDT = "gbdt"
    KNN = "knn"
    LOGISTIC = "logistic"
    NAIVE_BAYES = "naive_bayes"
    MLP = "mlp"
    RANDOM_FOREST = "random_forest"
    LINEAR_SVM = "linear_svm"

    @property
    def column(self) -> str:
        return _COLUMNS[self]

    @property
    def is_tree(self) -> bool:
        return self in (ModelKind.GBDT, ModelKind.RANDOM_FOREST)

    @property
    def emits_probabilities(self) -> bool:
        return self not in (ModelKind.KNN, ModelKind.LINEAR_SVM)


_COLUMNS = {
    ModelKind.GBDT: "CB",
    ModelKind.KNN: "KNN",
    ModelKind.LOGISTIC: "LR",
    ModelKind.NAIVE_BAYES: "NB",
    ModelKind.MLP: "NN",
    ModelKind.RANDOM_FOREST: "RF",
    ModelKind.LINEAR_SVM: "SVM",
}
ALL_KINDS = list(ModelKind)

DEFAULT_HYPERPARAMS: dict[str, dict] = {
    "gbdt": {"iterations": 500, "learning_rate": 0.1, "max_depth": 6, "min_samples_leaf": 20,
             "subsample": 1.0, "reg_lambda": 1.0},
    "random_forest": {"n_trees": 300, "max_features": "sqrt", "min_samples_leaf": 5, "max_depth": None},
    "knn": {"k": 15},
    "logistic": {"l2": 1e-3, "epochs": 100, "batch_size": 64, "learning_rate": 0.1, "decay": 0.01},
    "mlp": {"hidden": 64, "l2": 1e-4, "epochs": 50, "batch_size": 64, "learning_rate": 1e-3},
    "linear_svm": {"l2": 1e-3, "epochs": 50, "batch_size": 64, "learning_rate": 0.05, "decay": 0.05},
    "naive_bayes": {"var_floor": 1e-9},
}

_ESTIMATORS = {
    ModelKind.GBDT: GradientBoostedTrees,
    ModelKind.RANDOM_FOREST: RandomForest,
    ModelKind.KNN: KNearestNeighbors,
    ModelKind.LOGISTIC: SoftmaxRegression,
    ModelKind.MLP: MultilayerPerceptron,
    ModelKind.LINEAR_SVM: LinearSVM,
    ModelKind.NAIVE_BAYES: GaussianNaiveBayes,
}
_SEEDED = {k for k, cls in _ESTIMATORS.items() if "random_state" in cls._get_param_names()}


def resolve_hyperparams(overrides: Mapping | None = None) -> dict[str, dict]:
    """Defaults merged with ``overrides``; unknown kinds or keys are rejected."""
    hp = copy.deepcopy(DEFAULT_HYPERPARAMS)
    for kind, params in (overrides or {}).items():
        if kind not in hp:
            raise ConfigError(f"unknown model kind {kind!r} in hyperparameters")
        for key, value in dict(params).items():
            if key not in hp[kind]:
                raise ConfigError(f"unknown hyperparameter {kind}.{key}")
            hp[kind][key] = value
    for kind, params in hp.items():
        for key, value in params.items():
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                # iterations may be zero (prior-only booster); everything else positive
                floor_ok = value >= 0 if key == "iterations" else value > 0
                if not floor_ok:
                    raise ConfigError(f"hyperparameter {kind}.{key} must be positive, got {value}")
    return hp


def _pipeline(kind: ModelKind, feature_names, params: dict, seed: int) -> Pipeline:
    ordinal = [i for i, f in enumerate(feature_names) if f in ORDINAL_FEATURES]
    est_params = dict(params, classes=CLASSES)
    if kind in _SEEDED:
        est_params["random_state"] = seed
    estimator = _ESTIMATORS[kind](**est_params)
    steps = [("log1p", Log1pTransformer(exempt=tuple(ordinal)))]
    if not kind.is_tree:
        steps += [
            ("impute", MedianImputer()),
            ("onehot", OrdinalOneHot(cardinalities=tuple(
                (i, ORDINAL_FEATURES[feature_names[i]]) for i in ordinal))),
            ("scale", ZScoreScaler()),
        ]
    steps.append(("model", estimator))
    return Pipeline(steps)


def _as_arrays(X, y, feature_names):
    if isinstance(X, FeatureMatrix):
        # canonical row order makes training independent of input row order
        order = np.lexsort((X.pr_numbers, X.projects.astype(str)))
        names = list(X.feature_names)
        y = X.y if y is None else np.asarray(y)
        return X.X[order], np.asarray(y)[order], names
    X = np.asarray(X, dtype=float)
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(X.shape[1])]
    return X, np.asarray(y), names


class ResponseLatencyModel(ClassifierMixin, BaseEstimator):
    """One classifier kind plus its preprocessing, fit on a single fold.

    Tree kinds see ``log1p`` features with NaN preserved for missing-value
    routing. Other kinds additionally get median imputation, one-hot encoded
    day/hour ordinals and z-scoring, all fit on the training rows only.
    """

    def __init__(self, kind="gbdt", feature_names=None, hyperparams=None, random_state=0, fold=None):
        self.kind = kind
        self.feature_names = feature_names
        self.hyperparams = hyperparams
        self.random_state = random_state
        self.fold = fold

    def fit(self, X, y=None):
        kind = ModelKind(self.kind)
        Xa, ya, names = _as_arrays(X, y, self.feature_names)
        if len(Xa) < MIN_TRAIN_ROWS:
            raise TooFewRowsError(f"training needs at least {MIN_TRAIN_ROWS} rows, got {len(Xa)}")
        if len(np.unique(ya)) < 2:
            raise DegenerateError("training labels contain a single class")
        params = resolve_hyperparams(
            {kind.value: self.hyperparams} if self.hyperparams else None
        )[kind.value]
        self.feature_names_ = names
        self.pipeline_ = _pipeline(kind, names, params, int(self.random_state)).fit(Xa, ya)
        self.classes_ = np.array(CLASSES)
        self.metadata_ = {
            "kind": kind.value,
            "seed": int(self.random_state),
            "hyperparameters": params,
            "fold": self.fold,
            "train_rows": int(len(Xa)),
            "class_counts": [int(np.sum(ya == c)) for c in CLASSES],
        }
        return self

    def _check_rows(self, X) -> np.ndarray:
        check_is_fitted(self, "pipeline_")
        if isinstance(X, FeatureMatrix):
            if list(X.feature_names) != self.feature_names_:
                raise FeatureMismatchError(
                    f"model expects {self.feature_names_}, rows carry {list(X.feature_names)}"
                )
            return X.X
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names_):
            raise FeatureMismatchError(
                f"model expects {len(self.feature_names_)} features, got shape {X.shape}"
            )
        return X

    def predict_scores(self, X) -> np.ndarray:
        """Per-row scores for the three latency classes, in class order."""
        Xa = self._check_rows(X)
        if len(Xa) == 0:
            return np.zeros((0, len(CLASSES)))
        Xt = self.pipeline_[:-1].transform(Xa)
        scores = self.pipeline_[-1].predict_scores(Xt)
        if not np.all(np.isfinite(scores)):
            raise NonFiniteError("model produced non-finite scores")
        return scores

    def predict_proba(self, X):
        if not ModelKind(self.kind).emits_probabilities:
            raise AttributeError(f"{self.kind} emits scores, not probabilities")
        return self.predict_scores(X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_scores(X), axis=1)]

    @property
    def estimator_(self):
        return self.pipeline_[-1]

    def used_features(self) -> np.ndarray | None:
        """Which input features the fitted trees split on (tree kinds only)."""
        est = self.estimator_
        return est.used_features() if hasattr(est, "used_features") else None


def _params_for(kind: ModelKind, hp: Mapping | None):
    """``hp`` is either keyed by kind or a flat parameter dict for ``kind``."""
    if not hp:
        return None
    if set(hp) <= set(DEFAULT_HYPERPARAMS):
        return hp.get(kind.value)
    return dict(hp)


def train(kind, X, y=None, hp: Mapping | None = None, seed: int = 0, fold=None, feature_names=None):
    kind = ModelKind(kind)
    return ResponseLatencyModel(kind.value, feature_names, _params_for(kind, hp), seed, fold).fit(X, y)


def predict_scores(model: ResponseLatencyModel, rows) -> np.ndarray:
    return model.predict_scores(rows)
