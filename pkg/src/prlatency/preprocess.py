"""Correlation pruning and per-fold feature transformations.

The transformers follow the scikit-learn estimator contract so they compose
with ``sklearn.pipeline.Pipeline``. Missing values travel as ``NaN``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DegenerateError, DomainError, TooFewRowsError
from .features import FeatureMatrix

CORRELATION_THRESHOLD = 0.6

# Most interpretable first; within a correlated pair the later feature is dropped.
DEFAULT_KEEP_PRIORITY = [
    "review_latency",
    "submission_day",
    "submission_hour",
    "review_day",
    "review_hour",
    "commits",
    "description_length",
    "contributor_performance",
    "contributor_responsiveness",
    "contributor_backlog",
    "contributor_activity",
    "participants_activity",
    "bots_activity",
    "maintainers_responsiveness",
    "maintainers_availability",
    "project_backlog",
    "community_size",
    "contributor_experience",
    "submission_volume",
    "changed_files",
    "changed_lines",
]


def spearman(x, y) -> float:
    """Spearman's rho with mid-ranks; pairs with a missing side are dropped."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("spearman needs equal-length vectors")
    keep = ~(np.isnan(x) | np.isnan(y))
    x, y = x[keep], y[keep]
    if len(x) < 2:
        raise DegenerateError("fewer than two complete pairs")
    rx, ry = rankdata(x), rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx @ rx) * (ry @ ry))
    if denom == 0:
        raise DegenerateError("constant vector")
    return float(np.clip((rx @ ry) / denom, -1.0, 1.0))


@dataclass
class CorrelationReport:
    features: list[str]
    rho: np.ndarray
    dropped: list[tuple[str, str, float]] = field(default_factory=list)
    degenerate: list[tuple[str, str]] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", *self.features])
            for name, row in zip(self.features, self.rho):
                w.writerow([name, *("" if np.isnan(v) else f"{v:.6f}" for v in row)])

    def to_dict(self) -> dict:
        return {
            "dropped": [{"feature": f, "kept": k, "rho": r} for f, k, r in self.dropped],
            "degenerate_pairs": [list(p) for p in self.degenerate],
        }


def correlation_matrix(X: np.ndarray) -> tuple[np.ndarray, list[tuple[int, int]]]:
    p = X.shape[1]
    rho = np.eye(p)
    bad = []
    for i in range(p):
        for j in range(i + 1, p):
            try:
                rho[i, j] = rho[j, i] = spearman(X[:, i], X[:, j])
            except DegenerateError:
                rho[i, j] = rho[j, i] = np.nan
                bad.append((i, j))
    return rho, bad


class CorrelationPruner(TransformerMixin, BaseEstimator):
    """Greedy removal of one feature from every pair with ``|rho| >= threshold``.

    Pairs are visited by decreasing ``|rho|``; the feature that comes later in
    ``keep_priority`` is dropped. Features missing from the priority list rank
    after all listed ones, in input order.
    """

    def __init__(self, feature_names=None, threshold=CORRELATION_THRESHOLD, keep_priority=None):
        self.feature_names = feature_names
        self.threshold = threshold
        self.keep_priority = keep_priority

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.shape[0] < 2:
            raise TooFewRowsError("correlation pruning needs at least two rows")
        names = list(self.feature_names) if self.feature_names is not None else [f"x{i}" for i in range(X.shape[1])]
        priority = list(self.keep_priority) if self.keep_priority is not None else DEFAULT_KEEP_PRIORITY
        rank = {f: i for i, f in enumerate(priority)}
        order = {f: rank.get(f, len(priority) + k) for k, f in enumerate(names)}

        rho, bad = correlation_matrix(X)
        pairs = [
            (abs(rho[i, j]), i, j)
            for i in range(len(names))
            for j in range(i + 1, len(names))
            if not np.isnan(rho[i, j]) and abs(rho[i, j]) >= self.threshold
        ]
        pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
        dropped: list[tuple[str, str, float]] = []
        gone: set[str] = set()
        for _, i, j in pairs:
            a, b = names[i], names[j]
            if a in gone or b in gone:
                continue
            keep, drop = (a, b) if order[a] <= order[b] else (b, a)
            gone.add(drop)
            dropped.append((drop, keep, float(rho[i, j])))

        self.feature_names_in_ = names
        self.support_ = np.array([n not in gone for n in names])
        self.report_ = CorrelationReport(names, rho, dropped, [(names[i], names[j]) for i, j in bad])
        return self

    def transform(self, X):
        check_is_fitted(self, "support_")
        return np.asarray(X, dtype=float)[:, self.support_]

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "support_")
        return np.asarray(self.feature_names_in_, dtype=object)[self.support_]


def correlation_prune(matrix: FeatureMatrix, threshold=CORRELATION_THRESHOLD, keep_priority=None):
    pruner = CorrelationPruner(matrix.feature_names, threshold, keep_priority).fit(matrix.X)
    kept = [str(f) for f in pruner.get_feature_names_out()]
    return matrix.select(kept), pruner.report_


class Log1pTransformer(TransformerMixin, BaseEstimator):
    """``log(x + 1)`` on every column except ``exempt``; NaN passes through."""

    def __init__(self, exempt=()):
        self.exempt = exempt

    def fit(self, X, y=None):
        self.n_features_in_ = np.asarray(X).shape[1]
        return self

    def transform(self, X):
        X = np.array(X, dtype=float)
        cols = np.ones(X.shape[1], dtype=bool)
        cols[list(self.exempt)] = False
        sub = X[:, cols]
        if np.any(sub < 0):
            raise DomainError("log1p needs non-negative inputs")
        X[:, cols] = np.log1p(sub)
        return X


def log1p(matrix: FeatureMatrix, exempt: Sequence[str] = ()) -> FeatureMatrix:
    idx = [matrix.feature_names.index(f) for f in exempt if f in matrix.feature_names]
    out = matrix.take(np.arange(len(matrix)))
    out.X = Log1pTransformer(idx).fit_transform(matrix.X)
    return out


class MedianImputer(TransformerMixin, BaseEstimator):
    """Replace NaN with the training-fold median (0 when a column is all NaN)."""

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        with np.errstate(all="ignore"):
            med = np.array([np.median(c[~np.isnan(c)]) if np.any(~np.isnan(c)) else 0.0 for c in X.T])
        self.medians_ = med
        return self

    def transform(self, X):
        check_is_fitted(self, "medians_")
        X = np.array(X, dtype=float)
        r, c = np.nonzero(np.isnan(X))
        X[r, c] = self.medians_[c]
        return X


class OrdinalOneHot(TransformerMixin, BaseEstimator):
    """Expand integer ordinal columns (``{index: cardinality}``) into indicator blocks.

    Non-ordinal columns keep their order and come first.
    """

    def __init__(self, cardinalities=None):
        self.cardinalities = cardinalities

    def fit(self, X, y=None):
        self.n_features_in_ = np.asarray(X).shape[1]
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        card = dict(self.cardinalities or {})
        plain = [j for j in range(X.shape[1]) if j not in card]
        blocks = [X[:, plain]]
        for j in sorted(card):
            codes = np.nan_to_num(X[:, j], nan=-1).astype(int)
            blocks.append((codes[:, None] == np.arange(card[j])[None, :]).astype(float))
        return np.hstack(blocks)


@dataclass
class ScalerState:
    mean: np.ndarray
    std: np.ndarray
    degenerate: np.ndarray


class ZScoreScaler(TransformerMixin, BaseEstimator):
    """Standardize with population statistics; zero-variance columns pass through."""

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        self.degenerate_ = ~(self.scale_ > 0)
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = np.array(X, dtype=float)
        ok = ~self.degenerate_
        X[:, ok] = (X[:, ok] - self.mean_[ok]) / self.scale_[ok]
        return X

    @property
    def state(self) -> ScalerState:
        return ScalerState(self.mean_, self.scale_, self.degenerate_)


def zscore_fit(train_rows) -> ScalerState:
    return ZScoreScaler().fit(train_rows).state


def zscore_apply(state: ScalerState, rows) -> np.ndarray:
    X = np.array(rows, dtype=float)
    ok = ~state.degenerate
    X[:, ok] = (X[:, ok] - state.mean[ok]) / state.std[ok]
    return X
