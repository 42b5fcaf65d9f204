"""The seven classifier kinds, written against the scikit-learn estimator API.

Every estimator takes a ``classes`` argument so its score matrix always has
one column per latency class, even when a training fold lacks a class.
``predict_scores`` is the uniform scoring entry point: probabilities for
most kinds, neighbour-vote fractions for KNN and raw margins for the SVM.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..errors import DegenerateError, NonFiniteError
from . import _trees


def softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def one_hot(yi: np.ndarray, k: int) -> np.ndarray:
    Y = np.zeros((len(yi), k))
    Y[np.arange(len(yi)), yi] = 1.0
    return Y


def cross_entropy(F: np.ndarray, Y: np.ndarray) -> float:
    return float(-np.mean(np.sum(Y * (F - logsumexp(F, axis=1, keepdims=True)), axis=1)))


class _Classifier(ClassifierMixin, BaseEstimator):
    _allow_nan = False

    def _validate_fit(self, X, y):
        X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan" if self._allow_nan else True)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError("X and y have different lengths")
        present = np.unique(y)
        if len(present) < 2:
            raise DegenerateError("training labels contain a single class")
        classes = np.unique(y) if self.classes is None else np.asarray(self.classes)
        lookup = {c: i for i, c in enumerate(classes.tolist())}
        try:
            yi = np.array([lookup[c] for c in y.tolist()], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]!r} not among classes") from exc
        self.classes_ = classes
        self.n_features_in_ = X.shape[1]
        return X, yi

    def _validate_predict(self, X):
        check_is_fitted(self, "classes_")
        X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan" if self._allow_nan else True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def predict_scores(self, X):
        return self.predict_proba(X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_scores(X), axis=1)]


# -- trees -------------------------------------------------------------------


class GradientBoostedTrees(_Classifier):
    """Multiclass boosting: each round fits one Newton tree per class to the
    softmax cross-entropy gradients. The initial score is the log class prior,
    so zero iterations predict the training priors."""

    _allow_nan = True

    def __init__(self, iterations=500, learning_rate=0.1, max_depth=6, min_samples_leaf=20,
                 subsample=1.0, reg_lambda=1.0, random_state=0, classes=None):
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.subsample = subsample
        self.reg_lambda = reg_lambda
        self.random_state = random_state
        self.classes = classes

    def fit(self, X, y):
        X, yi = self._validate_fit(X, y)
        n, k = len(X), len(self.classes_)
        Y = one_hot(yi, k)
        rng = np.random.default_rng(self.random_state)
        self.base_score_ = np.log(np.maximum(Y.mean(axis=0), 1e-12))

        edges = _trees.fit_bin_edges(X)
        Xb = _trees.apply_bins(X, edges)
        n_bins = np.array([len(e) + 1 for e in edges], dtype=np.int64)
        F = np.tile(self.base_score_, (n, 1))
        ensemble = _trees.TreeEnsemble(k)
        losses = [cross_entropy(F, Y)]
        m = max(1, int(round(self.subsample * n)))
        for _ in range(int(self.iterations)):
            P = softmax(F)
            rows = np.arange(n) if m >= n else np.sort(rng.choice(n, m, replace=False))
            step = np.zeros_like(F)
            for c in range(k):
                g = P[:, c] - Y[:, c]
                h = np.maximum(P[:, c] * (1.0 - P[:, c]), 1e-16)
                feat, thr, ml, left, right, value = _trees.build_boosting_tree(
                    Xb, g, h, rows.copy(), n_bins, int(self.max_depth),
                    int(self.min_samples_leaf), float(self.reg_lambda),
                )
                value = value * self.learning_rate
                step[:, c] = _trees.predict_binned(Xb, feat, thr, ml, left, right, value)
                ensemble.add(feat, thr, ml, left, right, value, edges, output=c)
            F += step
            losses.append(cross_entropy(F, Y))
            if not np.isfinite(losses[-1]):
                raise NonFiniteError("boosting loss diverged")
        self.trees_ = ensemble.arrays()
        self.n_trees_ = len(self.trees_["roots"])
        self.train_loss_ = np.array(losses)
        return self

    def decision_function(self, X):
        X = self._validate_predict(X)
        t = self.trees_
        raw = _trees.predict_trees(X, t["feature"], t["threshold"], t["missing_left"],
                                   t["left"], t["right"], t["value"], t["roots"])
        return raw + self.base_score_

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def used_features(self) -> np.ndarray:
        check_is_fitted(self, "trees_")
        return _trees.used_features(self.trees_["feature"], self.n_features_in_)


class RandomForest(_Classifier):
    """Bagged Gini trees; each node draws its candidate features afresh."""

    _allow_nan = True

    def __init__(self, n_trees=300, max_features="sqrt", min_samples_leaf=5, max_depth=None,
                 random_state=0, classes=None):
        self.n_trees = n_trees
        self.max_features = max_features
        self.min_samples_leaf = min_samples_leaf
        self.max_depth = max_depth
        self.random_state = random_state
        self.classes = classes

    def _n_candidates(self, p: int) -> int:
        mf = self.max_features
        if mf in (None, "all"):
            return p
        if mf == "sqrt":
            return max(1, int(np.sqrt(p)))
        if isinstance(mf, float):
            return max(1, min(p, int(mf * p)))
        return max(1, min(p, int(mf)))

    def fit(self, X, y):
        X, yi = self._validate_fit(X, y)
        n, p = X.shape
        k = len(self.classes_)
        rng = np.random.default_rng(self.random_state)
        edges = _trees.fit_bin_edges(X)
        Xb = _trees.apply_bins(X, edges)
        n_bins = np.array([len(e) + 1 for e in edges], dtype=np.int64)
        mf = self._n_candidates(p)
        leaf = int(self.min_samples_leaf)
        depth = 2**31 - 1 if self.max_depth is None else int(self.max_depth)
        max_nodes = 2 * (n // leaf) + 1
        ensemble = _trees.TreeEnsemble(k)
        for _ in range(int(self.n_trees)):
            idx = rng.integers(0, n, n).astype(np.int64)
            keys = rng.random((max_nodes, p))
            feat, thr, ml, left, right, value = _trees.build_gini_tree(
                Xb, yi, idx, n_bins, k, mf, leaf, depth, keys
            )
            ensemble.add(feat, thr, ml, left, right, value / self.n_trees, edges)
        self.trees_ = ensemble.arrays()
        return self

    def predict_proba(self, X):
        X = self._validate_predict(X)
        t = self.trees_
        P = _trees.predict_trees(X, t["feature"], t["threshold"], t["missing_left"],
                                 t["left"], t["right"], t["value"], t["roots"])
        return P / P.sum(axis=1, keepdims=True)

    def used_features(self) -> np.ndarray:
        check_is_fitted(self, "trees_")
        return _trees.used_features(self.trees_["feature"], self.n_features_in_)


# -- instance and probabilistic ------------------------------------------------


class KNearestNeighbors(_Classifier):
    """Euclidean k-NN; scores are vote fractions. Distance ties go to the
    earlier training row."""

    def __init__(self, k=15, classes=None):
        self.k = k
        self.classes = classes

    def fit(self, X, y):
        X, yi = self._validate_fit(X, y)
        self.X_ = X
        self.y_ = yi
        return self

    def predict_proba(self, X):
        X = self._validate_predict(X)
        kk = min(int(self.k), len(self.X_))
        out = np.zeros((len(X), len(self.classes_)))
        for start in range(0, len(X), 512):
            d = cdist(X[start:start + 512], self.X_, "sqeuclidean")
            nn = np.argsort(d, axis=1, kind="stable")[:, :kk]
            votes = self.y_[nn]
            for c in range(len(self.classes_)):
                out[start:start + 512, c] = (votes == c).sum(axis=1) / kk
        return out


class GaussianNaiveBayes(_Classifier):
    def __init__(self, var_floor=1e-9, classes=None):
        self.var_floor = var_floor
        self.classes = classes

    def fit(self, X, y):
        X, yi = self._validate_fit(X, y)
        k, p = len(self.classes_), X.shape[1]
        self.theta_ = np.zeros((k, p))
        self.var_ = np.ones((k, p))
        self.class_count_ = np.bincount(yi, minlength=k).astype(float)
        for c in range(k):
            rows = X[yi == c]
            if len(rows):
                self.theta_[c] = rows.mean(axis=0)
                self.var_[c] = np.maximum(rows.var(axis=0), self.var_floor)
        return self

    def joint_log_likelihood(self, X):
        X = self._validate_predict(X)
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.class_count_ / self.class_count_.sum())
        jll = np.empty((len(X), len(self.classes_)))
        for c in range(len(self.classes_)):
            ll = -0.5 * np.sum(np.log(2 * np.pi * self.var_[c]))
            ll = ll - 0.5 * np.sum((X - self.theta_[c]) ** 2 / self.var_[c], axis=1)
            jll[:, c] = log_prior[c] + ll
        return jll

    def predict_proba(self, X):
        return softmax(self.joint_log_likelihood(X))


# -- gradient-trained linear and neural models ----------------------------------


def logistic_loss_grad(W, b, X, Y, l2):
    """Mean softmax cross-entropy plus ``l2/2 * |W|^2``, with its gradient."""
    n = len(X)
    Z = X @ W + b
    lse = logsumexp(Z, axis=1, keepdims=True)
    loss = -np.sum(Y * (Z - lse)) / n + 0.5 * l2 * np.sum(W * W)
    G = (np.exp(Z - lse) - Y) / n
    return loss, X.T @ G + l2 * W, G.sum(axis=0)


def mlp_forward(params, X):
    W1, b1, W2, b2 = params
    A = X @ W1 + b1
    H = np.maximum(A, 0.0)
    return A, H, H @ W2 + b2


def mlp_loss_grad(params, X, Y, l2):
    W1, b1, W2, b2 = params
    n = len(X)
    A, H, Z = mlp_forward(params, X)
    lse = logsumexp(Z, axis=1, keepdims=True)
    loss = -np.sum(Y * (Z - lse)) / n + 0.5 * l2 * (np.sum(W1 * W1) + np.sum(W2 * W2))
    dZ = (np.exp(Z - lse) - Y) / n
    dW2 = H.T @ dZ + l2 * W2
    db2 = dZ.sum(axis=0)
    dA = (dZ @ W2.T) * (A > 0)
    dW1 = X.T @ dA + l2 * W1
    db1 = dA.sum(axis=0)
    return loss, [dW1, db1, dW2, db2]


def _batches(rng, n, size):
    order = rng.permutation(n)
    for s in range(0, n, size):
        yield order[s:s + size]


class SoftmaxRegression(_Classifier):
    """L2-regularized multinomial logistic regression by mini-batch SGD with
    a ``lr / (1 + decay * epoch)`` schedule."""

    def __init__(self, l2=1e-3, epochs=100, batch_size=64, learning_rate=0.1, decay=0.01,
                 random_state=0, classes=None):
        self.l2 = l2
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.decay = decay
        self.random_state = random_state
        self.classes = classes

    def fit(self, X, y):
        X, yi = self._validate_fit(X, y)
        rng = np.random.default_rng(self.random_state)
        Y = one_hot(yi, len(self.classes_))
        W = np.zeros((X.shape[1], Y.shape[1]))
        b = np.zeros(Y.shape[1])
        losses = []
        # divergence is caught by the finiteness check below, not by warnings
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(int(self.epochs)):
                lr = self.learning_rate / (1.0 + self.decay * epoch)
                for rows in _batches(rng, len(X), int(self.batch_size)):
                    _, gW, gb = logistic_loss_grad(W, b, X[rows], Y[rows], self.l2)
                    W -= lr * gW
                    b -= lr * gb
                losses.append(logistic_loss_grad(W, b, X, Y, self.l2)[0])
                if not np.isfinite(losses[-1]):
                    raise NonFiniteError("logistic loss diverged; lower the learning rate")
        self.coef_, self.intercept_ = W, b
        self.train_loss_ = np.array(losses)
        return self

    def decision_function(self, X):
        X = self._validate_predict(X)
        return X @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        return softmax(self.decision_function(X))


class MultilayerPerceptron(_Classifier):
    """One ReLU hidden layer and a softmax output, trained with Adam."""

    def __init__(self, hidden=64, l2=1e-4, epochs=50, batch_size=64, learning_rate=1e-3,
                 random_state=0, classes=None):
        self.hidden = hidden
        self.l2 = l2
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.random_state = random_state
        self.classes = classes

    def fit(self, X, y):
        X, yi = self._validate_fit(X, y)
        rng = np.random.default_rng(self.random_state)
        Y = one_hot(yi, len(self.classes_))
        d, h, k = X.shape[1], int(self.hidden), Y.shape[1]
        params = [
            rng.normal(0.0, np.sqrt(2.0 / d), (d, h)),
            np.zeros(h),
            rng.normal(0.0, np.sqrt(1.0 / h), (h, k)),
            np.zeros(k),
        ]
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        b1, b2, eps = 0.9, 0.999, 1e-8
        t = 0
        losses = []
        for _ in range(int(self.epochs)):
            for rows in _batches(rng, len(X), int(self.batch_size)):
                t += 1
                _, grads = mlp_loss_grad(params, X[rows], Y[rows], self.l2)
                for i, g in enumerate(grads):
                    m[i] = b1 * m[i] + (1 - b1) * g
                    v[i] = b2 * v[i] + (1 - b2) * g * g
                    mh = m[i] / (1 - b1**t)
                    vh = v[i] / (1 - b2**t)
                    params[i] = params[i] - self.learning_rate * mh / (np.sqrt(vh) + eps)
            losses.append(mlp_loss_grad(params, X, Y, self.l2)[0])
            if not np.isfinite(losses[-1]):
                raise NonFiniteError("network loss diverged; lower the learning rate")
        self.W1_, self.b1_, self.W2_, self.b2_ = params
        self.train_loss_ = np.array(losses)
        return self

    def decision_function(self, X):
        X = self._validate_predict(X)
        return mlp_forward([self.W1_, self.b1_, self.W2_, self.b2_], X)[2]

    def predict_proba(self, X):
        return softmax(self.decision_function(X))


class LinearSVM(_Classifier):
    """One-vs-rest linear SVMs (hinge loss, L2) by mini-batch subgradient
    descent. Scores are signed margins, not probabilities."""

    def __init__(self, l2=1e-3, epochs=50, batch_size=64, learning_rate=0.05, decay=0.05,
                 random_state=0, classes=None):
        self.l2 = l2
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.decay = decay
        self.random_state = random_state
        self.classes = classes

    @staticmethod
    def objective(W, b, X, S, l2):
        margins = S * (X @ W + b)
        return float(np.mean(np.maximum(0.0, 1.0 - margins).sum(axis=1)) + 0.5 * l2 * np.sum(W * W))

    def fit(self, X, y):
        X, yi = self._validate_fit(X, y)
        rng = np.random.default_rng(self.random_state)
        S = 2.0 * one_hot(yi, len(self.classes_)) - 1.0
        W = np.zeros((X.shape[1], S.shape[1]))
        b = np.zeros(S.shape[1])
        losses = []
        # divergence is caught by the finiteness check below, not by warnings
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(int(self.epochs)):
                lr = self.learning_rate / (1.0 + self.decay * epoch)
                for rows in _batches(rng, len(X), int(self.batch_size)):
                    Xr, Sr = X[rows], S[rows]
                    active = (Sr * (Xr @ W + b) < 1.0) * Sr
                    W -= lr * (self.l2 * W - Xr.T @ active / len(rows))
                    b -= lr * (-active.sum(axis=0) / len(rows))
                losses.append(self.objective(W, b, X, S, self.l2))
                if not np.isfinite(losses[-1]):
                    raise NonFiniteError("hinge objective diverged")
        self.coef_, self.intercept_ = W, b
        self.train_loss_ = np.array(losses)
        return self

    def decision_function(self, X):
        X = self._validate_predict(X)
        return X @ self.coef_ + self.intercept_

    def predict_scores(self, X):
        return self.decision_function(X)
