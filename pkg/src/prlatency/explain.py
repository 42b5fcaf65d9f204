"""Permutation importance, Monte-Carlo Shapley attributions and feature rankings."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ._seeding import rng_for
from .errors import FeatureMismatchError, TooFewRowsError
from .evaluate.metrics import ovr_macro
from .evaluate.scott_knott import scott_knott_esd
from .features import FeatureMatrix
from .learn import CLASSES
from .svg import band_chart, rank_heatmap

MIN_IMPORTANCE_ROWS = 20
MIN_BACKGROUND_ROWS = 16


def _write_rows(path, rows) -> None:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _as_rows(X, names) -> tuple[np.ndarray, list[str]]:
    if isinstance(X, FeatureMatrix):
        return X.X, list(X.feature_names)
    X = np.asarray(X, dtype=float)
    return X, list(names) if names is not None else [f"x{i}" for i in range(X.shape[1])]


# -- permutation importance ---------------------------------------------------


@dataclass
class ImportanceTable:
    features: list[str]
    losses: np.ndarray  # (features, repeats); negative values are kept
    baseline: float
    seed: int
    metric: str = "auc_roc"

    @property
    def repeats(self) -> int:
        return self.losses.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.losses.mean(axis=1)

    @property
    def std(self) -> np.ndarray:
        return self.losses.std(axis=1)

    def loss_of(self, feature: str) -> np.ndarray:
        return self.losses[self.features.index(feature)]

    def to_rows(self) -> list[list]:
        rows = [["feature", "mean_loss", "std_loss", "repeats", "seed", "metric"]]
        for f, m, s in zip(self.features, self.mean, self.std):
            rows.append([f, repr(float(m)), repr(float(s)), self.repeats, self.seed, self.metric])
        return rows

    def to_csv(self, path) -> None:
        _write_rows(path, self.to_rows())


def permutation_importance(model, X, y=None, repeats: int = 10, seed: int = 0, metric: str = "auc_roc",
                           feature_names=None) -> ImportanceTable:
    """Drop in one-vs-rest AUC when one column is shuffled, per feature and repeat.

    Every feature draws from its own generator keyed by its name, so the
    table does not depend on evaluation order.
    """
    if isinstance(X, FeatureMatrix) and y is None:
        y = X.y
    Xa, names = _as_rows(X, feature_names)
    y = np.asarray(y)
    if len(Xa) < MIN_IMPORTANCE_ROWS:
        raise TooFewRowsError(f"permutation importance needs {MIN_IMPORTANCE_ROWS} rows, got {len(Xa)}")
    if repeats < 1:
        raise ValueError("repeats must be at least 1")

    def score(rows):
        return getattr(ovr_macro(y, model.predict_scores(rows), CLASSES), metric)

    base = score(Xa)
    losses = np.zeros((len(names), repeats))
    for j, name in enumerate(names):
        rng = rng_for(seed, "permute", name)
        for r in range(repeats):
            Xp = Xa.copy()
            Xp[:, j] = Xa[rng.permutation(len(Xa)), j]
            losses[j, r] = base - score(Xp)
    return ImportanceTable(names, losses, base, seed, metric)


# -- Shapley values -------------------------------------------------------------


@dataclass
class ShapleyMatrix:
    features: list[str]
    rows: np.ndarray  # explained feature values (n, p)
    values: np.ndarray  # attributions (n, p, classes)
    standard_error: np.ndarray  # per attribution (n, p, classes)
    base_values: np.ndarray  # mean output on the background (classes,)
    outputs: np.ndarray  # model output per explained row (n, classes)
    total_error: np.ndarray  # standard error of the attribution sum (n, classes)
    samples_per_row: int
    seed: int
    output: str = "proba"

    def efficiency_gap(self) -> np.ndarray:
        """``base + sum(attributions) - output`` per row and class."""
        return self.base_values + self.values.sum(axis=1) - self.outputs

    def mean_abs(self) -> np.ndarray:
        """Mean absolute attribution per (feature, class)."""
        if len(self.values) == 0:
            return np.zeros(self.values.shape[1:])
        return np.abs(self.values).mean(axis=0)

    def to_csv(self, path) -> None:
        rows = [["row", "feature", "class", "value", "attribution", "standard_error"]]
        for i in range(len(self.rows)):
            for j, f in enumerate(self.features):
                for c in range(self.values.shape[2]):
                    v = self.rows[i, j]
                    rows.append([i, f, c, "MISSING" if v != v else repr(float(v)),
                                 repr(float(self.values[i, j, c])), repr(float(self.standard_error[i, j, c]))])
        _write_rows(path, rows)


def _scorer(model, output: str):
    if output == "proba":
        return model.predict_scores
    if output == "raw":
        pipe = getattr(model, "pipeline_", None)
        if pipe is None:
            return model.decision_function
        last = pipe[-1]
        fn = getattr(last, "decision_function", None) or last.predict_scores
        return lambda X: fn(pipe[:-1].transform(X))
    raise ValueError(f"unknown output {output!r}")


def shapley_values(model, rows, background, samples_per_row: int = 128, seed: int = 0,
                   output: str = "proba", feature_names=None) -> ShapleyMatrix:
    """Permutation-sampling Shapley estimates with antithetic pairs.

    Each pair uses one random feature order and its reverse against the same
    background row. Background rows are visited in a balanced cycle, so the
    attributions of a row sum to its output minus the background mean up to
    the Monte-Carlo error of that cycle (zero when the cycle is complete).
    """
    Xr, names = _as_rows(rows, feature_names)
    Xb, bnames = _as_rows(background, feature_names if feature_names is not None else names)
    expected = getattr(model, "feature_names_", None)
    for given, got in ((rows, names), (background, bnames)):
        if expected is not None and isinstance(given, FeatureMatrix) and got != list(expected):
            raise FeatureMismatchError(f"model expects {expected}, rows carry {got}")
    if Xr.ndim != 2 or Xb.ndim != 2 or Xb.shape[1] != Xr.shape[1] or (
        expected is not None and Xr.shape[1] != len(expected)
    ):
        raise FeatureMismatchError("rows, background and model disagree on the feature count")
    if len(Xb) < MIN_BACKGROUND_ROWS:
        raise TooFewRowsError(f"background needs at least {MIN_BACKGROUND_ROWS} rows, got {len(Xb)}")
    f = _scorer(model, output)
    n, p = Xr.shape
    pairs = max(1, samples_per_row // 2)
    base = f(Xb).mean(axis=0)
    k = len(base)
    cycle = rng_for(seed, "background").permutation(len(Xb))

    values = np.zeros((n, p, k))
    se = np.zeros((n, p, k))
    total_se = np.zeros((n, k))
    outputs = f(Xr) if n else np.zeros((0, k))
    steps = np.arange(p + 1)
    for i in range(n):
        rng = rng_for(seed, "shapley", i)
        fwd = np.array([rng.permutation(p) for _ in range(pairs)])
        perms = np.empty((2 * pairs, p), dtype=np.int64)
        perms[0::2], perms[1::2] = fwd, fwd[:, ::-1]
        bg = Xb[cycle[(i * pairs + np.arange(pairs)) % len(Xb)]]
        bg = np.repeat(bg, 2, axis=0)
        position = np.argsort(perms, axis=1)  # where each feature enters
        take_x = position[:, None, :] < steps[None, :, None]
        Z = np.where(take_x, Xr[i][None, None, :], bg[:, None, :])
        F = f(Z.reshape(-1, p)).reshape(2 * pairs, p + 1, k)
        step_gain = F[:, 1:, :] - F[:, :-1, :]
        contrib = np.empty_like(step_gain)
        contrib[np.arange(2 * pairs)[:, None], perms, :] = step_gain
        pair_mean = 0.5 * (contrib[0::2] + contrib[1::2])
        values[i] = pair_mean.mean(axis=0)
        totals = pair_mean.sum(axis=1)
        if pairs > 1:
            se[i] = pair_mean.std(axis=0, ddof=1) / np.sqrt(pairs)
            total_se[i] = totals.std(axis=0, ddof=1) / np.sqrt(pairs)
    return ShapleyMatrix(names, Xr.copy(), values, se, base, outputs, total_se, samples_per_row, seed, output)


# -- rankings -------------------------------------------------------------------


@dataclass
class FeatureRankGrid:
    features: list[str]  # ordered by aggregate rank, then mean loss
    projects: list[str]
    ranks: dict[tuple[str, str], int]
    aggregate: dict[str, int]
    mean_loss: dict[str, float] = field(default_factory=dict)

    def rank(self, feature: str, project: str) -> int | None:
        return self.ranks.get((feature, project))

    def to_rows(self) -> list[list]:
        rows = [["feature", "aggregate_rank", "mean_loss", *self.projects]]
        for f in self.features:
            rows.append([f, self.aggregate[f], repr(self.mean_loss[f]),
                         *("" if self.rank(f, p) is None else self.rank(f, p) for p in self.projects)])
        return rows

    def to_csv(self, path) -> None:
        _write_rows(path, self.to_rows())

    def to_svg(self, title: str = "Feature importance rank (1 = most important)") -> str:
        grid = [[self.rank(f, p) for p in self.projects] + [self.aggregate[f]] for f in self.features]
        return rank_heatmap(title, self.features, [*self.projects, "all"], grid)


def rank_features(tables: Mapping[str, ImportanceTable]) -> FeatureRankGrid:
    """Scott-Knott ranks of features per project (observations: repeat losses)
    and across projects (observations: per-project mean losses)."""
    projects = sorted(tables)
    if not projects:
        raise TooFewRowsError("no importance tables to rank")
    if len(projects) < 2 and tables[projects[0]].repeats < 2:
        raise TooFewRowsError("ranking needs two projects or two repeats per feature")
    features = sorted({f for t in tables.values() for f in t.features})
    ranks: dict[tuple[str, str], int] = {}
    for p in projects:
        t = tables[p]
        groups = scott_knott_esd({f: t.loss_of(f) for f in t.features})
        for f, r in groups.ranks.items():
            ranks[(f, p)] = r
    common = [f for f in features if all(f in tables[p].features for p in projects)]
    per_project_mean = {f: [float(tables[p].loss_of(f).mean()) for p in projects] for f in common}
    if len(projects) >= 2:
        aggregate = scott_knott_esd(per_project_mean).ranks
    else:
        aggregate = {f: ranks[(f, projects[0])] for f in common}
    mean_loss = {f: float(np.mean(v)) for f, v in per_project_mean.items()}
    ordered = sorted(common, key=lambda f: (aggregate[f], -mean_loss[f], f))
    return FeatureRankGrid(ordered, projects, ranks, aggregate, mean_loss)


# -- impact summaries -----------------------------------------------------------

QUANTILES = {"q05": 0.05, "q25": 0.25, "q50": 0.5, "q75": 0.75, "q95": 0.95}


@dataclass
class ImpactSummary:
    feature: str
    klass: int
    pairs: np.ndarray  # (n, 2): feature value, attribution
    bands: list[dict]

    def to_csv(self, path) -> None:
        cols = ["bin", "value_low", "value_high", "count", *QUANTILES]
        rows = [cols] + [[b[c] if not isinstance(b[c], float) else repr(b[c]) for c in cols] for b in self.bands]
        _write_rows(path, rows)

    def pairs_to_csv(self, path) -> None:
        rows = [["value", "attribution"]]
        rows += [["MISSING" if v != v else repr(float(v)), repr(float(a))] for v, a in self.pairs]
        _write_rows(path, rows)

    def to_svg(self) -> str:
        labels = [b["bin"] for b in self.bands]
        return band_chart(f"Impact of {self.feature} on class {self.klass}", labels, self.bands, self.feature)


def impact_summary(shap: ShapleyMatrix, feature: str, klass: int, bins: int = 10) -> ImpactSummary:
    """Attribution quantiles within bins of the feature's value (missing values get their own bin)."""
    j = shap.features.index(feature)
    vals = shap.rows[:, j] if len(shap.rows) else np.zeros(0)
    attr = shap.values[:, j, klass] if len(shap.values) else np.zeros(0)
    pairs = np.column_stack([vals, attr]) if len(vals) else np.zeros((0, 2))
    bands = []

    def band(label, lo, hi, a):
        q = np.quantile(a, list(QUANTILES.values()))
        return {"bin": label, "value_low": float(lo), "value_high": float(hi), "count": int(len(a)),
                **{name: float(v) for name, v in zip(QUANTILES, q)}}

    present = ~np.isnan(vals)
    v, a = vals[present], attr[present]
    if len(v):
        uniq = np.unique(v)
        if len(uniq) <= bins:
            edges = np.r_[uniq, np.inf]
        else:
            edges = np.unique(np.quantile(v, np.linspace(0, 1, bins + 1), method="inverted_cdf"))
            edges = np.r_[edges[:-1], np.inf]
        which = np.searchsorted(edges, v, side="right") - 1
        for b in range(len(edges) - 1):
            sel = which == b
            if sel.any():
                bands.append(band(f"{v[sel].min():.3g}-{v[sel].max():.3g}", v[sel].min(), v[sel].max(), a[sel]))
    if (~present).any():
        bands.append(band("MISSING", np.nan, np.nan, attr[~present]))
    return ImpactSummary(feature, klass, pairs, bands)
