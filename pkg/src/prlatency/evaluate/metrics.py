"""Rank-based binary metrics and their one-vs-rest macro aggregation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from ..errors import DegenerateError


def _binary(y_true, scores):
    y = np.asarray(y_true).astype(bool)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape or y.ndim != 1:
        raise ValueError("y_true and scores must be 1-d and equally long")
    npos = int(y.sum())
    if npos == 0 or npos == len(y):
        raise DegenerateError("both classes must be present")
    return y, s, npos


def auc_roc(y_true, scores) -> float:
    """Mann-Whitney U / (n_pos * n_neg), ties counted one half via mid-ranks."""
    y, s, npos = _binary(y_true, scores)
    nneg = len(y) - npos
    r = rankdata(s)
    u = r[y].sum() - npos * (npos + 1) / 2.0
    return float(u / (npos * nneg))


def auc_pr(y_true, scores) -> float:
    """Average precision: sum over distinct thresholds of precision times the
    recall increment, without interpolation."""
    y, s, npos = _binary(y_true, scores)
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    tp = np.cumsum(y[order])
    # last index of each block of tied scores
    ends = np.r_[np.flatnonzero(np.diff(s_sorted)), len(s_sorted) - 1]
    tp_t = tp[ends].astype(float)
    precision = tp_t / (ends + 1)
    recall = tp_t / npos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass
class MetricResult:
    auc_roc: float
    auc_pr: float
    baseline_roc: float
    baseline_pr: float
    improvement_roc: float  # percent: 100 * (value - baseline) / baseline
    improvement_pr: float
    per_class: dict = field(default_factory=dict)
    skipped_classes: list = field(default_factory=list)

    @classmethod
    def from_values(cls, roc, pr, baseline_pr, per_class=None, skipped=None) -> "MetricResult":
        return cls(
            float(roc), float(pr), 0.5, float(baseline_pr),
            100.0 * (roc - 0.5) / 0.5, 100.0 * (pr - baseline_pr) / baseline_pr,
            per_class or {}, list(skipped or []),
        )

    @classmethod
    def mean_of(cls, results) -> "MetricResult":
        results = list(results)
        return cls.from_values(
            float(np.mean([r.auc_roc for r in results])),
            float(np.mean([r.auc_pr for r in results])),
            float(np.mean([r.baseline_pr for r in results])),
        )

    def to_dict(self) -> dict:
        return asdict(self)


def ovr_macro(y_true, score_matrix, classes=(0, 1, 2), average: str = "macro") -> MetricResult:
    """One-vs-rest AUC-ROC and AUC-PR averaged over the classes present.

    The no-skill AUC-PR of a class is its prevalence, so the baseline is the
    same average taken over prevalences. ``average="weighted"`` weights each
    class by its prevalence instead of equally.
    """
    y = np.asarray(y_true)
    S = np.asarray(score_matrix, dtype=float)
    if S.shape != (len(y), len(classes)):
        raise ValueError(f"score matrix shape {S.shape} does not match {len(y)} rows x {len(classes)} classes")
    present = [i for i, c in enumerate(classes) if np.any(y == c)]
    if len(present) < 2:
        raise DegenerateError("at least two classes must be present")
    rocs, prs, prev, per_class = [], [], [], {}
    for i in present:
        yb = y == classes[i]
        r, p = auc_roc(yb, S[:, i]), auc_pr(yb, S[:, i])
        rocs.append(r)
        prs.append(p)
        prev.append(float(yb.mean()))
        per_class[str(classes[i])] = {"auc_roc": r, "auc_pr": p, "prevalence": prev[-1]}
    if average == "macro":
        w = np.full(len(present), 1.0 / len(present))
    elif average == "weighted":
        w = np.asarray(prev) / np.sum(prev)
    else:
        raise ValueError(f"unknown averaging {average!r}")
    skipped = [classes[i] for i in range(len(classes)) if i not in present]
    return MetricResult.from_values(
        float(np.dot(w, rocs)), float(np.dot(w, prs)), float(np.dot(w, prev)), per_class, skipped
    )
