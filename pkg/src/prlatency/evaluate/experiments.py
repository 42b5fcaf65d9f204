"""Within-project and cross-project experiment drivers and their reports."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .._seeding import derive_seed
from ..errors import LeakageError, TooFewRowsError
from ..features import FeatureMatrix
from ..learn import CLASSES, ModelKind, resolve_hyperparams, train
from ..learn.model import MIN_TRAIN_ROWS
from ..preprocess import CORRELATION_THRESHOLD, correlation_prune
from ..svg import bar_chart
from .cv import check_no_leakage, time_series_split
from .metrics import MetricResult, ovr_macro
from .scott_knott import scott_knott_esd

NOTES = [
    "No resampling or class weights are applied; all metrics are threshold-independent.",
    "knn scores are neighbour-vote fractions and linear_svm scores are margins; AUC metrics only use their ranking.",
    "Per-project rankings use per-fold AUC-ROC as observations; the cross-project ranking uses per-project means.",
    "AUC-PR baseline is the macro mean of class prevalences in each test block.",
]


@dataclass
class FoldOutcome:
    fold: int
    train_rows: int
    test_rows: int
    result: MetricResult | None = None
    skipped: str | None = None

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "train_rows": self.train_rows,
            "test_rows": self.test_rows,
            "skipped": self.skipped,
            "metrics": None if self.result is None else self.result.to_dict(),
        }


@dataclass
class KindResult:
    folds: list[FoldOutcome]

    @property
    def evaluated(self) -> list[MetricResult]:
        return [f.result for f in self.folds if f.result is not None]

    @property
    def mean(self) -> MetricResult | None:
        ev = self.evaluated
        return MetricResult.mean_of(ev) if ev else None

    def to_dict(self) -> dict:
        m = self.mean
        return {
            "folds": [f.to_dict() for f in self.folds],
            "mean": None if m is None else {
                k: v for k, v in m.to_dict().items() if k not in ("per_class", "skipped_classes")
            },
        }


@dataclass
class EvaluationReport:
    mode: str
    role: str
    kinds: list[str]
    seed: int
    hyperparams: dict
    results: dict[str, dict[str, KindResult]]
    k: int | None = None
    average: str = "macro"
    rankings: dict = field(default_factory=dict)
    exclusions: dict = field(default_factory=dict)
    pruning: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=lambda: list(NOTES))

    @property
    def projects(self) -> list[str]:
        return sorted(self.results)

    def mean(self, project: str, kind) -> MetricResult | None:
        return self.results[project][ModelKind(kind).value].mean

    def average_over_projects(self, kind) -> MetricResult | None:
        means = [self.mean(p, kind) for p in self.projects]
        means = [m for m in means if m is not None]
        return MetricResult.mean_of(means) if means else None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "role": self.role,
            "kinds": self.kinds,
            "k": self.k,
            "seed": self.seed,
            "average": self.average,
            "hyperparameters": {k: self.hyperparams[k] for k in self.kinds},
            "results": {p: {k: r.to_dict() for k, r in kinds.items()} for p, kinds in sorted(self.results.items())},
            "rankings": self.rankings,
            "exclusions": self.exclusions,
            "pruning": self.pruning,
            "provenance": self.provenance,
            "config": self.config,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self, metric: str = "auc_roc") -> list[list[str]]:
        """Rows of projects, columns of model kinds, cells ``value (improvement%)``."""
        imp = "improvement_roc" if metric == "auc_roc" else "improvement_pr"
        kinds = [ModelKind(k) for k in self.kinds]

        def cell(m):
            return "" if m is None else f"{getattr(m, metric):.2f} ({round(getattr(m, imp))}%)"

        rows = [["project", *(k.column for k in kinds)]]
        for p in self.projects:
            rows.append([p, *(cell(self.mean(p, k)) for k in kinds)])
        rows.append(["Average", *(cell(self.average_over_projects(k)) for k in kinds)])
        return rows

    def write(self, out_dir, stem: str = "evaluation") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / f"{stem}.json"]
        written[0].write_text(self.to_json(), encoding="utf-8")
        for metric in ("auc_roc", "auc_pr"):
            buf = io.StringIO()
            csv.writer(buf, lineterminator="\n").writerows(self.table(metric))
            path = out / f"{stem}_{metric}.csv"
            path.write_text(buf.getvalue(), encoding="utf-8")
            written.append(path)
            series = {
                ModelKind(k).column: [
                    float("nan") if self.mean(p, k) is None else getattr(self.mean(p, k), metric)
                    for p in self.projects
                ]
                for k in self.kinds
            }
            svg = bar_chart(
                f"{self.mode} {self.role}: mean {metric.replace('_', '-').upper()}",
                self.projects, series, baseline=0.5 if metric == "auc_roc" else None,
            )
            path = out / f"{stem}_{metric}.svg"
            path.write_text(svg, encoding="utf-8")
            written.append(path)
        return written


def _score_fold(kind: ModelKind, train_m: FeatureMatrix, test_m: FeatureMatrix, hp: dict, seed: int,
                fold: int, average: str) -> FoldOutcome:
    out = FoldOutcome(fold, len(train_m), len(test_m))
    if len(train_m) < MIN_TRAIN_ROWS:
        out.skipped = f"fewer than {MIN_TRAIN_ROWS} training rows"
    elif len(np.unique(train_m.y)) < 2:
        out.skipped = "single class in training rows"
    elif len(np.unique(test_m.y)) < 2:
        out.skipped = "single class in test rows"
    if out.skipped:
        return out
    model = train(kind, train_m, hp=hp[kind.value], seed=seed, fold=fold)
    out.result = ovr_macro(test_m.y, model.predict_scores(test_m), CLASSES, average)
    return out


def _run_units(units, jobs: int):
    if jobs <= 1:
        return [fn() for fn in units]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda fn: fn(), units))


def _prune(matrix: FeatureMatrix, prune: bool, threshold: float, keep_priority):
    if not prune:
        return matrix, {}
    pruned, report = correlation_prune(matrix, threshold, keep_priority)
    return pruned, {"kept": list(pruned.feature_names), **report.to_dict()}


def _rank(treatments: dict[str, list[float]]) -> dict | None:
    if len(treatments) < 2 or not all(treatments.values()):
        return None
    return scott_knott_esd(treatments).to_dict()


def run_within_project(
    matrix: FeatureMatrix,
    role=None,
    kinds: Sequence = tuple(ModelKind),
    hp: Mapping | None = None,
    k: int = 5,
    seed: int = 0,
    prune: bool = True,
    keep_priority=None,
    threshold: float = CORRELATION_THRESHOLD,
    average: str = "macro",
    jobs: int = 1,
    config: Mapping | None = None,
) -> EvaluationReport:
    """Time-series CV per project for every model kind.

    Correlation pruning runs once over the whole matrix; every other fitted
    transformation is fit on each training block only.
    """
    if len(matrix) == 0:
        raise TooFewRowsError("empty feature matrix")
    kinds = [ModelKind(x) for x in kinds]
    hp_all = resolve_hyperparams(hp)
    pruned, pruning = _prune(matrix, prune, threshold, keep_priority)

    units, keys, folds_of = [], [], {}
    for project in sorted(set(pruned.projects.tolist())):
        sub = pruned.take(np.flatnonzero(pruned.projects == project)).time_sorted()
        plan = time_series_split(len(sub), k, sub.instants)
        folds_of[project] = len(plan)
        for fi, (tr, te) in enumerate(plan):
            check_no_leakage(sub.instants, tr, te)
            train_m, test_m = sub.take(np.arange(tr.start, tr.stop)), sub.take(np.arange(te.start, te.stop))
            for kind in kinds:
                s = derive_seed(seed, "within", project, kind.value, fi)
                units.append(lambda kind=kind, a=train_m, b=test_m, s=s, fi=fi:
                             _score_fold(kind, a, b, hp_all, s, fi, average))
                keys.append((project, kind.value))
    outcomes = _run_units(units, jobs)

    results: dict[str, dict[str, KindResult]] = {
        p: {kind.value: KindResult([]) for kind in kinds} for p in folds_of
    }
    for (project, kind), outcome in zip(keys, outcomes):
        results[project][kind].folds.append(outcome)

    report = EvaluationReport(
        mode="within-project",
        role=str(getattr(role, "value", role) or matrix.role.value),
        kinds=[x.value for x in kinds],
        seed=seed,
        hyperparams=hp_all,
        results=results,
        k=k,
        average=average,
        exclusions=dict(matrix.exclusions),
        pruning=pruning,
        config=dict(config or {}),
    )
    per_project = {}
    for p in report.projects:
        obs = {kn: [r.auc_roc for r in results[p][kn].evaluated] for kn in report.kinds}
        per_project[p] = _rank(obs)
    overall = {
        kn: [report.mean(p, kn).auc_roc for p in report.projects if report.mean(p, kn) is not None]
        for kn in report.kinds
    }
    report.rankings = {"per_project": per_project, "across_projects": _rank(overall)}
    return report


def run_cross_project(
    matrices,
    target: str | None = None,
    role=None,
    kinds: Sequence = (ModelKind.GBDT,),
    hp: Mapping | None = None,
    seed: int = 0,
    prune: bool = True,
    keep_priority=None,
    threshold: float = CORRELATION_THRESHOLD,
    average: str = "macro",
    jobs: int = 1,
    config: Mapping | None = None,
) -> EvaluationReport:
    """Train on every other project's rows, test on all rows of the target.

    ``target=None`` runs each project as the target in turn.
    """
    if isinstance(matrices, FeatureMatrix):
        combined = matrices
    else:
        combined = FeatureMatrix.concat([matrices[p] for p in sorted(matrices)])
    projects = sorted(set(combined.projects.tolist()))
    if len(projects) < 2:
        raise TooFewRowsError("cross-project evaluation needs at least two projects")
    targets = projects if target is None else [target]
    if target is not None and target not in projects:
        raise TooFewRowsError(f"target project {target!r} has no rows")
    kinds = [ModelKind(x) for x in kinds]
    hp_all = resolve_hyperparams(hp)
    pruned, pruning = _prune(combined, prune, threshold, keep_priority)

    units, keys, provenance = [], [], {}
    for t in targets:
        train_m = pruned.take(np.flatnonzero(pruned.projects != t)).time_sorted()
        test_m = pruned.take(np.flatnonzero(pruned.projects == t)).time_sorted()
        train_projects = sorted(set(train_m.projects.tolist()))
        if t in train_projects:
            raise LeakageError(f"target {t} leaked into its own training rows")
        provenance[t] = {"train_projects": train_projects, "train_rows": len(train_m), "test_rows": len(test_m)}
        for kind in kinds:
            s = derive_seed(seed, "cross", t, kind.value)
            units.append(lambda kind=kind, a=train_m, b=test_m, s=s: _score_fold(kind, a, b, hp_all, s, 0, average))
            keys.append((t, kind.value))
    outcomes = _run_units(units, jobs)

    results = {t: {kind.value: KindResult([]) for kind in kinds} for t in targets}
    for (t, kind), outcome in zip(keys, outcomes):
        results[t][kind].folds.append(outcome)
    report = EvaluationReport(
        mode="cross-project",
        role=str(getattr(role, "value", role) or combined.role.value),
        kinds=[x.value for x in kinds],
        seed=seed,
        hyperparams=hp_all,
        results=results,
        average=average,
        exclusions=dict(combined.exclusions),
        pruning=pruning,
        provenance=provenance,
        config=dict(config or {}),
    )
    overall = {
        kn: [report.mean(p, kn).auc_roc for p in report.projects if report.mean(p, kn) is not None]
        for kn in report.kinds
    }
    report.rankings = {"across_projects": _rank(overall)}
    return report
