"""Command-line driver: ingest, extract, evaluate, explain, predict, suspects.

Every run resolves one configuration (defaults < ``--config`` file < flags),
writes it to the output directory as ``config.json`` and embeds it in each
structured report, so a run can be repeated from its own output.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
from datetime import timedelta
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from ._seeding import derive_seed, rng_for
from .actors import build_bot_registry, build_maintainer_ledger, find_suspects
from .errors import EXIT_CODES, ArchiveIOError, AuthError, ConfigError, FeatureMismatchError, PRLatencyError
from .evaluate import run_cross_project, run_within_project, time_series_split
from .explain import MIN_IMPORTANCE_ROWS, impact_summary, permutation_importance, rank_features, shapley_values
from .features import CLASS_NAMES, FeatureContext, FeatureMatrix, Role, build_dataset
from .ingest import EventArchive, GitHubClient, load_archive, store_records
from .ingest.client import API_URL, TOKEN_ENV
from .ingest.records import Dataset, parse_instant
from .learn.model import MIN_TRAIN_ROWS
from .learn import ALL_KINDS, ModelKind, load_model, resolve_hyperparams, save_model, train
from .preprocess import CORRELATION_THRESHOLD, DEFAULT_KEEP_PRIORITY, correlation_prune

log = logging.getLogger("prlatency")


def bundled_path(*parts: str) -> Path:
    return Path(str(resources.files("prlatency").joinpath("data", *parts)))


@dataclasses.dataclass
class RunConfig:
    archive: str | None = None
    projects: list | None = None
    roles: list = dataclasses.field(default_factory=lambda: [r.value for r in Role])
    kinds: list = dataclasses.field(default_factory=lambda: [k.value for k in ALL_KINDS])
    hyperparams: dict = dataclasses.field(default_factory=dict)
    k: int = 5
    seed: int = 0
    window_days: float = 90.0
    class_boundaries_hours: list = dataclasses.field(default_factory=lambda: [24.0, 168.0])
    keep_priority: list = dataclasses.field(default_factory=lambda: list(DEFAULT_KEEP_PRIORITY))
    correlation_threshold: float = CORRELATION_THRESHOLD
    bot_lists: list | None = None
    bot_overrides: str | None = None
    output_dir: str = "out"
    mode: str = "within-project"
    average: str = "macro"
    jobs: int = 1
    explain_kind: str = "gbdt"
    permutation_repeats: int = 10
    importance_metric: str = "auc_roc"
    shap_samples: int = 128
    shap_rows: int = 100
    shap_background: int = 64
    impact_features: int = 5
    impact_class: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**data)

    def validate(self) -> "RunConfig":
        for r in self.roles:
            if r not in {x.value for x in Role}:
                raise ConfigError(f"unknown role {r!r}")
        for kind in self.kinds:
            if kind not in {x.value for x in ModelKind}:
                raise ConfigError(f"unknown model kind {kind!r}")
        if self.explain_kind not in {x.value for x in ModelKind}:
            raise ConfigError(f"unknown model kind {self.explain_kind!r}")
        if self.mode not in ("within-project", "cross-project"):
            raise ConfigError(f"mode must be within-project or cross-project, got {self.mode!r}")
        if self.average not in ("macro", "weighted"):
            raise ConfigError("average must be macro or weighted")
        if self.importance_metric not in ("auc_roc", "auc_pr"):
            raise ConfigError("importance_metric must be auc_roc or auc_pr")
        day, week = self.class_boundaries_hours
        if not 0 < day < week:
            raise ConfigError("class boundaries must satisfy 0 < day < week")
        if self.k < 2 or self.window_days <= 0 or self.jobs < 1:
            raise ConfigError("k >= 2, window_days > 0 and jobs >= 1 are required")
        if self.impact_class not in range(len(CLASS_NAMES)):
            raise ConfigError("impact_class must be 0, 1 or 2")
        resolve_hyperparams(self.hyperparams)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def resolve_config(args) -> RunConfig:
    data = load_config(args.config) if getattr(args, "config", None) else {}
    cfg = RunConfig.from_dict(data)
    overrides = {
        "archive": getattr(args, "archive", None),
        "seed": getattr(args, "seed", None),
        "jobs": getattr(args, "jobs", None),
        "output_dir": getattr(args, "out", None),
        "k": getattr(args, "k", None),
        "mode": getattr(args, "mode", None),
        "projects": getattr(args, "project", None),
        "roles": getattr(args, "role", None),
        "kinds": getattr(args, "kind", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if cfg.archive is not None:
        cfg.archive = str(cfg.archive)
    return cfg.validate()


def write_config(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, rows) -> None:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _slug_file(project: str) -> str:
    return project.replace("/", "__")


# -- shared pipeline steps ------------------------------------------------------


def _dataset(cfg: RunConfig) -> Dataset:
    if cfg.archive is None:
        raise ConfigError("an --archive (or 'archive' in the config) is required")
    dataset = load_archive(cfg.archive)
    if cfg.projects:
        missing = sorted(set(cfg.projects) - set(dataset.projects))
        if missing:
            raise ConfigError(f"projects not in archive: {', '.join(missing)}")
        dataset = Dataset({p: dataset.projects[p] for p in sorted(cfg.projects)})
    return dataset


def _context(cfg: RunConfig, dataset: Dataset) -> FeatureContext:
    lists = cfg.bot_lists if cfg.bot_lists is not None else [str(bundled_path("bots.txt"))]
    bots = build_bot_registry(dataset, lists, cfg.bot_overrides)
    ledger = build_maintainer_ledger(dataset)
    return FeatureContext(
        dataset, ledger, bots, timedelta(days=cfg.window_days), tuple(cfg.class_boundaries_hours)
    )


def _matrices(cfg: RunConfig) -> dict[str, FeatureMatrix]:
    dataset = _dataset(cfg)
    ctx = _context(cfg, dataset)
    return {role: build_dataset(dataset, Role(role), ctx) for role in cfg.roles}


# -- subcommands -----------------------------------------------------------------


def cmd_ingest(args) -> int:
    token = os.environ.get(TOKEN_ENV) or None
    if args.require_auth and not token:
        raise AuthError(f"--require-auth given but {TOKEN_ENV} is not set")
    if not args.archive:
        raise ConfigError("--archive is required")
    since = parse_instant(args.since) if args.since else None
    archive = EventArchive.open(args.archive, create=True)
    summary = {}
    with GitHubClient(token=token, base_url=args.base_url, jobs=args.jobs or 4) as client:
        for repo in args.repo:
            records = client.fetch_records(repo, since, commit_stats=not args.no_commit_stats)
            delta = store_records(archive, records).get(repo, {"added": 0, "replaced": 0, "unchanged": 0})
            summary[repo] = {
                "pull_requests": len(records),
                "events": sum(len(r.events) for r in records),
                "commits": sum(len(r.commit_stats) for r in records),
                **delta,
            }
            print(
                f"{repo}: fetched {len(records)} pull requests, {summary[repo]['events']} events; "
                f"added {delta['added']}, replaced {delta['replaced']}, unchanged {delta['unchanged']}"
            )
    return 0


def cmd_extract(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.output_dir)
    write_config(cfg, out)
    exclusions = {}
    for role, matrix in _matrices(cfg).items():
        target = out / "features" / role
        target.mkdir(parents=True, exist_ok=True)
        for project in sorted(matrix.exclusions):
            sub = matrix.take(np.flatnonzero(matrix.projects == project))
            sub.exclusions = {project: matrix.exclusions[project]}
            sub.to_csv(target / f"{_slug_file(project)}.csv")
        exclusions[role] = matrix.exclusions
        print(f"{role}: {len(matrix)} rows over {len(matrix.exclusions)} projects")
    (out / "exclusions.json").write_text(json.dumps(exclusions, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.output_dir)
    write_config(cfg, out)
    for role, matrix in _matrices(cfg).items():
        common = dict(
            role=role, kinds=cfg.kinds, hp=cfg.hyperparams, seed=cfg.seed,
            keep_priority=cfg.keep_priority, threshold=cfg.correlation_threshold,
            average=cfg.average, jobs=cfg.jobs, config=cfg.to_dict(),
        )
        if cfg.mode == "within-project":
            report = run_within_project(matrix, k=cfg.k, **common)
        else:
            report = run_cross_project(matrix, **common)
        stem = f"evaluation_{role}"
        report.write(out, stem)
        for row in report.table("auc_roc"):
            print(f"[{role}] " + " | ".join(row))
        if args.save_models:
            pruned, _ = correlation_prune(matrix, cfg.correlation_threshold, cfg.keep_priority)
            for project in sorted(set(pruned.projects.tolist())):
                sub = pruned.take(np.flatnonzero(pruned.projects == project))
                for kind in args.save_models:
                    model = train(kind, sub, hp=cfg.hyperparams, seed=derive_seed(cfg.seed, "deploy", project, kind))
                    save_model(model, out / "models" / role / f"{_slug_file(project)}__{kind}.model")
    return 0


def _explain_cut(sub: FeatureMatrix, k: int) -> tuple[int, int | None]:
    """Train/test boundary for explanations: the last time-series fold, or the
    trailing 20 rows when that fold's test block is smaller."""
    n = len(sub)
    if n >= k + 1:
        plan = time_series_split(n, k, sub.instants)
        cut = plan.splits[-1][1].start
        if n - cut >= MIN_IMPORTANCE_ROWS:
            return cut, len(plan) - 1
    cut = max(n - MIN_IMPORTANCE_ROWS, 0)
    while 0 < cut and sub.instants[cut - 1] == sub.instants[cut]:
        cut -= 1
    return cut, None


def _explain_role(cfg: RunConfig, role: str, matrix: FeatureMatrix, out: Path, model_path) -> dict:
    pruned, _ = correlation_prune(matrix, cfg.correlation_threshold, cfg.keep_priority)
    given = load_model(model_path) if model_path else None
    tables, summary = {}, {"projects": {}, "skipped": {}}
    for project in sorted(set(pruned.projects.tolist())):
        sub = pruned.take(np.flatnonzero(pruned.projects == project)).time_sorted()
        cut, fold = _explain_cut(sub, cfg.k)
        tr, te = range(0, cut), range(cut, len(sub))
        train_m, test_m = sub.take(np.arange(tr.start, tr.stop)), sub.take(np.arange(te.start, te.stop))
        if len(np.unique(test_m.y)) < 2 or len(test_m) < MIN_IMPORTANCE_ROWS or len(train_m) < MIN_TRAIN_ROWS:
            summary["skipped"][project] = "explanation split has too few rows or a single test class"
            continue
        if given is not None:
            model = given
            if list(model.feature_names_) != list(test_m.feature_names):
                missing = [f for f in model.feature_names_ if f not in matrix.feature_names]
                if missing:
                    raise FeatureMismatchError(f"model features {missing} are not extracted for {role}")
                full = matrix.take(np.flatnonzero(matrix.projects == project)).time_sorted()
                train_m = full.take(np.arange(tr.start, tr.stop)).select(model.feature_names_)
                test_m = full.take(np.arange(te.start, te.stop)).select(model.feature_names_)
        else:
            model = train(cfg.explain_kind, train_m, hp=cfg.hyperparams,
                          seed=derive_seed(cfg.seed, "explain", project), fold=fold)
            save_model(model, out / "models" / role / f"{_slug_file(project)}__{cfg.explain_kind}.model")
        table = permutation_importance(model, test_m, repeats=cfg.permutation_repeats,
                                       seed=derive_seed(cfg.seed, "importance", project),
                                       metric=cfg.importance_metric)
        tables[project] = table
        slug = _slug_file(project)
        table.to_csv(out / f"importance_{role}_{slug}.csv")
        entry = {
            "baseline": table.baseline,
            "importance": {f: {"mean": float(m), "std": float(s)} for f, m, s in zip(table.features, table.mean, table.std)},
        }
        bg_rows = min(cfg.shap_background, len(train_m))
        if bg_rows >= 16:
            pick = np.sort(rng_for(cfg.seed, "background", project).choice(len(train_m), bg_rows, replace=False))
            rows = test_m.take(np.arange(min(cfg.shap_rows, len(test_m))))
            shap = shapley_values(model, rows, train_m.take(pick), cfg.shap_samples,
                                  derive_seed(cfg.seed, "shapley", project))
            shap.to_csv(out / f"shapley_{role}_{slug}.csv")
            entry["shapley"] = {
                "rows": len(rows),
                "base_values": shap.base_values.tolist(),
                "mean_abs": {f: shap.mean_abs()[j].tolist() for j, f in enumerate(shap.features)},
                "max_efficiency_gap": float(np.abs(shap.efficiency_gap()).max()) if len(rows) else 0.0,
            }
            top = [f for f, _ in sorted(zip(table.features, table.mean), key=lambda t: (-t[1], t[0]))]
            for f in top[: cfg.impact_features]:
                summ = impact_summary(shap, f, cfg.impact_class)
                summ.to_csv(out / f"impact_{role}_{slug}_{f}.csv")
                (out / f"impact_{role}_{slug}_{f}.svg").write_text(summ.to_svg(), encoding="utf-8")
        else:
            summary["skipped"][f"{project} (shapley)"] = "fewer than 16 background rows"
        summary["projects"][project] = entry
    if tables and (len(tables) >= 2 or cfg.permutation_repeats >= 2):
        grid = rank_features(tables)
        grid.to_csv(out / f"feature_ranks_{role}.csv")
        (out / f"feature_ranks_{role}.svg").write_text(grid.to_svg(), encoding="utf-8")
        summary["ranks"] = {
            "aggregate": grid.aggregate,
            "per_project": {p: {f: grid.rank(f, p) for f in grid.features} for p in grid.projects},
            "order": grid.features,
        }
    return summary


def cmd_explain(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.output_dir)
    if args.model and not Path(args.model).is_file():
        raise ArchiveIOError(f"model file {args.model} does not exist")
    write_config(cfg, out)
    report = {"config": cfg.to_dict(), "roles": {}}
    for role, matrix in _matrices(cfg).items():
        report["roles"][role] = _explain_role(cfg, role, matrix, out, args.model)
        print(f"{role}: explained {len(report['roles'][role]['projects'])} projects")
    (out / "explain.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    matrix = FeatureMatrix.from_csv(args.features)
    names = list(model.feature_names_)
    missing = [f for f in names if f not in matrix.feature_names]
    if missing:
        raise FeatureMismatchError(f"feature CSV lacks model features: {', '.join(missing)}")
    scores = model.predict_scores(matrix.select(names))
    pred = np.argmax(scores, axis=1)
    kind = ModelKind(model.kind)
    prefix = "p" if kind.emits_probabilities else "score"
    rows = [["project_id", "pr_number", "predicted", *(f"{prefix}_{c.replace(' ', '_')}" for c in CLASS_NAMES)]]
    for i in range(len(matrix)):
        rows.append([matrix.projects[i], int(matrix.pr_numbers[i]), CLASS_NAMES[pred[i]],
                     *(repr(float(v)) for v in scores[i])])
    out = Path(args.output) if args.output else Path(args.out or "out") / "predictions.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, rows)
    print(f"wrote {len(matrix)} predictions to {out}")
    return 0


def cmd_suspects(args) -> int:
    cfg = resolve_config(args)
    dataset = _dataset(cfg)
    lists = cfg.bot_lists if cfg.bot_lists is not None else [str(bundled_path("bots.txt"))]
    bots = build_bot_registry(dataset, lists, cfg.bot_overrides)
    suspects = find_suspects(dataset, bots, top=args.top)
    rows = [["login", "actor_id", "events", "events_per_day", "median_response_seconds", "sub_minute"]]
    for s in suspects:
        rows.append([s.login, s.actor_id, s.events, f"{s.events_per_day:.3f}",
                     "" if s.median_response_seconds is None else f"{s.median_response_seconds:.1f}",
                     "yes" if s.sub_minute else "no"])
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "suspects.csv", rows)
    for r in rows:
        print("\t".join(str(c) for c in r))
    return 0


# -- argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--archive", help="event archive directory")
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="top-level seed")
    common.add_argument("--jobs", type=int, help="worker pool size")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    selection = argparse.ArgumentParser(add_help=False)
    selection.add_argument("--project", action="append", help="restrict to a project (repeatable)")
    selection.add_argument("--role", action="append", choices=[r.value for r in Role])

    parser = argparse.ArgumentParser(prog="prlatency", description="Predict first-response latency of pull requests.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help=f"fetch pull requests into an archive (token from {TOKEN_ENV})")
    p.add_argument("--repo", action="append", required=True, help="owner/name (repeatable)")
    p.add_argument("--since", help="only pull requests created at or after this ISO instant")
    p.add_argument("--base-url", default=API_URL, help="API root (for mirrors and the offline mock)")
    p.add_argument("--require-auth", action="store_true", help=f"fail unless {TOKEN_ENV} is set")
    p.add_argument("--no-commit-stats", action="store_true", help="skip per-commit size requests")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", parents=[common, selection], help="write feature CSVs and exclusion counts")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", parents=[common, selection], help="cross-validate the model kinds")
    p.add_argument("--kind", action="append", choices=[k.value for k in ModelKind])
    p.add_argument("--k", type=int, help="number of time-series folds")
    p.add_argument("--mode", choices=["within-project", "cross-project"])
    p.add_argument("--save-models", nargs="*", choices=[k.value for k in ModelKind], default=None,
                   help="also fit these kinds on each full project and save them")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", parents=[common, selection], help="feature importance, Shapley values, ranks")
    p.add_argument("--model", help="explain this saved model instead of training one per project")
    p.add_argument("--k", type=int, help="number of time-series folds")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("predict", parents=[common], help="score a feature CSV with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True, help="feature CSV as written by extract")
    p.add_argument("--output", help="predictions CSV (default: OUT/predictions.csv)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("suspects", parents=[common], help="list accounts worth a manual bot check")
    p.add_argument("--top", type=int, default=20)
    p.set_defaults(func=cmd_suspects)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except PRLatencyError as exc:
        print(f"error ({type(exc).__name__}, exit {exc.exit_code}): {exc}", file=sys.stderr)
        return exc.exit_code


__all__ = ["EXIT_CODES", "RunConfig", "build_parser", "main", "resolve_config"]

if __name__ == "__main__":
    sys.exit(main())
