"""Feature extraction at the measurement instant of each prediction target.

Maintainer-latency rows are measured at PR submission; contributor-latency
rows at the first maintainer response. Nothing observed after that instant
may influence a feature value.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import statistics
from bisect import bisect_left, bisect_right
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .actors import (
    BotRegistry,
    MaintainerLedger,
    ResponseEvent,
    first_contributor_response,
    first_maintainer_response,
)
from .errors import DomainError, MissingContextError, ParseError
from .ingest.records import (
    DELETED_ACTOR_ID,
    Dataset,
    EventKind,
    PullRequestRecord,
    format_instant,
    parse_instant,
)

WINDOW = timedelta(days=90)


class LatencyClass(enum.IntEnum):
    WITHIN_1_DAY = 0
    DAY_TO_WEEK = 1
    OVER_WEEK = 2

    @property
    def label(self) -> str:
        return self.name.lower()


CLASS_NAMES = [c.label for c in LatencyClass]


class Role(str, enum.Enum):
    MAINTAINER = "maintainer"
    CONTRIBUTOR = "contributor"


class _Missing:
    """Marks an undefined history-based value; never equal to a number."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MISSING"

    def __reduce__(self):
        return (_Missing, ())


MISSING = _Missing()
MISSING_LITERAL = "MISSING"

SHARED_FEATURES = [
    "submission_volume",
    "project_backlog",
    "maintainers_availability",
    "maintainers_responsiveness",
    "community_size",
    "contributor_experience",
    "contributor_performance",
    "contributor_backlog",
    "contributor_responsiveness",
    "description_length",
    "commits",
    "changed_lines",
    "changed_files",
]
MAINTAINER_ONLY = ["submission_day", "submission_hour"]
CONTRIBUTOR_ONLY = [
    "review_day",
    "review_hour",
    "review_latency",
    "contributor_activity",
    "participants_activity",
    "bots_activity",
]
FEATURES = {
    Role.MAINTAINER: SHARED_FEATURES + MAINTAINER_ONLY,
    Role.CONTRIBUTOR: SHARED_FEATURES + CONTRIBUTOR_ONLY,
}
ALL_FEATURES = SHARED_FEATURES + MAINTAINER_ONLY + CONTRIBUTOR_ONLY

# ordinal calendar features and their cardinality
ORDINAL_FEATURES = {"submission_day": 7, "submission_hour": 24, "review_day": 7, "review_hour": 24}


def label_latency(hours: float, day: float = 24.0, week: float = 168.0) -> LatencyClass:
    if hours < 0 or hours != hours:
        raise DomainError(f"latency must be non-negative, got {hours}")
    if hours <= day:
        return LatencyClass.WITHIN_1_DAY
    if hours <= week:
        return LatencyClass.DAY_TO_WEEK
    return LatencyClass.OVER_WEEK


def _secs(ts: datetime) -> float:
    return ts.timestamp()


def _resolution_state(transitions, t: float) -> tuple[bool, bool]:
    """(resolved, merged) at instant ``t`` from a PR's (time, kind) transitions."""
    resolved = merged = False
    for ts, kind in transitions:
        if ts > t:
            break
        if kind is EventKind.REOPENED:
            resolved = False
        else:
            resolved = True
            merged = merged or kind is EventKind.MERGED
    return resolved, merged


class _ProjectIndex:
    def __init__(self, prs, ledger: MaintainerLedger, bots: BotRegistry, responses):
        self.prs = sorted(prs, key=lambda p: (p.created_at, p.pr_number))
        self.created = [_secs(p.created_at) for p in self.prs]
        self.transitions = {}
        for p in self.prs:
            c = _secs(p.created_at)
            self.transitions[p.pr_number] = [
                (max(_secs(e.timestamp), c), e.kind)
                for e in p.events
                if e.kind in (EventKind.MERGED, EventKind.CLOSED, EventKind.REOPENED)
            ]

        # backlog bookkeeping: +1 at creation, -1/+1 at resolve/reopen transitions
        deltas = []
        for p in self.prs:
            resolved = False
            for ts, kind in self.transitions[p.pr_number]:
                now = kind is not EventKind.REOPENED
                if now != resolved:
                    deltas.append((ts, -1 if now else 1))
                    resolved = now
        deltas.sort()
        self.delta_times = [d[0] for d in deltas]
        self.delta_cum = np.concatenate([[0], np.cumsum([d[1] for d in deltas])]).astype(int)

        # activity log: PR creations and every attributed event
        actor_ids: dict[str, int] = {}
        times, actors = [], []

        def idx(a):
            return actor_ids.setdefault(a, len(actor_ids))

        for p in self.prs:
            times.append(_secs(p.created_at))
            actors.append(idx(p.author_id))
            for e in p.events:
                if e.actor_id != DELETED_ACTOR_ID:
                    times.append(_secs(e.timestamp))
                    actors.append(idx(e.actor_id))
        order = np.argsort(np.asarray(times, dtype=float), kind="stable")
        self.act_times = np.asarray(times, dtype=float)[order]
        self.act_actors = np.asarray(actors, dtype=np.int64)[order]
        n_actors = len(actor_ids)
        project = self.prs[0].project_id if self.prs else ""
        self.maint_since = np.full(n_actors, np.inf)
        self.is_bot = np.zeros(n_actors, dtype=bool)
        for a, i in actor_ids.items():
            since = ledger.since(project, a)
            if since is not None:
                self.maint_since[i] = _secs(since)
            self.is_bot[i] = bots.is_bot(a)

        # maintainer responses ordered by response instant
        fmr = []
        for p in self.prs:
            m = responses[p.key][0]
            if m is not None:
                fmr.append((_secs(m.timestamp), m.latency))
        fmr.sort()
        self.fmr_times = [f[0] for f in fmr]
        self.fmr_latency = [f[1] for f in fmr]

        self.by_author: dict[str, list[PullRequestRecord]] = defaultdict(list)
        for p in self.prs:
            self.by_author[p.author_id].append(p)

    def backlog(self, t: float) -> int:
        n_created = bisect_left(self.created, t)
        total = n_created + int(self.delta_cum[bisect_right(self.delta_times, t)])
        # transitions of PRs created exactly at t were counted without their creation
        lo, hi = bisect_left(self.created, t), bisect_right(self.created, t)
        for p in self.prs[lo:hi]:
            resolved, _ = _resolution_state(self.transitions[p.pr_number], t)
            total += int(resolved)
        return total


@dataclass
class FeatureContext:
    """Immutable lookup structures shared by all rows of a dataset."""

    dataset: Dataset
    ledger: MaintainerLedger
    bots: BotRegistry
    window: timedelta = WINDOW
    # latency class boundaries in hours: (one day, one week)
    boundaries: tuple[float, float] = (24.0, 168.0)
    responses: Mapping = field(init=False)
    projects: Mapping[str, _ProjectIndex] = field(init=False)

    def __post_init__(self):
        if self.ledger is None or self.bots is None:
            raise MissingContextError("feature extraction needs a maintainer ledger and a bot registry")
        responses = {}
        for pr in self.dataset:
            m = first_maintainer_response(pr, self.ledger, self.bots)
            c = first_contributor_response(pr, m.timestamp) if m else None
            responses[pr.key] = (m, c)
        self.responses = responses
        self.projects = {
            p: _ProjectIndex(prs, self.ledger, self.bots, responses)
            for p, prs in self.dataset.projects.items()
        }

    def maintainer_response(self, pr) -> ResponseEvent | None:
        return self.responses[pr.key][0]

    def contributor_response(self, pr) -> ResponseEvent | None:
        return self.responses[pr.key][1]


@dataclass(frozen=True)
class FeatureVector:
    key: tuple[str, int]
    role: Role
    measurement_instant: datetime
    values: Mapping[str, object]
    label: LatencyClass | None


def measurement_instant(pr: PullRequestRecord, role: Role, ctx: FeatureContext) -> datetime | None:
    if role is Role.MAINTAINER:
        return pr.created_at
    m = ctx.maintainer_response(pr)
    return m.timestamp if m else None


def _median_or_missing(values):
    return statistics.median(values) if values else MISSING


def compute_features(pr: PullRequestRecord, role: Role, ctx: FeatureContext, at: datetime) -> dict:
    """Feature values for ``pr`` as observable at instant ``at``."""
    role = Role(role)
    idx = ctx.projects[pr.project_id]
    t = _secs(at)
    w0 = t - ctx.window.total_seconds()
    vals: dict[str, object] = {}

    lo, hi = bisect_right(idx.created, w0), bisect_right(idx.created, t)
    vals["submission_volume"] = hi - lo
    vals["project_backlog"] = idx.backlog(t)

    a_lo, a_hi = np.searchsorted(idx.act_times, [w0, t], side="right")
    active = np.unique(idx.act_actors[a_lo:a_hi])
    maint = (idx.maint_since[active] <= t) & ~idx.is_bot[active]
    vals["maintainers_availability"] = int(maint.sum())
    vals["community_size"] = int((~(idx.maint_since[active] <= t) & ~idx.is_bot[active]).sum())

    r_lo, r_hi = bisect_right(idx.fmr_times, w0), bisect_right(idx.fmr_times, t)
    vals["maintainers_responsiveness"] = _median_or_missing(idx.fmr_latency[r_lo:r_hi])

    prior = [
        q for q in idx.by_author[pr.author_id] if q.pr_number != pr.pr_number and _secs(q.created_at) < t
    ]
    merged = 0
    responsiveness = []
    for q in prior:
        _, q_merged = _resolution_state(idx.transitions[q.pr_number], t)
        merged += q_merged
        c = ctx.contributor_response(q)
        if c is not None and _secs(c.timestamp) <= t:
            responsiveness.append(c.latency)
    vals["contributor_experience"] = len(prior)
    vals["contributor_performance"] = merged / len(prior) if prior else MISSING
    vals["contributor_backlog"] = sum(
        1
        for q in idx.by_author[pr.author_id]
        if _secs(q.created_at) < t and not _resolution_state(idx.transitions[q.pr_number], t)[0]
    )
    vals["contributor_responsiveness"] = _median_or_missing(responsiveness)

    vals["description_length"] = len(f"{pr.title} {pr.body}".split())
    commits = [c for c in pr.commit_stats if c.timestamp <= at]
    vals["commits"] = len(commits)
    vals["changed_lines"] = sum(c.lines_changed for c in commits)
    vals["changed_files"] = sum(c.files_changed for c in commits)

    if role is Role.MAINTAINER:
        vals["submission_day"] = pr.created_at.weekday()
        vals["submission_hour"] = pr.created_at.hour
    else:
        m = ctx.maintainer_response(pr)
        vals["review_day"] = at.weekday()
        vals["review_hour"] = at.hour
        vals["review_latency"] = m.latency if m is not None and m.timestamp <= at else MISSING
        own = part = bot = 0
        for e in pr.events:
            if e.timestamp <= pr.created_at:
                continue
            if e.timestamp > at:
                break
            if e.actor_id == pr.author_id:
                own += 1
            elif ctx.bots.is_bot(e.actor_id):
                bot += 1
            elif e.actor_id != DELETED_ACTOR_ID and not ctx.ledger.is_maintainer(pr.project_id, e.actor_id, at):
                part += 1
        vals["contributor_activity"] = own
        vals["participants_activity"] = part
        vals["bots_activity"] = bot

    return {name: vals[name] for name in FEATURES[role]}


def extract_features(pr: PullRequestRecord, role: Role, ctx: FeatureContext) -> FeatureVector | None:
    """The row for ``pr``, or ``None`` when the role's response never happened."""
    if ctx is None:
        raise MissingContextError("feature extraction needs a context")
    role = Role(role)
    at = measurement_instant(pr, role, ctx)
    if at is None:
        return None
    response = ctx.maintainer_response(pr) if role is Role.MAINTAINER else ctx.contributor_response(pr)
    if response is None:
        return None
    return FeatureVector(
        key=pr.key,
        role=role,
        measurement_instant=at,
        values=compute_features(pr, role, ctx, at),
        label=label_latency(response.latency, *ctx.boundaries),
    )


# -- matrices ----------------------------------------------------------------


@dataclass
class FeatureMatrix:
    feature_names: list[str]
    X: np.ndarray
    y: np.ndarray
    projects: np.ndarray
    pr_numbers: np.ndarray
    instants: np.ndarray  # datetime64[us], UTC
    role: Role = Role.MAINTAINER
    exclusions: dict = field(default_factory=dict)

    def __post_init__(self):
        self.role = Role(self.role)
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.y), len(self.feature_names))
        self.y = np.asarray(self.y, dtype=np.int64)
        self.projects = np.asarray(self.projects, dtype=object)
        self.pr_numbers = np.asarray(self.pr_numbers, dtype=np.int64)
        self.instants = np.asarray(self.instants, dtype="datetime64[us]")

    def __len__(self):
        return len(self.y)

    @property
    def is_time_sorted(self) -> bool:
        return bool(np.all(self.instants[1:] >= self.instants[:-1]))

    def take(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureMatrix(
            list(self.feature_names),
            self.X[rows],
            self.y[rows],
            self.projects[rows],
            self.pr_numbers[rows],
            self.instants[rows],
            self.role,
            dict(self.exclusions),
        )

    def select(self, features: Sequence[str]) -> "FeatureMatrix":
        cols = [self.feature_names.index(f) for f in features]
        return FeatureMatrix(
            list(features), self.X[:, cols], self.y, self.projects, self.pr_numbers,
            self.instants, self.role, dict(self.exclusions),
        )

    def time_sorted(self) -> "FeatureMatrix":
        order = np.lexsort((self.pr_numbers, self.projects.astype(str), self.instants))
        return self.take(order)

    @classmethod
    def concat(cls, matrices: Sequence["FeatureMatrix"]) -> "FeatureMatrix":
        first = matrices[0]
        for m in matrices[1:]:
            if m.feature_names != first.feature_names:
                raise ParseError("cannot concatenate matrices with different features")
        return cls(
            list(first.feature_names),
            np.vstack([m.X for m in matrices]),
            np.concatenate([m.y for m in matrices]),
            np.concatenate([m.projects for m in matrices]),
            np.concatenate([m.pr_numbers for m in matrices]),
            np.concatenate([m.instants for m in matrices]),
            first.role,
        ).time_sorted()

    @classmethod
    def from_vectors(cls, vectors: Sequence[FeatureVector], role: Role) -> "FeatureMatrix":
        names = FEATURES[Role(role)]
        X = np.array(
            [[np.nan if v.values[f] is MISSING else float(v.values[f]) for f in names] for v in vectors],
            dtype=float,
        ).reshape(len(vectors), len(names))
        return cls(
            list(names),
            X,
            [int(v.label) for v in vectors],
            [v.key[0] for v in vectors],
            [v.key[1] for v in vectors],
            [np.datetime64(v.measurement_instant.replace(tzinfo=None), "us") for v in vectors],
            role,
        ).time_sorted()

    # -- CSV ------------------------------------------------------------------

    def to_csv(self, path) -> None:
        path = Path(path)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["project_id", "pr_number", "measurement_instant", *self.feature_names, "label"])
        for i in range(len(self)):
            instant = self.instants[i].astype(datetime).replace(tzinfo=timezone.utc)
            writer.writerow(
                [self.projects[i], int(self.pr_numbers[i]), format_instant(instant)]
                + [_fmt(v) for v in self.X[i]]
                + [CLASS_NAMES[self.y[i]]]
            )
        path.write_text(buf.getvalue(), encoding="utf-8")
        meta = {
            "role": self.role.value,
            "features": self.feature_names,
            "classes": CLASS_NAMES,
            "missing": MISSING_LITERAL,
            "rows": len(self),
            "exclusions": self.exclusions,
        }
        Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        path = Path(path)
        meta_path = Path(str(path) + ".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:3] != ["project_id", "pr_number", "measurement_instant"] or header[-1] != "label":
                raise ParseError(f"{path}: unexpected header {header[:3]}...")
            names = header[3:-1]
            rows = list(reader)
        try:
            X = np.array([[_parse(v) for v in r[3:-1]] for r in rows], dtype=float).reshape(len(rows), len(names))
            y = [CLASS_NAMES.index(r[-1]) for r in rows]
            instants = [
                np.datetime64(parse_instant(r[2]).replace(tzinfo=None), "us") for r in rows
            ]
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}") from exc
        role = meta.get("role")
        if role is None:
            role = Role.CONTRIBUTOR if "review_latency" in names else Role.MAINTAINER
        return cls(
            names, X, y, [r[0] for r in rows], [int(r[1]) for r in rows], instants,
            role, meta.get("exclusions", {}),
        )


def _fmt(v: float) -> str:
    if v != v:
        return MISSING_LITERAL
    if float(v).is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def _parse(text: str) -> float:
    return np.nan if text == MISSING_LITERAL else float(text)


def build_dataset(dataset: Dataset, role: Role, ctx: FeatureContext) -> FeatureMatrix:
    """Rows for every human-authored PR whose ``role`` response exists, time-sorted."""
    role = Role(role)
    vectors = []
    exclusions: dict[str, dict[str, int]] = {}
    for project_id, prs in dataset.projects.items():
        counts = {"total": len(prs), "bot_authored": 0, "no_maintainer_response": 0,
                  "no_contributor_response": 0, "rows": 0}
        for pr in prs:
            if ctx.bots.is_bot(pr.author_id):
                counts["bot_authored"] += 1
                continue
            if ctx.maintainer_response(pr) is None:
                counts["no_maintainer_response"] += 1
                continue
            if role is Role.CONTRIBUTOR and ctx.contributor_response(pr) is None:
                counts["no_contributor_response"] += 1
                continue
            vectors.append(extract_features(pr, role, ctx))
            counts["rows"] += 1
        exclusions[project_id] = counts
    matrix = FeatureMatrix.from_vectors(vectors, role)
    matrix.exclusions = exclusions
    return matrix
