"""Timeline events and pull-request records, plus their JSON encoding."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from typing import Any, Mapping

from ..errors import ParseError

CLOCK_SKEW = timedelta(seconds=60)

# Deleted GitHub accounts surface as a null actor.
DELETED_ACTOR_ID = "ghost:deleted"
DELETED_ACTOR_LOGIN = "ghost"


class EventKind(str, enum.Enum):
    COMMENTED = "commented"
    REVIEWED = "reviewed"
    LINE_COMMENTED = "line-commented"
    COMMIT_COMMENTED = "commit-commented"
    COMMITTED = "committed"
    HEAD_REF_FORCE_PUSHED = "head_ref_force_pushed"
    MERGED = "merged"
    CLOSED = "closed"
    REOPENED = "reopened"
    LOCKED = "locked"
    UNLOCKED = "unlocked"
    ADDED_TO_PROJECT = "added_to_project"
    REMOVED_FROM_PROJECT = "removed_from_project"
    MOVED_COLUMNS_IN_PROJECT = "moved_columns_in_project"
    DEPLOYED = "deployed"
    DEPLOYMENT_ENVIRONMENT_CHANGED = "deployment_environment_changed"
    REVIEW_DISMISSED = "review_dismissed"
    USER_BLOCKED = "user_blocked"
    OTHER = "other"


_KNOWN = {k.value: k for k in EventKind if k is not EventKind.OTHER}


def parse_kind(raw: str) -> tuple[EventKind, str | None]:
    """Map a raw GitHub event name to ``(kind, raw_kind)``.

    ``raw_kind`` is only set for the catch-all ``OTHER`` kind.
    """
    kind = _KNOWN.get(raw)
    if kind is None:
        return EventKind.OTHER, raw
    return kind, None


def utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        raise ParseError(f"naive timestamp {ts!r}; all instants must be UTC-aware")
    return ts.astimezone(timezone.utc)


def parse_instant(text: str) -> datetime:
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad timestamp {text!r}") from exc
    return utc(ts)


def format_instant(ts: datetime) -> str:
    ts = utc(ts)
    if ts.microsecond:
        return ts.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def hours_between(start: datetime, end: datetime) -> float:
    return (end - start).total_seconds() / 3600.0


@dataclass(frozen=True)
class TimelineEvent:
    kind: EventKind
    actor_id: str
    actor_login: str
    timestamp: datetime
    payload: Mapping[str, Any] = field(default_factory=dict)
    raw_kind: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "timestamp", utc(self.timestamp))
        if (self.kind is EventKind.OTHER) != (self.raw_kind is not None):
            raise ParseError("raw_kind must be set exactly when kind is OTHER")

    @property
    def name(self) -> str:
        return self.raw_kind if self.kind is EventKind.OTHER else self.kind.value

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind.value,
            "actor_id": self.actor_id,
            "actor_login": self.actor_login,
            "timestamp": format_instant(self.timestamp),
            "payload": dict(self.payload),
        }
        if self.raw_kind is not None:
            d["raw_kind"] = self.raw_kind
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TimelineEvent":
        try:
            kind = EventKind(d["kind"])
            return cls(
                kind=kind,
                actor_id=str(d["actor_id"]),
                actor_login=str(d["actor_login"]),
                timestamp=parse_instant(d["timestamp"]),
                payload=dict(d.get("payload") or {}),
                raw_kind=d.get("raw_kind"),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ParseError(f"malformed event {d!r}") from exc


@dataclass(frozen=True)
class CommitStat:
    timestamp: datetime
    lines_changed: int
    files_changed: int
    sha: str = ""

    def __post_init__(self):
        object.__setattr__(self, "timestamp", utc(self.timestamp))

    def to_dict(self) -> dict:
        return {
            "sha": self.sha,
            "timestamp": format_instant(self.timestamp),
            "lines_changed": self.lines_changed,
            "files_changed": self.files_changed,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CommitStat":
        return cls(
            timestamp=parse_instant(d["timestamp"]),
            lines_changed=int(d["lines_changed"]),
            files_changed=int(d["files_changed"]),
            sha=str(d.get("sha", "")),
        )


@dataclass(frozen=True)
class PullRequestRecord:
    project_id: str
    pr_number: int
    author_id: str
    author_login: str
    title: str
    body: str
    created_at: datetime
    events: tuple[TimelineEvent, ...] = ()
    commit_stats: tuple[CommitStat, ...] = ()
    # Number of events that predated creation by more than CLOCK_SKEW and were clamped.
    clamped_events: int = 0

    def __post_init__(self):
        if self.pr_number <= 0:
            raise ParseError(f"pr_number must be positive, got {self.pr_number}")
        object.__setattr__(self, "created_at", utc(self.created_at))
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "commit_stats", tuple(self.commit_stats))

    @property
    def key(self) -> tuple[str, int]:
        return (self.project_id, self.pr_number)

    def to_dict(self) -> dict:
        return {
            "project_id": self.project_id,
            "pr_number": self.pr_number,
            "author_id": self.author_id,
            "author_login": self.author_login,
            "title": self.title,
            "body": self.body,
            "created_at": format_instant(self.created_at),
            "events": [e.to_dict() for e in self.events],
            "commit_stats": [c.to_dict() for c in self.commit_stats],
            "clamped_events": self.clamped_events,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PullRequestRecord":
        try:
            return cls(
                project_id=str(d["project_id"]),
                pr_number=int(d["pr_number"]),
                author_id=str(d["author_id"]),
                author_login=str(d["author_login"]),
                title=d.get("title") or "",
                body=d.get("body") or "",
                created_at=parse_instant(d["created_at"]),
                events=tuple(TimelineEvent.from_dict(e) for e in d.get("events", ())),
                commit_stats=tuple(CommitStat.from_dict(c) for c in d.get("commit_stats", ())),
                clamped_events=int(d.get("clamped_events", 0)),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ParseError(f"malformed pull request record: {exc}") from exc


def normalize(record: PullRequestRecord) -> PullRequestRecord:
    """Sort events by time and clamp pre-creation events to ``created_at``.

    Only events earlier than the clock-skew allowance are counted in
    ``clamped_events``. Sorting is stable, so equal-timestamp events keep
    their wire order. Idempotent.
    """
    floor = record.created_at - CLOCK_SKEW
    clamped = 0
    events = []
    for e in record.events:
        if e.timestamp < record.created_at:
            clamped += e.timestamp < floor
            e = replace(e, timestamp=record.created_at)
        events.append(e)
    events.sort(key=lambda e: e.timestamp)
    stats = sorted(record.commit_stats, key=lambda c: c.timestamp)
    return replace(
        record,
        events=tuple(events),
        commit_stats=tuple(stats),
        clamped_events=record.clamped_events + clamped,
    )


def truncate(record: PullRequestRecord, at: datetime) -> PullRequestRecord:
    """Drop every event and commit observed after ``at``."""
    return replace(
        record,
        events=tuple(e for e in record.events if e.timestamp <= at),
        commit_stats=tuple(c for c in record.commit_stats if c.timestamp <= at),
    )


@dataclass(frozen=True)
class Dataset:
    """All records grouped by project; projects sorted, PRs sorted by number."""

    projects: Mapping[str, tuple[PullRequestRecord, ...]] = field(default_factory=dict)

    @classmethod
    def from_records(cls, records) -> "Dataset":
        grouped: dict[str, dict[int, PullRequestRecord]] = {}
        for r in records:
            grouped.setdefault(r.project_id, {})[r.pr_number] = r
        return cls(
            {
                p: tuple(prs[n] for n in sorted(prs))
                for p, prs in sorted(grouped.items())
            }
        )

    def __iter__(self):
        for prs in self.projects.values():
            yield from prs

    def __len__(self):
        return sum(len(v) for v in self.projects.values())

    def truncated(self, at: datetime) -> "Dataset":
        """The dataset as it looked at instant ``at``."""
        return Dataset.from_records(
            truncate(r, at) for r in self if r.created_at <= at
        )
