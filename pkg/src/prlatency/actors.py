"""Maintainer and bot identification, and first-response detection."""

from __future__ import annotations

import re
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ArchiveIOError, ParseError
from .ingest.records import (
    DELETED_ACTOR_ID,
    Dataset,
    EventKind,
    PullRequestRecord,
    hours_between,
)

PRIVILEGED_KINDS = frozenset(
    {
        EventKind.ADDED_TO_PROJECT,
        EventKind.DEPLOYED,
        EventKind.DEPLOYMENT_ENVIRONMENT_CHANGED,
        EventKind.LOCKED,
        EventKind.MERGED,
        EventKind.MOVED_COLUMNS_IN_PROJECT,
        EventKind.REMOVED_FROM_PROJECT,
        EventKind.REVIEW_DISMISSED,
        EventKind.UNLOCKED,
        EventKind.USER_BLOCKED,
    }
)
FEEDBACK_KINDS = frozenset(
    {EventKind.COMMENTED, EventKind.REVIEWED, EventKind.LINE_COMMENTED, EventKind.COMMIT_COMMENTED}
)
MAINTAINER_RESPONSE_KINDS = FEEDBACK_KINDS | {EventKind.MERGED, EventKind.CLOSED, EventKind.REOPENED}
CONTRIBUTOR_RESPONSE_KINDS = FEEDBACK_KINDS | {
    EventKind.COMMITTED,
    EventKind.HEAD_REF_FORCE_PUSHED,
    EventKind.CLOSED,
    EventKind.REOPENED,
}

# GitHub's closing keywords; the number must point at the PR itself.
_CLOSING_RE = re.compile(r"\b(?:close[sd]?|fix(?:e[sd])?|resolve[sd]?)\s*:?\s+#(\d+)\b", re.IGNORECASE)


def closes_via_message(message: str, pr_number: int) -> bool:
    return any(int(m) == pr_number for m in _CLOSING_RE.findall(message or ""))


def is_privileged(event, pr: PullRequestRecord) -> bool:
    if event.actor_id == DELETED_ACTOR_ID:
        return False
    if event.kind in PRIVILEGED_KINDS:
        return True
    if event.kind is EventKind.CLOSED and event.actor_id != pr.author_id:
        return True
    if event.kind is EventKind.COMMITTED:
        return False
    return closes_via_message(event.payload.get("message", ""), pr.pr_number)


@dataclass
class MaintainerLedger:
    """Per project, the instant each actor first used write access."""

    first_privileged: dict[str, dict[str, datetime]] = field(default_factory=dict)

    def since(self, project_id: str, actor_id: str) -> datetime | None:
        return self.first_privileged.get(project_id, {}).get(actor_id)

    def is_maintainer(self, project_id: str, actor_id: str, at: datetime) -> bool:
        t = self.since(project_id, actor_id)
        return t is not None and t <= at

    def maintainers_at(self, project_id: str, at: datetime) -> set[str]:
        return {a for a, t in self.first_privileged.get(project_id, {}).items() if t <= at}


def build_maintainer_ledger(dataset: Dataset) -> MaintainerLedger:
    ledger: dict[str, dict[str, datetime]] = {}
    for project_id, prs in dataset.projects.items():
        first: dict[str, datetime] = {}
        for pr in prs:
            for e in pr.events:
                if is_privileged(e, pr):
                    prev = first.get(e.actor_id)
                    if prev is None or e.timestamp < prev:
                        first[e.actor_id] = e.timestamp
        if first:
            ledger[project_id] = first
    return MaintainerLedger(ledger)


@dataclass
class BotRegistry:
    """Known bot accounts with one provenance tag each: ``list``, ``suffix`` or ``manual``."""

    bot_ids: dict[str, str] = field(default_factory=dict)
    allowed: set[str] = field(default_factory=set)

    def is_bot(self, actor_id: str) -> bool:
        return actor_id in self.bot_ids

    def __contains__(self, actor_id: str) -> bool:
        return actor_id in self.bot_ids


def has_bot_suffix(login: str) -> bool:
    low = login.lower()
    return low.endswith("bot") or low.endswith("[bot]")


def read_login_list(path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ArchiveIOError(f"cannot read bot list {path}: {exc}") from exc
    logins = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            logins.append(line)
    return logins


def read_overrides(path) -> tuple[set[str], set[str]]:
    """Parse ``+login`` / ``-login`` lines into (add, remove) sets of lowercase logins."""
    add, remove = set(), set()
    for lineno, line in enumerate(read_login_list(path), 1):
        sign, login = line[0], line[1:].strip()
        if sign not in "+-" or not login:
            raise ParseError(f"{path}: override line {lineno} must be +login or -login: {line!r}")
        (add if sign == "+" else remove).add(login.lower())
    return add, remove


def dataset_accounts(dataset: Dataset) -> dict[str, set[str]]:
    """Lowercase login -> account ids seen anywhere in the dataset."""
    accounts: dict[str, set[str]] = defaultdict(set)
    for pr in dataset:
        accounts[pr.author_login.lower()].add(pr.author_id)
        for e in pr.events:
            if e.actor_id != DELETED_ACTOR_ID:
                accounts[e.actor_login.lower()].add(e.actor_id)
    accounts.pop("", None)
    return accounts


def build_bot_registry(dataset: Dataset, ground_truth_lists: Iterable = (), overrides=None) -> BotRegistry:
    accounts = dataset_accounts(dataset)
    listed = {login.lower() for path in ground_truth_lists for login in read_login_list(path)}
    add, remove = read_overrides(overrides) if overrides else (set(), set())

    bots: dict[str, str] = {}
    allowed: set[str] = set()
    for login, ids in sorted(accounts.items()):
        if login in remove:
            allowed |= ids
            continue
        if login in add:
            tag = "manual"
        elif login in listed:
            tag = "list"
        elif has_bot_suffix(login):
            tag = "suffix"
        else:
            continue
        for actor_id in ids:
            bots[actor_id] = tag
    return BotRegistry(bots, allowed)


@dataclass(frozen=True)
class ResponseEvent:
    actor_id: str
    event_kind: EventKind
    timestamp: datetime
    latency: float


def first_maintainer_response(pr: PullRequestRecord, ledger: MaintainerLedger, bots: BotRegistry) -> ResponseEvent | None:
    for e in pr.events:
        if (
            e.kind in MAINTAINER_RESPONSE_KINDS
            and e.actor_id != pr.author_id
            and e.actor_id != DELETED_ACTOR_ID
            and not bots.is_bot(e.actor_id)
            and ledger.is_maintainer(pr.project_id, e.actor_id, e.timestamp)
        ):
            return ResponseEvent(e.actor_id, e.kind, e.timestamp, hours_between(pr.created_at, e.timestamp))
    return None


def first_contributor_response(pr: PullRequestRecord, t_ref: datetime) -> ResponseEvent | None:
    for e in pr.events:
        if e.timestamp > t_ref and e.actor_id == pr.author_id and e.kind in CONTRIBUTOR_RESPONSE_KINDS:
            return ResponseEvent(e.actor_id, e.kind, e.timestamp, hours_between(t_ref, e.timestamp))
    return None


# -- manual-inspection support ----------------------------------------------


@dataclass(frozen=True)
class Suspect:
    login: str
    actor_id: str
    events: int
    events_per_day: float
    median_response_seconds: float | None
    sub_minute: bool


def find_suspects(dataset: Dataset, bots: BotRegistry | None = None, top: int = 20) -> list[Suspect]:
    """Candidates for the override file: the most active non-bot actors, plus
    anyone whose median reaction to a new PR is under a minute.

    Sorted by activity, descending.
    """
    bots = bots or BotRegistry()
    counts: dict[str, int] = defaultdict(int)
    logins: dict[str, str] = {}
    first_seen: dict[str, datetime] = {}
    last_seen: dict[str, datetime] = {}
    reactions: dict[str, list[float]] = defaultdict(list)
    for pr in dataset:
        reacted = set()
        for e in pr.events:
            a = e.actor_id
            if a == DELETED_ACTOR_ID or bots.is_bot(a):
                continue
            counts[a] += 1
            logins[a] = e.actor_login
            first_seen[a] = min(first_seen.get(a, e.timestamp), e.timestamp)
            last_seen[a] = max(last_seen.get(a, e.timestamp), e.timestamp)
            if a != pr.author_id and a not in reacted:
                reacted.add(a)
                reactions[a].append(max(0.0, (e.timestamp - pr.created_at).total_seconds()))

    rows = []
    for a, n in counts.items():
        span_days = max((last_seen[a] - first_seen[a]).total_seconds() / 86400.0, 1.0)
        med = statistics.median(reactions[a]) if reactions[a] else None
        rows.append(Suspect(logins[a], a, n, n / span_days, med, med is not None and med < 60.0))
    rows.sort(key=lambda s: (-s.events, s.login))
    keep = {s.actor_id for s in rows[:top]} | {s.actor_id for s in rows if s.sub_minute}
    return [s for s in rows if s.actor_id in keep]


def responses_by_pr(dataset: Dataset, ledger: MaintainerLedger, bots: BotRegistry) -> Mapping:
    """(project, number) -> (maintainer response, contributor response)."""
    out = {}
    for pr in dataset:
        m = first_maintainer_response(pr, ledger, bots)
        c = first_contributor_response(pr, m.timestamp) if m else None
        out[pr.key] = (m, c)
    return out
