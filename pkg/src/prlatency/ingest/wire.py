"""Translation between GitHub REST v3 JSON and our record types.

The reverse direction (records to wire JSON) exists so the offline mock
server can serve any archived dataset.
"""

from __future__ import annotations

from typing import Any, Mapping

from ..errors import ParseError
from .records import (
    DELETED_ACTOR_ID,
    DELETED_ACTOR_LOGIN,
    CommitStat,
    EventKind,
    PullRequestRecord,
    TimelineEvent,
    format_instant,
    parse_instant,
    parse_kind,
)

_PAYLOAD_KEYS = ("sha", "commit_id", "message", "state")


def _account(user: Mapping[str, Any] | None) -> tuple[str, str]:
    if not user:
        return DELETED_ACTOR_ID, DELETED_ACTOR_LOGIN
    return str(user["id"]), str(user["login"])


def pull_from_wire(project_id: str, item: Mapping[str, Any]) -> PullRequestRecord:
    try:
        author_id, author_login = _account(item.get("user"))
        return PullRequestRecord(
            project_id=project_id,
            pr_number=int(item["number"]),
            author_id=author_id,
            author_login=author_login,
            title=item.get("title") or "",
            body=item.get("body") or "",
            created_at=parse_instant(item["created_at"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed pull request item: {exc}") from exc


def event_from_wire(item: Mapping[str, Any], pr_author: tuple[str, str] | None = None) -> TimelineEvent:
    """Map one timeline item.

    ``committed`` items carry a git identity rather than an account; they are
    attributed to the PR author unless the item names an ``actor``.
    """
    raw = item.get("event")
    if not raw:
        raise ParseError(f"timeline item without event name: {item!r}")
    kind, raw_kind = parse_kind(raw)
    comments = item.get("comments") or []
    first = comments[0] if comments else {}

    if "actor" in item:
        actor = _account(item["actor"])
    elif "user" in item:
        actor = _account(item["user"])
    elif kind is EventKind.COMMITTED and pr_author is not None:
        actor = pr_author
    elif comments:
        actor = _account(first.get("user"))
    else:
        actor = (DELETED_ACTOR_ID, DELETED_ACTOR_LOGIN)

    stamp = (
        item.get("created_at")
        or item.get("submitted_at")
        or (item.get("author") or {}).get("date")
        or (item.get("committer") or {}).get("date")
        or first.get("created_at")
    )
    if stamp is None:
        raise ParseError(f"timeline item without timestamp: {raw}")

    payload = {k: item[k] for k in _PAYLOAD_KEYS if item.get(k) is not None}
    body = item.get("body", first.get("body"))
    if body is not None:
        payload["body_length"] = len(body)
    return TimelineEvent(
        kind=kind,
        actor_id=actor[0],
        actor_login=actor[1],
        timestamp=parse_instant(stamp),
        payload=payload,
        raw_kind=raw_kind,
    )


def commit_stat_from_wire(item: Mapping[str, Any], detail: Mapping[str, Any]) -> CommitStat:
    commit = item.get("commit") or {}
    stamp = (commit.get("author") or {}).get("date") or (commit.get("committer") or {}).get("date")
    stats = detail.get("stats") or {}
    return CommitStat(
        timestamp=parse_instant(stamp),
        lines_changed=int(stats.get("total", stats.get("additions", 0) + stats.get("deletions", 0))),
        files_changed=len(detail.get("files") or []),
        sha=str(item["sha"]),
    )


# -- rendering ---------------------------------------------------------------


def _user(actor_id: str, login: str):
    if actor_id == DELETED_ACTOR_ID:
        return None
    return {"login": login, "id": int(actor_id) if actor_id.isdigit() else actor_id}


def pull_to_wire(r: PullRequestRecord) -> dict:
    return {
        "number": r.pr_number,
        "title": r.title,
        "body": r.body,
        "user": _user(r.author_id, r.author_login),
        "created_at": format_instant(r.created_at),
        "state": "closed"
        if any(e.kind in (EventKind.MERGED, EventKind.CLOSED) for e in r.events)
        else "open",
    }


def _filler(n: int) -> str:
    return ("lgtm " * (n // 5 + 1))[:n]


def event_to_wire(e: TimelineEvent, pr_author_id: str | None = None) -> dict:
    payload = dict(e.payload)
    body_length = payload.pop("body_length", None)
    ts = format_instant(e.timestamp)
    user = _user(e.actor_id, e.actor_login)
    if e.kind is EventKind.COMMITTED:
        item = {
            "event": e.name,
            "author": {"name": e.actor_login, "date": ts},
            "committer": {"name": e.actor_login, "date": ts},
        }
        if e.actor_id != pr_author_id:
            item["actor"] = user
    elif e.kind in (EventKind.LINE_COMMENTED, EventKind.COMMIT_COMMENTED):
        comment = {"user": user, "created_at": ts}
        if body_length is not None:
            comment["body"] = _filler(body_length)
        item = {"event": e.name, "comments": [comment]}
        body_length = None
    elif e.kind is EventKind.REVIEWED:
        item = {"event": e.name, "user": user, "submitted_at": ts}
    else:
        item = {"event": e.name, "actor": user, "created_at": ts}
    if body_length is not None:
        item["body"] = _filler(body_length)
    item.update(payload)
    return item


def commits_to_wire(r: PullRequestRecord) -> tuple[list[dict], dict[str, dict]]:
    items, details = [], {}
    for i, c in enumerate(r.commit_stats):
        sha = c.sha or f"{r.pr_number:06d}{i:034d}"
        ts = format_instant(c.timestamp)
        items.append({"sha": sha, "commit": {"author": {"date": ts}, "committer": {"date": ts}}})
        details[sha] = {
            "sha": sha,
            "stats": {"total": c.lines_changed},
            "files": [{"filename": f"f{j}"} for j in range(c.files_changed)],
        }
    return items, details
