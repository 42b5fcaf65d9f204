"""GitHub REST v3 client for pull requests, timelines and commit stats."""

from __future__ import annotations

import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime
from typing import Callable, Iterator

import httpx

from ..errors import AuthError, NotFoundError, ParseError, RateLimitedError, TransportError
from .records import CommitStat, PullRequestRecord, TimelineEvent, normalize
from .wire import commit_stat_from_wire, event_from_wire, pull_from_wire

logger = logging.getLogger(__name__)

API_URL = "https://api.github.com"
TOKEN_ENV = "GITHUB_TOKEN"
_REPO_RE = re.compile(r"^[A-Za-z0-9_.-]+/[A-Za-z0-9_.-]+$")


def check_repo(repo: str) -> str:
    if not _REPO_RE.match(repo or "") or any(part in (".", "..") for part in repo.split("/")):
        raise ParseError(f"repository must look like owner/name, got {repo!r}")
    return repo


class _RateBudget:
    """Rate-limit state shared by all in-flight requests of one client."""

    def __init__(self):
        self._lock = threading.Lock()
        self.remaining: int | None = None
        self.reset: float | None = None

    def update(self, headers) -> None:
        remaining = headers.get("X-RateLimit-Remaining")
        reset = headers.get("X-RateLimit-Reset")
        with self._lock:
            if remaining is not None:
                self.remaining = int(remaining)
            if reset is not None:
                self.reset = float(reset)

    def wait_time(self, now: float) -> float:
        with self._lock:
            if self.remaining is not None and self.remaining <= 0 and self.reset is not None:
                return max(self.reset - now, 0.0)
            return 0.0

    def consume_reset(self) -> None:
        with self._lock:
            self.remaining = None


class GitHubClient:
    """Synchronous client; timeline fetches fan out over a small thread pool.

    ``sleep`` and ``clock`` are injectable so tests never actually wait.
    """

    def __init__(
        self,
        token: str | None = None,
        base_url: str = API_URL,
        per_page: int = 100,
        max_attempts: int = 5,
        backoff_base: float = 1.0,
        jobs: int = 4,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.time,
        timeout: float = 30.0,
    ):
        self.token = token
        self.per_page = per_page
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.jobs = max(1, jobs)
        self._sleep = sleep
        self._clock = clock
        self._budget = _RateBudget()
        headers = {"Accept": "application/vnd.github+json"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._http = httpx.Client(base_url=base_url.rstrip("/"), headers=headers, timeout=timeout)

    @classmethod
    def from_env(cls, **kwargs) -> "GitHubClient":
        return cls(token=os.environ.get(TOKEN_ENV) or None, **kwargs)

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- transport ----------------------------------------------------------

    def _get(self, url: str, params: dict | None = None) -> httpx.Response:
        last_error: Exception | None = None
        rate_limited = False
        for attempt in range(self.max_attempts):
            wait = self._budget.wait_time(self._clock())
            if wait > 0:
                logger.warning("rate limit exhausted; sleeping %.0f s until reset", wait)
                self._sleep(wait)
                self._budget.consume_reset()
            try:
                resp = self._http.get(url, params=params)
            except httpx.HTTPError as exc:
                last_error, rate_limited = exc, False
                self._sleep(self.backoff_base * 2**attempt)
                continue
            self._budget.update(resp.headers)
            status = resp.status_code
            if status < 300:
                return resp
            if status == 401:
                raise AuthError(f"GET {url}: 401 bad credentials")
            if status == 404:
                raise NotFoundError(f"GET {url}: 404 not found")
            if status in (403, 429):
                if resp.headers.get("X-RateLimit-Remaining") == "0":
                    # primary limit: the next loop iteration sleeps until reset
                    last_error, rate_limited = RateLimitedError(f"GET {url}: rate limited"), True
                    continue
                retry_after = resp.headers.get("Retry-After")
                if retry_after is not None or "secondary rate limit" in resp.text.lower():
                    last_error, rate_limited = RateLimitedError(f"GET {url}: secondary rate limit"), True
                    delay = float(retry_after) if retry_after else self.backoff_base * 2**attempt
                    self._sleep(delay)
                    continue
                raise AuthError(f"GET {url}: {status} forbidden")
            if status >= 500:
                last_error, rate_limited = TransportError(f"GET {url}: HTTP {status}"), False
                self._sleep(self.backoff_base * 2**attempt)
                continue
            raise TransportError(f"GET {url}: unexpected HTTP {status}")
        if rate_limited:
            raise RateLimitedError(f"GET {url}: retry budget exhausted") from last_error
        raise TransportError(f"GET {url}: retry budget exhausted ({last_error})") from last_error

    def _pages(self, url: str, params: dict | None = None) -> Iterator[list]:
        """Yield pages, following ``Link: rel=next`` only; never guesses a page number."""
        params = {**(params or {}), "per_page": self.per_page}
        resp = self._get(url, params)
        while True:
            data = resp.json()
            if not isinstance(data, list):
                raise TransportError(f"expected a JSON list from {url}")
            yield data
            nxt = resp.links.get("next", {}).get("url")
            if not nxt or not data:
                return
            resp = self._get(nxt)

    # -- endpoints ----------------------------------------------------------

    def fetch_pull_requests(self, repo: str, since: datetime | None = None) -> Iterator[PullRequestRecord]:
        """Newest first; stops paging once PRs older than ``since`` show up."""
        check_repo(repo)
        params = {"state": "all", "sort": "created", "direction": "desc"}
        for page in self._pages(f"/repos/{repo}/pulls", params):
            older_seen = False
            for item in page:
                rec = pull_from_wire(repo, item)
                if since is not None and rec.created_at < since:
                    older_seen = True
                    continue
                yield rec
            if older_seen:
                return

    def fetch_timeline(self, repo: str, pr_number: int, author: tuple[str, str] | None = None) -> list[TimelineEvent]:
        check_repo(repo)
        events = []
        for page in self._pages(f"/repos/{repo}/issues/{pr_number}/timeline"):
            events.extend(event_from_wire(item, author) for item in page)
        events.sort(key=lambda e: e.timestamp)
        return events

    def fetch_commit_stats(self, repo: str, pr_number: int) -> list[CommitStat]:
        check_repo(repo)
        stats = []
        for page in self._pages(f"/repos/{repo}/pulls/{pr_number}/commits"):
            for item in page:
                detail = self._get(f"/repos/{repo}/commits/{item['sha']}").json()
                stats.append(commit_stat_from_wire(item, detail))
        return stats

    def fetch_records(self, repo: str, since: datetime | None = None, commit_stats: bool = True) -> list[PullRequestRecord]:
        """Full records (metadata, timeline, commits), in PR-number order."""
        heads = sorted(self.fetch_pull_requests(repo, since), key=lambda r: r.pr_number)

        def fill(rec: PullRequestRecord) -> PullRequestRecord:
            events = self.fetch_timeline(repo, rec.pr_number, (rec.author_id, rec.author_login))
            commits = self.fetch_commit_stats(repo, rec.pr_number) if commit_stats else []
            return normalize(replace(rec, events=tuple(events), commit_stats=tuple(commits)))

        if self.jobs == 1:
            return [fill(r) for r in heads]
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            return list(pool.map(fill, heads))


def fetch_pull_requests(repo, since=None, auth=None, **kwargs):
    with GitHubClient(token=auth, **kwargs) as client:
        yield from client.fetch_pull_requests(repo, since)


def fetch_timeline(repo, pr_number, auth=None, **kwargs):
    with GitHubClient(token=auth, **kwargs) as client:
        return client.fetch_timeline(repo, pr_number)
