"""Offline stand-in for the GitHub REST endpoints the client uses.

Serves fixture repositories from memory over real HTTP on localhost, keeps
a request log, and can inject scripted failures (5xx, rate limits).

Run ``python -m prlatency.ingest.mock ARCHIVE_DIR`` to serve an archive.
"""

from __future__ import annotations

import json
import random
import re
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlencode, urlsplit

from .records import PullRequestRecord
from .wire import commits_to_wire, event_to_wire, pull_to_wire


@dataclass
class RepoFixture:
    pulls: list[dict] = field(default_factory=list)
    timelines: dict[int, list[dict]] = field(default_factory=dict)
    commits: dict[int, list[dict]] = field(default_factory=dict)
    commit_details: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def from_records(cls, records, shuffle_seed: int | None = None) -> "RepoFixture":
        """Render records to wire JSON; ``shuffle_seed`` scrambles timeline order."""
        fx = cls()
        rng = random.Random(shuffle_seed)
        for r in records:
            fx.pulls.append(pull_to_wire(r))
            items = [event_to_wire(e, r.author_id) for e in r.events]
            if shuffle_seed is not None:
                rng.shuffle(items)
            fx.timelines[r.pr_number] = items
            fx.commits[r.pr_number], details = commits_to_wire(r)
            fx.commit_details.update(details)
        return fx


@dataclass
class Fault:
    """A scripted response returned instead of the real one, ``times`` times."""

    path_prefix: str
    status: int
    headers: dict = field(default_factory=dict)
    body: str = ""
    times: int = 1


class MockGitHub:
    def __init__(self, repos: dict[str, RepoFixture | list[PullRequestRecord]], token: str | None = None):
        self.repos = {
            slug: fx if isinstance(fx, RepoFixture) else RepoFixture.from_records(fx)
            for slug, fx in repos.items()
        }
        self.required_token = token
        self.faults: list[Fault] = []
        self.requests: list[dict] = []
        self.rate_remaining = 5000
        self.rate_reset = 0
        self._lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockGitHub":
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802
                mock._handle(self)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def requests_for(self, path_prefix: str) -> list[dict]:
        return [r for r in self.requests if r["path"].startswith(path_prefix)]

    # -- request handling ---------------------------------------------------

    def _send(self, handler, status: int, payload, headers: dict | None = None) -> None:
        body = payload if isinstance(payload, str) else json.dumps(payload)
        data = body.encode()
        handler.send_response(status)
        handler.send_header("Content-Type", "application/json")
        handler.send_header("Content-Length", str(len(data)))
        merged = {"X-RateLimit-Remaining": self.rate_remaining, "X-RateLimit-Reset": self.rate_reset}
        merged.update(headers or {})
        for k, v in merged.items():
            handler.send_header(k, str(v))
        handler.end_headers()
        handler.wfile.write(data)

    def _handle(self, handler) -> None:
        url = urlsplit(handler.path)
        query = {k: v[-1] for k, v in parse_qs(url.query).items()}
        with self._lock:
            self.requests.append({"path": url.path, "query": query})
            fault = next((f for f in self.faults if f.times > 0 and url.path.startswith(f.path_prefix)), None)
            if fault is not None:
                fault.times -= 1
        if fault is not None:
            self._send(handler, fault.status, fault.body or {"message": "fault"}, fault.headers)
            return
        if self.required_token is not None:
            if handler.headers.get("Authorization") != f"Bearer {self.required_token}":
                self._send(handler, 401, {"message": "Bad credentials"})
                return

        m = re.fullmatch(r"/repos/([^/]+/[^/]+)/(.+)", url.path)
        fx = self.repos.get(m.group(1)) if m else None
        if fx is None:
            self._send(handler, 404, {"message": "Not Found"})
            return
        rest = m.group(2)
        if rest == "pulls":
            items = sorted(fx.pulls, key=lambda p: (p["created_at"], p["number"]))
            if query.get("direction", "desc") == "desc":
                items.reverse()
            self._page(handler, url.path, query, items)
        elif mt := re.fullmatch(r"issues/(\d+)/timeline", rest):
            items = fx.timelines.get(int(mt.group(1)))
            self._page(handler, url.path, query, items)
        elif mt := re.fullmatch(r"pulls/(\d+)/commits", rest):
            items = fx.commits.get(int(mt.group(1)))
            self._page(handler, url.path, query, items)
        elif mt := re.fullmatch(r"commits/(\w+)", rest):
            detail = fx.commit_details.get(mt.group(1))
            if detail is None:
                self._send(handler, 404, {"message": "Not Found"})
            else:
                self._send(handler, 200, detail)
        else:
            self._send(handler, 404, {"message": "Not Found"})

    def _page(self, handler, path: str, query: dict, items) -> None:
        if items is None:
            self._send(handler, 404, {"message": "Not Found"})
            return
        per_page = int(query.get("per_page", 30))
        page = int(query.get("page", 1))
        last = max(1, -(-len(items) // per_page))
        chunk = items[(page - 1) * per_page : page * per_page]
        links = []
        host = handler.headers.get("Host")
        for rel, num in (("next", page + 1), ("last", last)):
            if rel == "next" and page >= last:
                continue
            q = urlencode({**query, "page": num})
            links.append(f'<http://{host}{path}?{q}>; rel="{rel}"')
        self._send(handler, 200, chunk, {"Link": ", ".join(links)} if links else None)


def main(argv=None) -> None:
    import argparse
    import time

    from .archive import load_archive

    parser = argparse.ArgumentParser(description="Serve an event archive as a mock GitHub API.")
    parser.add_argument("archive")
    args = parser.parse_args(argv)
    dataset = load_archive(args.archive)
    with MockGitHub({p: list(prs) for p, prs in dataset.projects.items()}) as srv:
        print(srv.base_url, flush=True)
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            pass


if __name__ == "__main__":
    main()
