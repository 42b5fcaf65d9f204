"""Slow, obviously-correct reference implementations used by the tests.

None of these share code with the package; they follow the definitions
directly (pairwise counting, threshold sweeps, filter-then-min scans).
"""

from __future__ import annotations

import itertools
import math
from datetime import datetime

import numpy as np

PRIVILEGED = {
    "added_to_project", "deployed", "deployment_environment_changed", "locked", "merged",
    "moved_columns_in_project", "removed_from_project", "review_dismissed", "unlocked", "user_blocked",
}
FEEDBACK = {"commented", "reviewed", "line-commented", "commit-commented"}
MAINTAINER_KINDS = FEEDBACK | {"merged", "closed", "reopened"}
CONTRIBUTOR_KINDS = FEEDBACK | {"committed", "head_ref_force_pushed", "closed", "reopened"}
CLOSING_WORDS = {"close", "closes", "closed", "fix", "fixes", "fixed", "resolve", "resolves", "resolved"}
GHOST = "ghost:deleted"


# -- ranking metrics ---------------------------------------------------------------


def brute_auc_roc(y, s) -> float:
    """Probability a random positive outscores a random negative; ties count half."""
    pos = [b for a, b in zip(y, s) if a == 1]
    neg = [b for a, b in zip(y, s) if a == 0]
    total = 0.0
    for p, n in itertools.product(pos, neg):
        total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def brute_average_precision(y, s) -> float:
    """Sum over distinct thresholds of (recall step) x precision."""
    y = list(y)
    s = list(s)
    n_pos = sum(y)
    ap, prev_recall = 0.0, 0.0
    for t in sorted(set(s), reverse=True):
        flagged = [a for a, b in zip(y, s) if b >= t]
        tp = sum(flagged)
        recall = tp / n_pos
        precision = tp / len(flagged)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


# -- first responses ---------------------------------------------------------------


def _mentions_close(message: str, number: int) -> bool:
    words = (message or "").split()
    for w, nxt in zip(words, words[1:]):
        if w.lower().rstrip(":") in CLOSING_WORDS and w.count(":") <= 1:
            tag = nxt.rstrip(".,;)")
            if tag == f"#{number}":
                return True
    return False


def naive_ledger(prs) -> dict[tuple[str, str], datetime]:
    """(project, actor) -> earliest privileged instant, by full scan."""
    out: dict[tuple[str, str], datetime] = {}
    for pr in prs:
        for e in pr.events:
            kind = e.kind.value
            if e.actor_id == GHOST:
                continue
            privileged = (
                kind in PRIVILEGED
                or (kind == "closed" and e.actor_id != pr.author_id)
                or (kind != "committed" and _mentions_close(e.payload.get("message", ""), pr.pr_number))
            )
            if privileged:
                key = (pr.project_id, e.actor_id)
                if key not in out or e.timestamp < out[key]:
                    out[key] = e.timestamp
    return out


def naive_first_maintainer(pr, ledger: dict, bot_ids: set):
    """(actor, kind, instant, hours) of the earliest qualifying event, or None."""
    candidates = []
    for i, e in enumerate(pr.events):
        since = ledger.get((pr.project_id, e.actor_id))
        if (
            e.kind.value in MAINTAINER_KINDS
            and e.actor_id not in bot_ids
            and e.actor_id != pr.author_id
            and e.actor_id != GHOST
            and since is not None
            and since <= e.timestamp
        ):
            candidates.append((e.timestamp, i, e))
    if not candidates:
        return None
    t, _, e = min(candidates, key=lambda c: (c[0], c[1]))
    return e.actor_id, e.kind.value, t, (t - pr.created_at).total_seconds() / 3600.0


def naive_first_contributor(pr, t_ref: datetime):
    candidates = [
        (e.timestamp, i, e)
        for i, e in enumerate(pr.events)
        if e.actor_id == pr.author_id and e.kind.value in CONTRIBUTOR_KINDS and e.timestamp > t_ref
    ]
    if not candidates:
        return None
    t, _, e = min(candidates, key=lambda c: (c[0], c[1]))
    return e.actor_id, e.kind.value, t, (t - t_ref).total_seconds() / 3600.0


# -- gradients ----------------------------------------------------------------------


def finite_difference(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f`` at every coordinate of ``x``."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        up = f()
        flat[i] = keep - eps
        down = f()
        flat[i] = keep
        gf[i] = (up - down) / (2 * eps)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


# -- statistics ---------------------------------------------------------------------


def pooled_cohens_d(a, b) -> float:
    na, nb = len(a), len(b)
    ma, mb = sum(a) / na, sum(b) / nb
    va = sum((x - ma) ** 2 for x in a) / (na - 1)
    vb = sum((x - mb) ** 2 for x in b) / (nb - 1)
    sd = math.sqrt(((na - 1) * va + (nb - 1) * vb) / (na + nb - 2))
    if sd == 0:
        return 0.0 if ma == mb else math.inf
    return abs(ma - mb) / sd
