"""Seeded data generators: feature matrices with a planted signal, and
simulated project histories used for the bundled fixture archive."""

from __future__ import annotations

import zlib
from datetime import datetime, timedelta, timezone

import numpy as np

from ._seeding import rng_for
from .features import FEATURES, FeatureMatrix, Role
from .ingest.records import (
    DELETED_ACTOR_ID,
    DELETED_ACTOR_LOGIN,
    CommitStat,
    EventKind,
    PullRequestRecord,
    TimelineEvent,
    normalize,
)

EPOCH = datetime(2022, 1, 3, tzinfo=timezone.utc)

PRUNED_BY_DEFAULT = ("changed_lines", "changed_files", "contributor_experience", "submission_volume")
SIGNAL_FEATURES = [f for f in FEATURES[Role.MAINTAINER] if f not in PRUNED_BY_DEFAULT]
INFORMATIVE = ("contributor_performance", "description_length", "commits")


def _column(rng, name: str, n: int) -> np.ndarray:
    if name == "submission_day":
        return rng.integers(0, 7, n).astype(float)
    if name == "submission_hour":
        return rng.integers(0, 24, n).astype(float)
    if name == "contributor_performance":
        return rng.beta(2.0, 2.0, n)
    if name == "description_length":
        return np.floor(rng.lognormal(5.0, 1.0, n))
    if name == "commits":
        return 1.0 + rng.poisson(2.0, n)
    return np.floor(rng.lognormal(2.0, 1.0, n))


def _standardize(v: np.ndarray) -> np.ndarray:
    return (v - v.mean()) / v.std()


def synthetic_signal_projects(
    n_projects: int = 3,
    n_rows: int = 3000,
    seed: int = 0,
    noise: float = 0.6,
    informative=INFORMATIVE,
    missing_rate: float = 0.1,
) -> dict[str, FeatureMatrix]:
    """Independent count-like features; the label is a noisy monotone function
    of ``informative`` cut at the 40% and 75% quantiles.

    ``contributor_performance`` is hidden (NaN) for a share of rows, as it is
    for first-time contributors; the latent still uses the true value.
    """
    out = {}
    for p in range(n_projects):
        rng = rng_for(seed, "signal", p)
        X = np.column_stack([_column(rng, f, n_rows) for f in SIGNAL_FEATURES])
        latent = noise * rng.standard_normal(n_rows)
        for j, f in enumerate(informative):
            col = X[:, SIGNAL_FEATURES.index(f)]
            sign = -1.0 if j % 2 == 0 else 1.0
            latent += sign * _standardize(np.log1p(col))
        y = np.digitize(latent, np.quantile(latent, [0.4, 0.75]))
        hide = rng.random(n_rows) < missing_rate
        X[hide, SIGNAL_FEATURES.index("contributor_performance")] = np.nan
        minutes = np.cumsum(rng.integers(1, 600, n_rows))
        instants = np.datetime64(EPOCH.replace(tzinfo=None), "us") + minutes.astype("timedelta64[m]")
        name = f"synthetic/p{p}"
        out[name] = FeatureMatrix(
            list(SIGNAL_FEATURES), X, y, [name] * n_rows, np.arange(1, n_rows + 1), instants, Role.MAINTAINER
        )
    return out


def additive_logit_matrix(n_rows: int = 600, seed: int = 0, weights=(1.5, -1.0)) -> tuple[np.ndarray, np.ndarray]:
    """Two informative features driving a multinomial logit additively, plus
    one irrelevant feature. Returns ``(X, y)``."""
    rng = rng_for(seed, "additive")
    X = rng.normal(0.0, 1.0, (n_rows, 3))
    logits = np.column_stack([np.zeros(n_rows), weights[0] * X[:, 0], weights[1] * X[:, 1]])
    P = np.exp(logits - logits.max(axis=1, keepdims=True))
    P /= P.sum(axis=1, keepdims=True)
    y = np.array([rng.choice(3, p=row) for row in P])
    return X, y


# -- simulated histories ---------------------------------------------------------

BOT_ACCOUNTS = {
    "dependabot[bot]": "49699333",
    "renovate": "29139614",
    "mergify[bot]": "37929162",
}
# A scripted helper that reacts within seconds but carries no bot marker.
FAST_HELPER = ("ci-helper", "77000001")


def _account_ids(slug: str, role: str, count: int) -> list[tuple[str, str]]:
    base = 10_000_000 + (zlib.crc32(f"{slug}:{role}".encode()) % 900_000) * 10
    names = {
        "maintainer": ["alice", "bruno", "chen", "dana"],
        "contributor": [f"dev{i:02d}" for i in range(count)],
    }[role]
    owner = slug.split("/")[-1]
    return [(f"{names[i]}-{owner}", str(base + i)) for i in range(count)]


def simulate_project(slug: str, n_prs: int = 200, seed: int = 0, start: datetime = EPOCH) -> list[PullRequestRecord]:
    """Plausible PR histories: three maintainers (one gains write access
    midway), a pool of contributors, dependency bots, a fast helper account,
    commits, reviews and resolutions. Latencies depend on the description
    length, the author's track record and weekend submission."""
    rng = rng_for(seed, "simulate", slug)
    maintainers = _account_ids(slug, "maintainer", 3)
    contributors = _account_ids(slug, "contributor", 24)
    weights = 1.0 / np.arange(1, len(contributors) + 1)
    weights /= weights.sum()
    gaps = rng.exponential(9.0, n_prs)
    created = [start + timedelta(hours=float(h)) for h in np.cumsum(gaps)]
    horizon = created[-1] + timedelta(days=3)
    # the third maintainer only starts merging halfway through
    write_from = [start, start, created[n_prs // 2]]
    merged_by_author: dict[str, int] = {}
    records = []
    sha_counter = 0

    def ev(kind, who, ts, payload=None, raw=None):
        return TimelineEvent(kind, who[1], who[0], ts, payload or {}, raw)

    for i in range(n_prs):
        number = i + 1
        t0 = created[i].replace(microsecond=0)
        r = rng.random()
        if r < 0.05:
            author = ("dependabot[bot]", BOT_ACCOUNTS["dependabot[bot]"])
        elif r < 0.08:
            author = ("renovate", BOT_ACCOUNTS["renovate"])
        elif r < 0.22:
            author = maintainers[rng.integers(0, 2)]
        else:
            author = contributors[rng.choice(len(contributors), p=weights)]
        body_len = int(rng.choice([0, rng.integers(20, 2000)], p=[0.15, 0.85]))
        events, stats = [], []

        n_commits = 1 + int(rng.poisson(1.2))
        for c in range(n_commits):
            sha_counter += 1
            ts = t0 - timedelta(seconds=int(rng.integers(0, 50)))
            sha = f"{zlib.crc32(slug.encode()):08x}{sha_counter:032x}"
            events.append(ev(EventKind.COMMITTED, author, ts, {"sha": sha, "message": f"change {number}.{c}"}))
            stats.append(CommitStat(ts, int(rng.integers(1, 400)), int(rng.integers(1, 12)), sha))

        if rng.random() < 0.8:
            events.append(ev(EventKind.COMMENTED, FAST_HELPER, t0 + timedelta(seconds=int(rng.integers(5, 40))),
                             {"body_length": 120}))
        if rng.random() < 0.3:
            events.append(ev(EventKind.OTHER, maintainers[0], t0 + timedelta(minutes=int(rng.integers(1, 120))),
                             raw="labeled"))
        if rng.random() < 0.03:
            events.append(ev(EventKind.COMMENTED, (DELETED_ACTOR_LOGIN, DELETED_ACTOR_ID),
                             t0 + timedelta(hours=1), {"body_length": 10}))

        track = merged_by_author.get(author[1], 0)
        weekend = t0.weekday() >= 5
        mu = np.log(45.0) - 0.0006 * body_len - 0.3 * min(track, 4) + 0.8 * weekend
        responds = rng.random() < 0.85
        resolved_at = None
        if responds:
            latency = float(rng.lognormal(mu, 1.4))
            tm = t0 + timedelta(hours=latency)
            if tm < horizon:
                eligible = [m for m in maintainers if m != author]
                who = eligible[rng.integers(0, len(eligible))]
                kind = [EventKind.COMMENTED, EventKind.REVIEWED, EventKind.LINE_COMMENTED][rng.integers(0, 3)]
                payload = {"body_length": int(rng.integers(5, 400))}
                if kind is EventKind.REVIEWED:
                    payload["state"] = str(rng.choice(["commented", "changes_requested", "approved"]))
                events.append(ev(kind, who, tm, payload))
                tc = tm
                if rng.random() < 0.75:
                    tc = tm + timedelta(hours=float(rng.lognormal(np.log(16.0) + 0.6 * weekend, 1.5)))
                    ckind = [EventKind.COMMITTED, EventKind.COMMENTED, EventKind.HEAD_REF_FORCE_PUSHED][rng.integers(0, 3)]
                    if ckind is EventKind.COMMITTED:
                        sha_counter += 1
                        sha = f"{zlib.crc32(slug.encode()):08x}{sha_counter:032x}"
                        events.append(ev(ckind, author, tc, {"sha": sha, "message": "address review"}))
                        stats.append(CommitStat(tc, int(rng.integers(1, 80)), int(rng.integers(1, 4)), sha))
                    else:
                        events.append(ev(ckind, author, tc, {"body_length": 40} if ckind is EventKind.COMMENTED else {}))
                fate = rng.random()
                tr = tc + timedelta(hours=float(rng.lognormal(np.log(12.0), 1.0)))
                mergers = [m for m in maintainers if write_from[maintainers.index(m)] <= tr]
                if fate < 0.6 and mergers:
                    who = mergers[rng.integers(0, len(mergers))]
                    events.append(ev(EventKind.MERGED, who, tr, {"commit_id": f"{number:040x}"}))
                    events.append(ev(EventKind.CLOSED, who, tr))
                    merged_by_author[author[1]] = track + 1
                    resolved_at = tr
                elif fate < 0.75 and mergers:
                    events.append(ev(EventKind.CLOSED, mergers[0], tr))
                    resolved_at = tr
                elif fate < 0.85:
                    events.append(ev(EventKind.CLOSED, author, tr))
                    resolved_at = tr
        elif rng.random() < 0.5:
            resolved_at = t0 + timedelta(days=float(rng.uniform(8, 40)))
            events.append(ev(EventKind.CLOSED, author, resolved_at))
        if resolved_at is not None and rng.random() < 0.05:
            events.append(ev(EventKind.REOPENED, author, resolved_at + timedelta(hours=2)))
        if rng.random() < 0.1:
            events.append(ev(EventKind.COMMENTED, ("mergify[bot]", BOT_ACCOUNTS["mergify[bot]"]),
                             t0 + timedelta(minutes=3), {"body_length": 60}))

        title = f"Change {number}"
        records.append(normalize(PullRequestRecord(
            slug, number, author[1], author[0], title, "x" * body_len, t0, tuple(events), tuple(stats)
        )))
    return records


def fixture_records(seed: int = 0, n_prs: int = 200) -> list[PullRequestRecord]:
    return simulate_project("acme/widgets", n_prs, seed) + simulate_project("acme/gadgets", n_prs, seed)


def threshold_signal_project(n_rows: int = 1500, seed: int = 0, feature: str = "description_length",
                             flip: float = 0.2) -> FeatureMatrix:
    """The signal matrix relabelled by cutting one feature at its 40% and 75%
    quantiles, with a share of labels replaced at random."""
    m = synthetic_signal_projects(1, n_rows, seed)["synthetic/p0"]
    rng = rng_for(seed, "threshold")
    x = m.X[:, SIGNAL_FEATURES.index(feature)]
    y = np.digitize(x, np.quantile(x, [0.4, 0.75]))
    noisy = rng.random(n_rows) < flip
    y[noisy] = rng.integers(0, 3, int(noisy.sum()))
    m.y = y
    return m
