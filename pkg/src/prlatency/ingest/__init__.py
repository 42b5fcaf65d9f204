from .archive import EventArchive, load_archive, store_records
from .client import GitHubClient, fetch_pull_requests, fetch_timeline
from .records import (
    CLOCK_SKEW,
    DELETED_ACTOR_ID,
    CommitStat,
    Dataset,
    EventKind,
    PullRequestRecord,
    TimelineEvent,
    normalize,
)

__all__ = [
    "CLOCK_SKEW",
    "DELETED_ACTOR_ID",
    "CommitStat",
    "Dataset",
    "EventArchive",
    "EventKind",
    "GitHubClient",
    "PullRequestRecord",
    "TimelineEvent",
    "fetch_pull_requests",
    "fetch_timeline",
    "load_archive",
    "normalize",
    "store_records",
]
