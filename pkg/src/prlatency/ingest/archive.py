"""On-disk event archive: one JSON-lines file per project plus a manifest."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from ..errors import ArchiveIOError, CorruptArchiveError, ParseError, SchemaMismatchError
from .records import Dataset, PullRequestRecord, format_instant, normalize

SCHEMA_VERSION = 1
MANIFEST = "manifest.json"


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _project_file(project_id: str) -> str:
    return project_id.replace("/", "__") + ".jsonl"


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class EventArchive:
    path: Path
    manifest: dict

    @classmethod
    def open(cls, path, create: bool = True) -> "EventArchive":
        path = Path(path)
        mpath = path / MANIFEST
        if not mpath.exists():
            if not create:
                raise ArchiveIOError(f"no archive manifest at {mpath}")
            try:
                path.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise ArchiveIOError(str(exc)) from exc
            manifest = {"schema_version": SCHEMA_VERSION, "projects": {}}
            _atomic_write(mpath, _dumps(manifest) + "\n")
            return cls(path, manifest)
        try:
            manifest = json.loads(mpath.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ArchiveIOError(str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise CorruptArchiveError(f"unreadable manifest: {exc}") from exc
        if manifest.get("schema_version") != SCHEMA_VERSION:
            raise SchemaMismatchError(
                f"archive schema {manifest.get('schema_version')!r}, expected {SCHEMA_VERSION}"
            )
        return cls(path, manifest)

    def _read_project(self, project_id: str) -> dict[int, PullRequestRecord]:
        entry = self.manifest["projects"].get(project_id)
        if entry is None:
            return {}
        fpath = self.path / entry["file"]
        records: dict[int, PullRequestRecord] = {}
        try:
            with open(fpath, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        rec = PullRequestRecord.from_dict(json.loads(line))
                    except (json.JSONDecodeError, ParseError) as exc:
                        raise CorruptArchiveError(f"{fpath}:{lineno}: {exc}") from exc
                    if rec.project_id != project_id:
                        raise CorruptArchiveError(
                            f"{fpath}:{lineno}: record of {rec.project_id} in {project_id}"
                        )
                    records[rec.pr_number] = rec
        except FileNotFoundError as exc:
            raise CorruptArchiveError(f"manifest lists missing file {fpath}") from exc
        except OSError as exc:
            raise ArchiveIOError(str(exc)) from exc
        if len(records) != entry["pr_count"]:
            raise CorruptArchiveError(
                f"{project_id}: manifest says {entry['pr_count']} records, found {len(records)}"
            )
        return records


def store_records(archive: EventArchive, records: Iterable[PullRequestRecord], fetched_at=None) -> dict:
    """Insert or replace records keyed by ``(project_id, pr_number)``.

    Returns the per-project manifest delta:
    ``{project: {"added": n, "replaced": n, "unchanged": n}}``.
    """
    incoming: dict[str, dict[int, PullRequestRecord]] = {}
    for r in records:
        incoming.setdefault(r.project_id, {})[r.pr_number] = normalize(r)

    delta: dict[str, dict[str, int]] = {}
    manifest = json.loads(_dumps(archive.manifest))
    for project_id in sorted(incoming):
        existing = archive._read_project(project_id)
        counts = {"added": 0, "replaced": 0, "unchanged": 0}
        for number, rec in incoming[project_id].items():
            old = existing.get(number)
            if old is None:
                counts["added"] += 1
            elif old == rec:
                counts["unchanged"] += 1
                continue
            else:
                counts["replaced"] += 1
            existing[number] = rec
        delta[project_id] = counts
        entry = manifest["projects"].get(project_id, {"file": _project_file(project_id)})
        if counts["added"] or counts["replaced"] or project_id not in manifest["projects"]:
            text = "".join(_dumps(existing[n].to_dict()) + "\n" for n in sorted(existing))
            try:
                _atomic_write(archive.path / entry["file"], text)
            except OSError as exc:
                raise ArchiveIOError(str(exc)) from exc
        entry["pr_count"] = len(existing)
        if fetched_at is not None:
            entry["fetched_at"] = format_instant(fetched_at)
        manifest["projects"][project_id] = entry

    try:
        _atomic_write(archive.path / MANIFEST, _dumps(manifest) + "\n")
    except OSError as exc:
        raise ArchiveIOError(str(exc)) from exc
    archive.manifest = manifest
    return delta


def load_archive(path) -> Dataset:
    archive = EventArchive.open(path, create=False)
    records = []
    for project_id in sorted(archive.manifest["projects"]):
        records.extend(archive._read_project(project_id).values())
    return Dataset.from_records(records)
