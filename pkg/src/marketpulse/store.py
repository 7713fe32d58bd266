"""Append-log store for snapshots, reviews and top-k observations.

Three newline-delimited JSON logs plus a JSON manifest live in one
directory. An in-memory index (entity -> byte offsets) is rebuilt
lazily per log on first access; nothing but the logs is persisted.
Single writer, any number of readers; queries return immutable values.
"""

from __future__ import annotations

import datetime as dt
import fcntl
import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .errors import (
    ConcurrentWriteError,
    InvalidWindowError,
    StoreIOError,
)
from .model import (
    AppSnapshot,
    ListType,
    ReviewRecord,
    TopKObservation,
    date_to_epoch,
    parse_date,
    review_from_record,
    review_from_trusted_record,
    review_to_record,
    snapshot_from_record,
    snapshot_from_trusted_record,
    snapshot_to_record,
    topk_from_record,
    topk_from_trusted_record,
    topk_to_record,
    validate_review,
    validate_snapshot,
    validate_topk,
)

SNAPSHOTS = "snapshots"
REVIEWS = "reviews"
TOPK = "topk"
KINDS = (SNAPSHOTS, REVIEWS, TOPK)

_LOG_FILES = {kind: f"{kind}.jsonl" for kind in KINDS}
_MANIFEST_FILE = "manifest.json"
_BATCH_LINES = 1000


@dataclass(frozen=True)
class DatasetManifest:
    """Dataset-level metadata recorded once, not per record."""

    name: str
    currency: str
    observation_start: dt.date
    observation_end: dt.date
    snapshot_cadence_hint: str = ""

    def __post_init__(self):
        if self.observation_start > self.observation_end:
            raise ValueError("observation_start after observation_end")

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "currency": self.currency,
            "observation_start": self.observation_start.isoformat(),
            "observation_end": self.observation_end.isoformat(),
            "snapshot_cadence_hint": self.snapshot_cadence_hint,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "DatasetManifest":
        return cls(
            name=rec["name"],
            currency=rec["currency"],
            observation_start=parse_date(rec["observation_start"]),
            observation_end=parse_date(rec["observation_end"]),
            snapshot_cadence_hint=rec.get("snapshot_cadence_hint", ""),
        )


@dataclass(frozen=True)
class TimeWindow:
    """Inclusive [start, end] range in epoch seconds."""

    start: int
    end: int

    def __post_init__(self):
        if self.end < self.start:
            raise InvalidWindowError(f"window end {self.end} before start {self.start}")

    def contains(self, ts: int) -> bool:
        return self.start <= ts <= self.end


@dataclass(frozen=True)
class AppSeries:
    """All snapshots of one app, strictly increasing in fetch_time."""

    app: str
    snapshots: tuple[AppSnapshot, ...]

    def __len__(self) -> int:
        return len(self.snapshots)


@dataclass(frozen=True)
class RankedListSeries:
    """All observations of one list type, strictly increasing in fetch_time."""

    list_type: ListType
    observations: tuple[TopKObservation, ...]

    def __len__(self) -> int:
        return len(self.observations)

    def rank_of(self, app: str, n: int) -> int | None:
        """Rank of ``app`` in the n-th observation (0-based), None if absent."""
        return self.observations[n].rank_of(app)


@dataclass
class Rejection:
    kind: str
    line_no: int
    reason: str


@dataclass
class IngestReport:
    """Outcome counts of one ingest call, per record kind."""

    accepted: dict = field(default_factory=lambda: {k: 0 for k in KINDS})
    deduplicated: dict = field(default_factory=lambda: {k: 0 for k in KINDS})
    rejected: list = field(default_factory=list)

    def merge(self, other: "IngestReport") -> None:
        for kind in KINDS:
            self.accepted[kind] += other.accepted[kind]
            self.deduplicated[kind] += other.deduplicated[kind]
        self.rejected.extend(other.rejected)

    @property
    def total_accepted(self) -> int:
        return sum(self.accepted.values())

    @property
    def total_rejected(self) -> int:
        return len(self.rejected)

    def to_record(self) -> dict:
        return {
            "accepted": dict(self.accepted),
            "deduplicated": dict(self.deduplicated),
            "rejected": [
                {"kind": r.kind, "line_no": r.line_no, "reason": r.reason}
                for r in self.rejected
            ],
        }


# per-kind codecs: decode(dict) -> record, validate(record) -> violations,
# entity/time keys for dedup and index grouping
_DECODERS: dict[str, Callable] = {
    SNAPSHOTS: snapshot_from_record,
    REVIEWS: review_from_record,
    TOPK: topk_from_record,
}
# store-owned lines were validated at ingest; queries skip the field checks
_TRUSTED_DECODERS: dict[str, Callable] = {
    SNAPSHOTS: snapshot_from_trusted_record,
    REVIEWS: review_from_trusted_record,
    TOPK: topk_from_trusted_record,
}


def _raw_entity_time_key(kind: str, rec: dict) -> tuple:
    """Entity/time key straight from the raw dict (fast path for index scans)."""
    if kind == SNAPSHOTS:
        app, ts = rec["app"], rec["fetch_time"]
        if not isinstance(app, str) or isinstance(ts, bool) or not isinstance(ts, int):
            raise ValueError("bad snapshot keys")
        return (app,), ts
    if kind == REVIEWS:
        app, review_id = rec["app"], rec["review_id"]
        if not isinstance(app, str) or not isinstance(review_id, str):
            raise ValueError("bad review keys")
        return (app, review_id), date_to_epoch(parse_date(rec["date"]))
    list_type, ts = rec["list_type"], rec["fetch_time"]
    if not isinstance(list_type, str) or isinstance(ts, bool) or not isinstance(ts, int):
        raise ValueError("bad topk keys")
    return (list_type,), ts
_VALIDATORS: dict[str, Callable] = {
    SNAPSHOTS: validate_snapshot,
    REVIEWS: validate_review,
    TOPK: validate_topk,
}
_ENCODERS: dict[str, Callable] = {
    SNAPSHOTS: snapshot_to_record,
    REVIEWS: review_to_record,
    TOPK: topk_to_record,
}


def _entity_time_key(kind: str, record) -> tuple:
    if kind == SNAPSHOTS:
        return (record.app,), record.fetch_time
    if kind == REVIEWS:
        return (record.app, record.review_id), date_to_epoch(record.date)
    return (record.list_type.value,), record.fetch_time


def _payload_hash(rec: dict) -> str:
    canonical = json.dumps(rec, sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(canonical.encode("utf-8")).hexdigest()


class _LogIndex:
    """Byte offsets of committed records in one log, grouped by entity."""

    def __init__(self):
        # entity group key -> list of (time_key, offset, length)
        self.by_group: dict = {}
        # (entity key, time_key) -> payload hash, built lazily for writers
        self.hashes: dict | None = None
        self.scanned_bytes = 0
        self.skipped_tail = 0
        self.scanned_once = False


class SnapStore:
    """Directory-backed append-log store. See module docstring."""

    def __init__(self, root: Path | str, manifest: DatasetManifest):
        self.root = Path(root)
        self.manifest = manifest
        self._indexes: dict[str, _LogIndex | None] = {k: None for k in KINDS}
        self._io_lock = threading.Lock()
        self._read_handles: dict[str, object] = {}

    # -- lifecycle -------------------------------------------------------

    @classmethod
    def create(cls, root: Path | str, manifest: DatasetManifest) -> "SnapStore":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        manifest_path = root / _MANIFEST_FILE
        manifest_path.write_text(
            json.dumps(manifest.to_record(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        for kind in KINDS:
            (root / _LOG_FILES[kind]).touch()
        return cls(root, manifest)

    @classmethod
    def open(cls, root: Path | str) -> "SnapStore":
        root = Path(root)
        manifest_path = root / _MANIFEST_FILE
        if not manifest_path.exists():
            raise FileNotFoundError(f"no store at {root} ({_MANIFEST_FILE} missing)")
        manifest = DatasetManifest.from_record(
            json.loads(manifest_path.read_text(encoding="utf-8"))
        )
        return cls(root, manifest)

    def _log_path(self, kind: str) -> Path:
        return self.root / _LOG_FILES[kind]

    # -- indexing ---------------------------------------------------------

    def _index(self, kind: str, with_hashes: bool = False) -> _LogIndex:
        """Per-log index, scanned once per store object.

        A store object caches its view of the committed log; appends made
        through the same object keep the index current, while appends from
        other processes become visible after ``refresh()`` or reopening.
        """
        index = self._indexes[kind]
        if index is None:
            index = _LogIndex()
            self._indexes[kind] = index
        if with_hashes and index.hashes is None:
            index.hashes = {}
            index.by_group = {}
            index.scanned_bytes = 0
            index.scanned_once = False
        if not index.scanned_once:
            self._scan(kind, index)
            index.scanned_once = True
        return index

    def refresh(self) -> None:
        """Pick up records committed by other writers since the last scan."""
        for kind, index in self._indexes.items():
            if index is not None and index.scanned_once:
                self._scan(kind, index)

    def _scan(self, kind: str, index: _LogIndex) -> None:
        path = self._log_path(kind)
        if not path.exists():
            return
        size = path.stat().st_size
        if size <= index.scanned_bytes:
            return
        with self._io_lock, open(path, "rb") as f:
            f.seek(index.scanned_bytes)
            offset = index.scanned_bytes
            for raw in f:
                length = len(raw)
                if not raw.endswith(b"\n"):
                    # uncommitted tail from an interrupted write: not indexed
                    index.skipped_tail = length
                    break
                try:
                    rec = json.loads(raw.decode("utf-8"))
                    entity, time_key = _raw_entity_time_key(kind, rec)
                except (KeyError, TypeError, ValueError):
                    offset += length
                    continue
                index.by_group.setdefault(entity[0], []).append(
                    (time_key, offset, length)
                )
                if index.hashes is not None:
                    index.hashes[(entity, time_key)] = _payload_hash(rec)
                offset += length
            index.scanned_bytes = offset

    def _read_fd(self, kind: str) -> int:
        fd = self._read_handles.get(kind)
        if fd is None:
            fd = os.open(self._log_path(kind), os.O_RDONLY)
            self._read_handles[kind] = fd
        return fd

    def _read_records(self, kind: str, entries) -> list:
        """Decode the records at ``entries`` [(time, offset, length)],
        returned in time order; reads happen in offset order for locality."""
        decoder = _TRUSTED_DECODERS[kind]
        by_offset = sorted(entries, key=lambda e: e[1])
        fd = self._read_fd(kind)
        out = [
            (
                time_key,
                offset,
                decoder(json.loads(os.pread(fd, length, offset).decode("utf-8"))),
            )
            for time_key, offset, length in by_offset
        ]
        out.sort(key=lambda pair: (pair[0], pair[1]))
        return [record for _, _, record in out]

    def close(self) -> None:
        for fd in self._read_handles.values():
            os.close(fd)
        self._read_handles.clear()

    # -- ingest -----------------------------------------------------------

    def ingest_lines(self, kind: str, lines: Iterable[str]) -> IngestReport:
        """Validate, dedup and append raw JSONL ``lines`` of one ``kind``.

        Exact duplicates (same entity, time and payload hash) are counted
        as deduplicated; a different payload at an existing (entity, time)
        is rejected as a conflict. Writes are committed in batches; on an
        I/O failure the store keeps every batch committed so far.
        """
        if kind not in KINDS:
            raise ValueError(f"unknown record kind {kind!r}")
        report = IngestReport()
        index = self._index(kind, with_hashes=True)
        decoder, validator, encoder = _DECODERS[kind], _VALIDATORS[kind], _ENCODERS[kind]
        lock_path = self.root / ".ingest.lock"
        with open(lock_path, "w") as lock_file:
            try:
                fcntl.flock(lock_file, fcntl.LOCK_EX | fcntl.LOCK_NB)
            except OSError:
                raise ConcurrentWriteError(
                    "another ingest is in progress on this store"
                ) from None
            if index.skipped_tail:
                # drop the uncommitted tail of an interrupted write so new
                # records never glue onto a partial line
                with self._io_lock, open(self._log_path(kind), "r+b") as f:
                    f.truncate(index.scanned_bytes)
                index.skipped_tail = 0
            batch: list[tuple[bytes, tuple, int, str]] = []
            for line_no, line in enumerate(lines, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    if not isinstance(rec, dict):
                        raise ValueError("record must be a JSON object")
                    record = decoder(rec)
                except (ValueError, TypeError) as exc:
                    report.rejected.append(Rejection(kind, line_no, str(exc)))
                    continue
                violations = validator(record)
                if violations:
                    report.rejected.append(
                        Rejection(kind, line_no, "; ".join(violations))
                    )
                    continue
                canonical = encoder(record)
                entity, time_key = _entity_time_key(kind, record)
                payload = _payload_hash(canonical)
                existing = index.hashes.get((entity, time_key))
                if existing is not None:
                    if existing == payload:
                        report.deduplicated[kind] += 1
                    else:
                        report.rejected.append(
                            Rejection(
                                kind,
                                line_no,
                                "conflicting payload for existing record "
                                f"(entity {entity}, time {time_key})",
                            )
                        )
                    continue
                raw = (
                    json.dumps(canonical, sort_keys=True, separators=(",", ":")) + "\n"
                ).encode("utf-8")
                batch.append((raw, entity, time_key, payload))
                index.hashes[(entity, time_key)] = payload
                report.accepted[kind] += 1
                if len(batch) >= _BATCH_LINES:
                    self._commit(kind, index, batch)
                    batch = []
            if batch:
                self._commit(kind, index, batch)
        return report

    def _commit(self, kind: str, index: _LogIndex, batch: list) -> None:
        data = b"".join(raw for raw, _, _, _ in batch)
        path = self._log_path(kind)
        try:
            with self._io_lock, open(path, "ab") as f:
                offset = f.tell()
                f.write(data)
                f.flush()
                os.fsync(f.fileno())
        except OSError as exc:
            for _, entity, time_key, _ in batch:
                index.hashes.pop((entity, time_key), None)
            raise StoreIOError(f"failed to commit batch to {path}: {exc}") from exc
        for raw, entity, time_key, _ in batch:
            index.by_group.setdefault(entity[0], []).append(
                (time_key, offset, len(raw))
            )
            offset += len(raw)
        index.scanned_bytes = offset

    def ingest_records(self, kind: str, records: Iterable) -> IngestReport:
        """Ingest typed records through the same validation/dedup path."""
        encoder = _ENCODERS[kind]
        lines = (
            json.dumps(encoder(r), sort_keys=True, separators=(",", ":"))
            for r in records
        )
        return self.ingest_lines(kind, lines)

    def ingest_dir(self, data_dir: Path | str) -> IngestReport:
        """Ingest the standard three JSONL logs found under ``data_dir``."""
        data_dir = Path(data_dir)
        report = IngestReport()
        for kind in KINDS:
            path = data_dir / _LOG_FILES[kind]
            if not path.exists():
                continue
            with open(path, "r", encoding="utf-8") as f:
                report.merge(self.ingest_lines(kind, f))
        return report

    # -- queries ----------------------------------------------------------

    def apps(self) -> list[str]:
        """All app ids with at least one snapshot, sorted."""
        index = self._index(SNAPSHOTS)
        return sorted(index.by_group)

    def reviewed_apps(self) -> list[str]:
        index = self._index(REVIEWS)
        return sorted(index.by_group)

    def query_app_series(
        self, app: str, window: TimeWindow | None = None
    ) -> AppSeries:
        """Snapshots of ``app`` within ``window``, sorted by fetch_time."""
        index = self._index(SNAPSHOTS)
        entries = [
            e
            for e in index.by_group.get(app, ())
            if window is None or window.contains(e[0])
        ]
        return AppSeries(app=app, snapshots=tuple(self._read_records(SNAPSHOTS, entries)))

    def iter_app_series(self, window: TimeWindow | None = None) -> Iterator[AppSeries]:
        for app in self.apps():
            yield self.query_app_series(app, window)

    def latest_snapshots(self) -> dict[str, AppSnapshot]:
        """The newest snapshot of every app."""
        index = self._index(SNAPSHOTS)
        newest = [max(entries) for entries in index.by_group.values()]
        return {
            snap.app: snap for snap in self._read_records(SNAPSHOTS, newest)
        }

    def query_reviews(
        self,
        app: str,
        start: dt.date | None = None,
        end: dt.date | None = None,
    ) -> list[ReviewRecord]:
        """Reviews of ``app`` in [start, end], sorted by (date, review_id)."""
        if start is not None and end is not None and end < start:
            raise InvalidWindowError(f"review window end {end} before start {start}")
        index = self._index(REVIEWS)
        reviews = [
            r
            for r in self._read_records(REVIEWS, index.by_group.get(app, ()))
            if (start is None or r.date >= start) and (end is None or r.date <= end)
        ]
        reviews.sort(key=lambda r: (r.date, r.review_id))
        return reviews

    def review_counts(self) -> dict[str, int]:
        """Number of stored reviews per app (no payload decoding)."""
        index = self._index(REVIEWS)
        return {app: len(entries) for app, entries in sorted(index.by_group.items())}

    def query_list_series(
        self, list_type: ListType, window: TimeWindow | None = None
    ) -> RankedListSeries:
        """Observations of one list type within ``window``, time-sorted."""
        index = self._index(TOPK)
        entries = [
            e
            for e in index.by_group.get(list_type.value, ())
            if window is None or window.contains(e[0])
        ]
        return RankedListSeries(
            list_type=list_type,
            observations=tuple(self._read_records(TOPK, entries)),
        )
