"""Append-only JSONL event log: the system of record.

Every state change is one schema-versioned record. Records are durably
appended (fsync per configurable batch) before callers are acknowledged, and
the full service state is a pure fold over the record stream.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

from .errors import GapDetected, SchemaViolation, StorageFailure

SCHEMA_VERSION = 1

KIND_INGEST = "INGEST"
KIND_CLASSIFICATION = "CLASSIFICATION"
KIND_FEEDBACK = "FEEDBACK"
KIND_GOLD = "GOLD"
KIND_CONFLICT = "CONFLICT"
KIND_DRIFT = "DRIFT"
KIND_VERSION = "VERSION"
KIND_ROLLOUT = "ROLLOUT"

KINDS = frozenset(
    {
        KIND_INGEST,
        KIND_CLASSIFICATION,
        KIND_FEEDBACK,
        KIND_GOLD,
        KIND_CONFLICT,
        KIND_DRIFT,
        KIND_VERSION,
        KIND_ROLLOUT,
    }
)


@dataclass(frozen=True)
class LogRecord:
    seq: int
    kind: str
    payload: dict[str, Any]
    at: int
    schema_version: int = SCHEMA_VERSION

    def to_line(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "kind": self.kind,
                "at": self.at,
                "schema_version": self.schema_version,
                "payload": self.payload,
            },
            ensure_ascii=False,
            separators=(",", ":"),
        )

    @classmethod
    def from_line(cls, line: str) -> "LogRecord":
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"log line is not JSON: {exc}") from exc
        try:
            return cls(
                seq=int(doc["seq"]),
                kind=doc["kind"],
                payload=doc["payload"],
                at=int(doc["at"]),
                schema_version=int(doc["schema_version"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"log line lacks record fields: {line[:80]!r}") from exc


def _require(payload: dict[str, Any], fields: dict[str, type | tuple[type, ...]], kind: str) -> None:
    for name, types in fields.items():
        if name not in payload:
            raise SchemaViolation(f"{kind} payload missing {name!r}")
        if not isinstance(payload[name], types):
            raise SchemaViolation(f"{kind} payload field {name!r} has wrong type")


_ACTION_FIELDS: dict[str, dict[str, dict[str, Any]]] = {
    KIND_GOLD: {
        "add": {"example": dict},
        "snapshot": {"snapshot_id": str},
    },
    KIND_CONFLICT: {
        "open": {"channel_id": str, "message_id": int},
        "resolve": {"conflict_id": int, "label": str, "resolver_id": str},
    },
    KIND_VERSION: {
        "create": {"version": dict},
        "eval": {"version_id": str, "report": dict, "governance": dict},
        "status": {"version_id": str, "status": str, "governance": dict},
    },
    KIND_ROLLOUT: {
        "start": {"policy": dict},
        "stop": {},
    },
}


def validate_record(record: LogRecord) -> None:
    """Validate a record against its schema version before it is appended."""
    if record.schema_version != SCHEMA_VERSION:
        raise SchemaViolation(f"unsupported schema_version {record.schema_version}")
    if record.kind not in KINDS:
        raise SchemaViolation(f"unknown record kind {record.kind!r}")
    if not isinstance(record.payload, dict):
        raise SchemaViolation("payload must be an object")
    payload = record.payload
    if record.kind == KIND_INGEST:
        _require(payload, {"channel_id": str, "messages": list}, record.kind)
        for msg in payload["messages"]:
            _require(msg, {"channel_id": str, "message_id": int, "posted_at": int, "text": str}, "INGEST.message")
    elif record.kind == KIND_CLASSIFICATION:
        _require(
            payload,
            {"channel_id": str, "message_id": int, "status": str, "pathway": str, "version_id": str},
            record.kind,
        )
        if payload["status"] not in ("ok", "unparseable"):
            raise SchemaViolation(f"CLASSIFICATION status {payload['status']!r} unknown")
        if payload["status"] == "ok":
            _require(payload, {"label": str, "confidence": (int, float), "review": bool}, record.kind)
    elif record.kind == KIND_FEEDBACK:
        _require(payload, {"event_id": int, "user_id": str, "channel_id": str, "message_id": int, "kind": str, "at": int}, record.kind)
    elif record.kind == KIND_DRIFT:
        _require(payload, {"jsd": (int, float), "oov_rate": (int, float), "triggered": bool}, record.kind)
    elif record.kind in _ACTION_FIELDS:
        action = payload.get("action")
        actions = _ACTION_FIELDS[record.kind]
        if action not in actions:
            raise SchemaViolation(f"{record.kind} action {action!r} unknown")
        _require(payload, actions[action], f"{record.kind}.{action}")


class EventLog:
    """Single-writer append-only JSONL file."""

    def __init__(self, path: str | Path, fsync_every: int = 1) -> None:
        self.path = Path(path)
        self.fsync_every = max(1, fsync_every)
        self._pending_fsync = 0
        self.next_seq = 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        existing = list(self.read_path(self.path)) if self.path.exists() else []
        if existing:
            self.next_seq = existing[-1].seq + 1
        self._fh = open(self.path, "a", encoding="utf-8")

    @staticmethod
    def read_path(path: str | Path) -> Iterator[LogRecord]:
        """Stream records from a log file, enforcing dense sequence numbers.

        A trailing partial line (crash remnant without a newline) is ignored;
        any other malformed line raises SchemaViolation.
        """
        expected = 0
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
        if not raw:
            return
        complete, sep, remnant = raw.rpartition("\n")
        lines = complete.splitlines() if sep else []
        for line in lines:
            if not line.strip():
                continue
            record = LogRecord.from_line(line)
            if record.seq != expected:
                raise GapDetected(f"expected seq {expected}, found {record.seq}")
            expected += 1
            yield record
        if remnant.strip():
            # partial final write: a replayable prefix ends at the last newline
            return

    def append(self, record: LogRecord) -> int:
        """Validate, write, and (per batch) fsync a record; returns its seq."""
        validate_record(record)
        if record.seq != self.next_seq:
            raise GapDetected(f"appending seq {record.seq}, expected {self.next_seq}")
        try:
            self._fh.write(record.to_line() + "\n")
            self._fh.flush()
            self._pending_fsync += 1
            if self._pending_fsync >= self.fsync_every:
                os.fsync(self._fh.fileno())
                self._pending_fsync = 0
        except OSError as exc:
            raise StorageFailure(str(exc)) from exc
        self.next_seq += 1
        return record.seq

    def sync(self) -> None:
        if self._pending_fsync:
            try:
                os.fsync(self._fh.fileno())
            except OSError as exc:
                raise StorageFailure(str(exc)) from exc
            self._pending_fsync = 0

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.flush()
            try:
                os.fsync(self._fh.fileno())
            except OSError:
                pass
            self._fh.close()

    def __enter__(self) -> "EventLog":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
