"""Telegram desktop-export parsing, message storage, and feed search."""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Optional

from .errors import InvalidQuery, MalformedExport

MAX_PAGE_SIZE = 200


@dataclass(frozen=True)
class Message:
    """A normalized Telegram post; the unit of classification and feedback."""

    channel_id: str
    message_id: int
    posted_at: int  # UTC seconds
    text: str  # NFC-normalized, may be empty
    media_flag: bool = False
    ingest_seq: int = -1  # assigned at ingestion, -1 while unassigned

    @property
    def key(self) -> tuple[str, int]:
        return (self.channel_id, self.message_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "channel_id": self.channel_id,
            "message_id": self.message_id,
            "posted_at": self.posted_at,
            "text": self.text,
            "media_flag": self.media_flag,
            "ingest_seq": self.ingest_seq,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Message":
        return cls(
            channel_id=d["channel_id"],
            message_id=int(d["message_id"]),
            posted_at=int(d["posted_at"]),
            text=d["text"],
            media_flag=bool(d.get("media_flag", False)),
            ingest_seq=int(d.get("ingest_seq", -1)),
        )


@dataclass(frozen=True)
class FeedQuery:
    text_query: Optional[str] = None
    channel_filter: Optional[frozenset[str]] = None
    time_from: Optional[int] = None
    time_to: Optional[int] = None
    page: int = 0
    page_size: int = 50

    def validate(self) -> None:
        if not 1 <= self.page_size <= MAX_PAGE_SIZE:
            raise InvalidQuery(f"page_size must be in [1, {MAX_PAGE_SIZE}], got {self.page_size}")
        if self.page < 0:
            raise InvalidQuery("page must be >= 0")
        if self.time_from is not None and self.time_to is not None and self.time_from > self.time_to:
            raise InvalidQuery("time range is inverted")


@dataclass(frozen=True)
class IngestReport:
    accepted: int
    duplicates: int


@dataclass(frozen=True)
class ParseResult:
    messages: list[Message]
    skipped: int


def _flatten_text(raw: Any) -> str:
    """Telegram exports store text either as a string or as a list mixing
    strings with entity objects that carry a "text" field."""
    if isinstance(raw, str):
        return raw
    if isinstance(raw, list):
        parts = []
        for part in raw:
            if isinstance(part, str):
                parts.append(part)
            elif isinstance(part, dict):
                parts.append(str(part.get("text", "")))
        return "".join(parts)
    return ""


def _parse_date(value: Any) -> Optional[int]:
    # Timestamps without timezone are interpreted as UTC.
    if isinstance(value, (int, float)):
        return int(value)
    if not isinstance(value, str):
        return None
    try:
        dt = datetime.fromisoformat(value)
    except ValueError:
        return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def parse_export(raw: bytes | str, channel_id: str) -> ParseResult:
    """Parse a Telegram desktop-export JSON document into normalized messages.

    Entries that are not of type "message" or that lack an id or date are
    skipped and counted, never fatal. Raises MalformedExport when the document
    is not JSON or has no "messages" array.
    """
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedExport(f"export is not UTF-8: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedExport(f"export is not JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("messages"), list):
        raise MalformedExport('export lacks a top-level "messages" array')

    messages: list[Message] = []
    skipped = 0
    for entry in doc["messages"]:
        if not isinstance(entry, dict) or entry.get("type") != "message":
            skipped += 1
            continue
        posted_at = _parse_date(entry.get("date"))
        if "id" not in entry or posted_at is None:
            skipped += 1
            continue
        try:
            message_id = int(entry["id"])
        except (TypeError, ValueError):
            skipped += 1
            continue
        text = unicodedata.normalize("NFC", _flatten_text(entry.get("text", "")))
        media = "photo" in entry or "file" in entry
        messages.append(
            Message(
                channel_id=channel_id,
                message_id=message_id,
                posted_at=posted_at,
                text=text,
                media_flag=media,
            )
        )
    return ParseResult(messages=messages, skipped=skipped)


class MessageStore:
    """Deduplicated message store with deterministic feed ordering.

    One writer appends batches; reads observe a consistent snapshot because
    batches are applied atomically under the service writer lock.
    """

    def __init__(self) -> None:
        self._by_key: dict[tuple[str, int], Message] = {}
        self._next_seq = 0

    def __len__(self) -> int:
        return len(self._by_key)

    def __contains__(self, key: tuple[str, int]) -> bool:
        return key in self._by_key

    def get(self, key: tuple[str, int]) -> Optional[Message]:
        return self._by_key.get(key)

    def add_batch(self, msgs: list[Message]) -> IngestReport:
        """Persist new (channel_id, message_id) pairs with fresh ingest_seq.

        Duplicates, within the batch or against the store, are dropped and
        counted. Replaying the same batch is idempotent.
        """
        accepted = 0
        duplicates = 0
        for msg in msgs:
            if msg.key in self._by_key:
                duplicates += 1
                continue
            self._by_key[msg.key] = replace(msg, ingest_seq=self._next_seq)
            self._next_seq += 1
            accepted += 1
        return IngestReport(accepted=accepted, duplicates=duplicates)

    def all_messages(self) -> list[Message]:
        return list(self._by_key.values())

    def search(self, q: FeedQuery) -> list[Message]:
        """Filter conjunctively, order by posted_at desc then ingest_seq desc,
        and return the requested page."""
        q.validate()
        needle = q.text_query.lower() if q.text_query else None
        hits = []
        for msg in self._by_key.values():
            if needle is not None and needle not in msg.text.lower():
                continue
            if q.channel_filter is not None and msg.channel_id not in q.channel_filter:
                continue
            if q.time_from is not None and msg.posted_at < q.time_from:
                continue
            if q.time_to is not None and msg.posted_at > q.time_to:
                continue
            hits.append(msg)
        hits.sort(key=lambda m: (-m.posted_at, -m.ingest_seq))
        start = q.page * q.page_size
        return hits[start : start + q.page_size]

    def in_window(self, time_from: Optional[int], time_to: Optional[int]) -> list[Message]:
        """Messages within [from, to], ordered by key for deterministic sampling."""
        out = [
            m
            for m in self._by_key.values()
            if (time_from is None or m.posted_at >= time_from)
            and (time_to is None or m.posted_at <= time_to)
        ]
        out.sort(key=lambda m: m.key)
        return out
