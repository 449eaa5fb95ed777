"""The growing gold-standard dataset: adjudicated labels with provenance,
hash-stable train/validation/test splits, immutable snapshots, and export."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any, Iterator, Optional

from .errors import BadRatios, UnknownSnapshot
from .labels import Label, Provenance, Split
from .textproc import fnv1a_str

DEFAULT_RATIOS = (0.7, 0.15, 0.15)


def assign_split(
    channel_id: str, message_id: int, ratios: tuple[float, float, float] = DEFAULT_RATIOS
) -> Split:
    """Deterministically assign a message key to a split.

    Hashing the key (never the arrival order) keeps a message's split stable
    across re-adjudication, runs, and processes.
    """
    train, validation, test = ratios
    if train < 0 or validation < 0 or test < 0 or abs(train + validation + test - 1.0) > 1e-9:
        raise BadRatios(f"ratios must be non-negative and sum to 1, got {ratios}")
    r = fnv1a_str(f"{channel_id}:{message_id}") % 10000
    if r < 10000 * train:
        return Split.TRAIN
    if r < 10000 * (train + validation):
        return Split.VALIDATION
    return Split.TEST


@dataclass(frozen=True)
class GoldExample:
    """An adjudicated label. Text is copied at creation so gold data survives
    message-store changes."""

    channel_id: str
    message_id: int
    text: str
    label: Label
    provenance: Provenance
    created_at: int
    split: Split

    @property
    def key(self) -> tuple[str, int]:
        return (self.channel_id, self.message_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "channel_id": self.channel_id,
            "message_id": self.message_id,
            "text": self.text,
            "label": self.label.value,
            "provenance": self.provenance.encode(),
            "created_at": self.created_at,
            "split": self.split.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GoldExample":
        return cls(
            channel_id=d["channel_id"],
            message_id=int(d["message_id"]),
            text=d["text"],
            label=Label(d["label"]),
            provenance=Provenance.decode(d["provenance"]),
            created_at=int(d["created_at"]),
            split=Split(d["split"]),
        )


@dataclass(frozen=True)
class DatasetSnapshot:
    """Immutable capture of the live gold set; the id is a content hash over
    member version ids in key order."""

    snapshot_id: str
    example_ids: tuple[str, ...]
    counts: dict[str, int]
    created_at: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "snapshot_id": self.snapshot_id,
            "example_ids": list(self.example_ids),
            "counts": dict(self.counts),
            "created_at": self.created_at,
        }


def _example_version_id(example: GoldExample, version: int) -> str:
    return f"{example.channel_id}:{example.message_id}#v{version}"


class GoldStore:
    """Live examples plus full supersession history and cut snapshots.

    At most one live example per message; re-adjudication supersedes the live
    example while history is retained so old snapshots stay reproducible.
    """

    def __init__(self) -> None:
        self._live: dict[tuple[str, int], GoldExample] = {}
        self._history: dict[tuple[str, int], list[GoldExample]] = {}
        self._snapshots: dict[str, DatasetSnapshot] = {}
        self._snapshot_order: list[str] = []
        self.add_count = 0  # total adds ever, drives retrain triggers

    def live_examples(self) -> list[GoldExample]:
        return [self._live[k] for k in sorted(self._live)]

    def live_for(self, key: tuple[str, int]) -> Optional[GoldExample]:
        return self._live.get(key)

    def history_for(self, key: tuple[str, int]) -> list[GoldExample]:
        return list(self._history.get(key, ()))

    def add(self, example: GoldExample) -> int:
        """Make `example` the live gold for its message; returns its version
        index (1-based). Conflict gating happens at the service layer."""
        history = self._history.setdefault(example.key, [])
        history.append(example)
        self._live[example.key] = example
        self.add_count += 1
        return len(history)

    def retract_live(self, key: tuple[str, int]) -> bool:
        """Drop the live example for a message (history kept): a message with
        an OPEN conflict never appears in the gold set."""
        return self._live.pop(key, None) is not None

    def compute_snapshot(self, created_at: int) -> DatasetSnapshot:
        """Build (without registering) the snapshot of all live examples."""
        ids = []
        counts: dict[str, int] = {}
        for key in sorted(self._live):
            example = self._live[key]
            version = len(self._history[key])
            ids.append(_example_version_id(example, version))
            counts[example.split.value] = counts.get(example.split.value, 0) + 1
            counts[f"{example.split.value}:{example.label.value}"] = (
                counts.get(f"{example.split.value}:{example.label.value}", 0) + 1
            )
        snapshot_id = hashlib.sha256("\n".join(ids).encode("utf-8")).hexdigest()[:16]
        return DatasetSnapshot(
            snapshot_id=snapshot_id,
            example_ids=tuple(ids),
            counts=counts,
            created_at=created_at,
        )

    def snapshot(self, created_at: int) -> DatasetSnapshot:
        """Capture all live examples. Later gold additions never alter the
        returned snapshot."""
        snap = self.compute_snapshot(created_at)
        if snap.snapshot_id not in self._snapshots:
            self._snapshots[snap.snapshot_id] = snap
            self._snapshot_order.append(snap.snapshot_id)
        return snap

    def get_snapshot(self, snapshot_id: str) -> DatasetSnapshot:
        if snapshot_id not in self._snapshots:
            raise UnknownSnapshot(snapshot_id)
        return self._snapshots[snapshot_id]

    def latest_snapshot(self) -> Optional[DatasetSnapshot]:
        if not self._snapshot_order:
            return None
        return self._snapshots[self._snapshot_order[-1]]

    def snapshots(self) -> list[DatasetSnapshot]:
        return [self._snapshots[s] for s in self._snapshot_order]

    def examples_in(
        self, snapshot_id: str, split: Optional[Split] = None
    ) -> list[GoldExample]:
        """Resolve a snapshot's member ids against history, optionally filtered
        by split, ordered by message key."""
        snap = self.get_snapshot(snapshot_id)
        out = []
        for example_id in snap.example_ids:
            key_part, version_part = example_id.rsplit("#v", 1)
            channel_id, message_id = key_part.rsplit(":", 1)
            example = self._history[(channel_id, int(message_id))][int(version_part) - 1]
            if split is None or example.split is split:
                out.append(example)
        return out

    def export_lines(self, snapshot_id: str, split: Optional[Split] = None) -> Iterator[str]:
        """JSONL export, one object per example, byte-identical across calls."""
        for example in self.examples_in(snapshot_id, split):
            yield json.dumps(
                {
                    "channel_id": example.channel_id,
                    "message_id": example.message_id,
                    "text": example.text,
                    "label": example.label.value,
                    "provenance": example.provenance.encode(),
                    "split": example.split.value,
                },
                ensure_ascii=False,
                separators=(",", ":"),
            )
