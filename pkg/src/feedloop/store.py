"""In-memory service state rebuilt by folding log records.

Store.apply is the single door for state changes, shared verbatim by the live
path and replay: it reads no clock and no randomness, so the digest of live
state always equals the digest of a replay of its log.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any, Iterable, Optional

from .classify import Classification
from .errors import ConflictOpen, SchemaViolation
from .eventlog import (
    KIND_CLASSIFICATION,
    KIND_CONFLICT,
    KIND_DRIFT,
    KIND_FEEDBACK,
    KIND_GOLD,
    KIND_INGEST,
    KIND_ROLLOUT,
    KIND_VERSION,
    LogRecord,
)
from .feedback import ActionWeights, FeedbackEvent, FeedbackState
from .drift import DriftReport
from .goldset import GoldExample, GoldStore
from .ingest import IngestReport, Message, MessageStore
from .labels import Label, Pathway
from .lifecycle import (
    EvalReport,
    GovernanceEntry,
    RolloutPolicy,
    VersionRecord,
    VersionRegistry,
    assign_variant,
)

REVIEW_LOW_CONFIDENCE = "low_confidence"
REVIEW_UNPARSEABLE = "unparseable"


class Store:
    def __init__(self, weights: Optional[ActionWeights] = None) -> None:
        self.weights = weights or ActionWeights()
        self.messages = MessageStore()
        self.feedback = FeedbackState()
        self.gold = GoldStore()
        self.registry = VersionRegistry()
        self.drift_reports: list[DriftReport] = []
        # latest classification per message, per pathway and per producing version
        self.latest_by_pathway: dict[tuple[str, int], dict[Pathway, Classification]] = {}
        self.by_version: dict[tuple[str, int], dict[str, Classification]] = {}
        self.review_queue: dict[tuple[str, int], str] = {}
        self.unparseable_live: dict[str, int] = {}  # per version, live classify failures
        self.gold_count_at_last_train = 0
        self.applied = 0  # records folded so far

    # --- fold ---

    def apply(self, record: LogRecord) -> None:
        handler = {
            KIND_INGEST: self._apply_ingest,
            KIND_CLASSIFICATION: self._apply_classification,
            KIND_FEEDBACK: self._apply_feedback,
            KIND_GOLD: self._apply_gold,
            KIND_CONFLICT: self._apply_conflict,
            KIND_DRIFT: self._apply_drift,
            KIND_VERSION: self._apply_version,
            KIND_ROLLOUT: self._apply_rollout,
        }[record.kind]
        handler(record.payload)
        self.applied += 1

    def _apply_ingest(self, payload: dict[str, Any]) -> IngestReport:
        msgs = [Message.from_dict(m) for m in payload["messages"]]
        return self.messages.add_batch(msgs)

    def _apply_classification(self, payload: dict[str, Any]) -> None:
        key = (payload["channel_id"], int(payload["message_id"]))
        version_id = payload["version_id"]
        if payload["status"] == "unparseable":
            self.unparseable_live[version_id] = self.unparseable_live.get(version_id, 0) + 1
            if key not in self.review_queue and self.gold.live_for(key) is None:
                self.review_queue[key] = REVIEW_UNPARSEABLE
            return
        classification = Classification.from_dict(payload)
        self.latest_by_pathway.setdefault(key, {})[classification.pathway] = classification
        self.by_version.setdefault(key, {})[version_id] = classification
        if payload["review"] and self.gold.live_for(key) is None:
            self.review_queue[key] = REVIEW_LOW_CONFIDENCE
        elif not payload["review"]:
            self.review_queue.pop(key, None)

    def _apply_feedback(self, payload: dict[str, Any]) -> None:
        event = FeedbackEvent.from_dict(payload)
        self.feedback.append(event)
        if event.is_explicit:
            # positions of an open conflict track the latest explicit stances;
            # consensus dissolves the conflict deterministically
            self.feedback.refresh_conflict(event.key, self.weights, event.at)

    def _apply_gold(self, payload: dict[str, Any]) -> None:
        if payload["action"] == "add":
            example = GoldExample.from_dict(payload["example"])
            if self.feedback.open_conflict_for(example.key) is not None:
                raise ConflictOpen(f"gold add for {example.key} while conflict open")
            self.gold.add(example)
            self.review_queue.pop(example.key, None)
        elif payload["action"] == "snapshot":
            snap = self.gold.snapshot(created_at=int(payload["at"]))
            if snap.snapshot_id != payload["snapshot_id"]:
                raise SchemaViolation(
                    f"snapshot replay mismatch: {snap.snapshot_id} != {payload['snapshot_id']}"
                )
        else:
            raise SchemaViolation(f"GOLD action {payload['action']!r} unknown")

    def _apply_conflict(self, payload: dict[str, Any]) -> None:
        if payload["action"] == "open":
            key = (payload["channel_id"], int(payload["message_id"]))
            self.feedback.open_conflict(key, self.weights)
            self.gold.retract_live(key)
        elif payload["action"] == "resolve":
            self.feedback.resolve(
                conflict_id=int(payload["conflict_id"]),
                decided=Label(payload["label"]),
                resolver_id=payload["resolver_id"],
                at=int(payload["at"]),
            )
        else:
            raise SchemaViolation(f"CONFLICT action {payload['action']!r} unknown")

    def _apply_drift(self, payload: dict[str, Any]) -> None:
        self.drift_reports.append(DriftReport.from_dict(payload))

    def _apply_version(self, payload: dict[str, Any]) -> None:
        action = payload["action"]
        if action == "create":
            record = VersionRecord.from_dict(payload["version"])
            self.registry.add(record)
            if record.pathway is Pathway.FT:
                self.gold_count_at_last_train = self.gold.add_count
        elif action == "eval":
            self.registry.attach_eval(
                payload["version_id"],
                EvalReport.from_dict(payload["report"]),
                GovernanceEntry.from_dict(payload["governance"]),
            )
        elif action == "status":
            self.registry.transition(
                payload["version_id"],
                payload["status"],
                GovernanceEntry.from_dict(payload["governance"]),
            )
        else:
            raise SchemaViolation(f"VERSION action {action!r} unknown")

    def _apply_rollout(self, payload: dict[str, Any]) -> None:
        if payload["action"] == "start":
            self.registry.rollout = RolloutPolicy.from_dict(payload["policy"])
        elif payload["action"] == "stop":
            self.registry.rollout = None
        else:
            raise SchemaViolation(f"ROLLOUT action {payload['action']!r} unknown")

    # --- reads ---

    def display_classification(
        self, key: tuple[str, int], serving_pathway: Pathway, user_id: Optional[str] = None
    ) -> Optional[Classification]:
        """The classification the feed shows: during a rollout, the assigned
        variant's output; otherwise the serving pathway's latest."""
        rollout = self.registry.rollout
        if rollout is not None:
            if rollout.key_basis == "USER" and user_id:
                variant = assign_variant(user_id, rollout)
            else:
                variant = assign_variant(f"{key[0]}:{key[1]}", rollout)
            by_version = self.by_version.get(key, {})
            if variant in by_version:
                return by_version[variant]
        return self.latest_by_pathway.get(key, {}).get(serving_pathway)

    def new_gold_since_training(self) -> int:
        return self.gold.add_count - self.gold_count_at_last_train

    # --- digest ---

    def digest_state(self) -> dict[str, Any]:
        """Canonical serialization of (message store, live gold set, open
        conflicts, version records, rollout policy)."""
        messages = sorted(
            (m.to_dict() for m in self.messages.all_messages()),
            key=lambda d: d["ingest_seq"],
        )
        gold_live = [e.to_dict() for e in self.gold.live_examples()]
        open_conflicts = [c.to_dict() for c in self.feedback.open_conflicts()]
        versions = {vid: rec.to_dict() for vid, rec in sorted(self.registry.versions.items())}
        rollout = self.registry.rollout.to_dict() if self.registry.rollout else None
        return {
            "messages": messages,
            "gold_live": gold_live,
            "open_conflicts": open_conflicts,
            "versions": versions,
            "rollout": rollout,
        }

    def digest(self) -> str:
        canonical = json.dumps(
            self.digest_state(), sort_keys=True, ensure_ascii=False, separators=(",", ":")
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def replay(records: Iterable[LogRecord], weights: Optional[ActionWeights] = None) -> Store:
    """Rebuild state from a record stream; a pure fold with no clock access."""
    store = Store(weights=weights)
    expected = 0
    for record in records:
        if record.seq != expected:
            from .errors import GapDetected

            raise GapDetected(f"expected seq {expected}, found {record.seq}")
        store.apply(record)
        expected += 1
    return store
