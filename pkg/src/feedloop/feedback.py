"""Explicit and implicit user signals, their aggregation into gold-label
proposals, and inter-user conflict management.

Explicit input always takes precedence over implicit signals; implicit
interactions can only affirm the label that was displayed, never oppose it.
Cross-user explicit disagreement escalates to the conflict queue; no automatic
tie-break is invented.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from .classify import Classification
from .errors import AlreadyResolved, DuplicateConflict, UnknownConflict, WindowTooSmall
from .ingest import Message
from .labels import Label, Provenance

EXPLICIT_KINDS = ("AGREE", "DISAGREE", "RELABEL")
IMPLICIT_KINDS = ("IMPRESSION", "SCROLL_PAST", "CLICK", "DWELL")


@dataclass(frozen=True)
class ActionWeights:
    """Weights for implicit actions and the threshold an accumulated sum must
    reach to count as implicit agreement. Defaults are configuration starting
    points; the simulation harness is the validation path.

    retention_seconds bounds how long implicit signals keep influencing
    stances, measured against the latest event on the same message (so
    aggregation stays a pure function of the log prefix). None = unlimited.
    The underlying records stay in the append-only log either way.
    """

    impression: float = 0.2
    scroll_past: float = 0.1
    click: float = 0.5
    dwell_per_10s: float = 0.3
    implicit_threshold: float = 1.0
    retention_seconds: Optional[int] = None


@dataclass(frozen=True)
class FeedbackEvent:
    """One user signal, appended to the immutable event log."""

    event_id: int
    user_id: str
    channel_id: str
    message_id: int
    kind: str  # AGREE | DISAGREE | RELABEL | IMPRESSION | SCROLL_PAST | CLICK | DWELL
    at: int
    label: Optional[Label] = None  # RELABEL only
    dwell_seconds: Optional[float] = None  # DWELL only
    displayed: Optional[Classification] = None  # snapshot the user saw

    @property
    def key(self) -> tuple[str, int]:
        return (self.channel_id, self.message_id)

    @property
    def is_explicit(self) -> bool:
        return self.kind in EXPLICIT_KINDS

    def implied_label(self) -> Label:
        """Label an explicit event asserts: AGREE endorses the displayed label,
        DISAGREE implies its negation, RELABEL carries its own."""
        if self.kind == "RELABEL":
            assert self.label is not None
            return self.label
        assert self.displayed is not None
        if self.kind == "AGREE":
            return self.displayed.label
        if self.kind == "DISAGREE":
            return self.displayed.label.other()
        raise ValueError(f"{self.kind} implies no label")

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "user_id": self.user_id,
            "channel_id": self.channel_id,
            "message_id": self.message_id,
            "kind": self.kind,
            "at": self.at,
            "label": self.label.value if self.label else None,
            "dwell_seconds": self.dwell_seconds,
            "displayed": self.displayed.to_dict() if self.displayed else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FeedbackEvent":
        return cls(
            event_id=int(d["event_id"]),
            user_id=d["user_id"],
            channel_id=d["channel_id"],
            message_id=int(d["message_id"]),
            kind=d["kind"],
            at=int(d["at"]),
            label=Label(d["label"]) if d.get("label") else None,
            dwell_seconds=d.get("dwell_seconds"),
            displayed=Classification.from_dict(d["displayed"]) if d.get("displayed") else None,
        )


@dataclass(frozen=True)
class UserStance:
    EXPLICIT = "EXPLICIT"
    IMPLICIT_AGREE = "IMPLICIT_AGREE"
    NONE = "NONE"

    kind: str
    label: Optional[Label] = None
    weight: Optional[float] = None


@dataclass(frozen=True)
class GoldProposal:
    UNANIMOUS = "UNANIMOUS"
    CONFLICT = "CONFLICT"
    INSUFFICIENT = "INSUFFICIENT"

    kind: str
    label: Optional[Label] = None
    provenance: Optional[Provenance] = None


@dataclass
class Conflict:
    conflict_id: int
    channel_id: str
    message_id: int
    positions: dict[str, Label]  # explicit positions only
    status: str = "OPEN"  # OPEN | RESOLVED
    resolved_label: Optional[Label] = None
    resolver_id: Optional[str] = None
    resolved_at: Optional[int] = None

    @property
    def key(self) -> tuple[str, int]:
        return (self.channel_id, self.message_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "conflict_id": self.conflict_id,
            "channel_id": self.channel_id,
            "message_id": self.message_id,
            "positions": {u: l.value for u, l in sorted(self.positions.items())},
            "status": self.status,
            "resolved_label": self.resolved_label.value if self.resolved_label else None,
            "resolver_id": self.resolver_id,
            "resolved_at": self.resolved_at,
        }


def _same_display(a: Optional[Classification], b: Optional[Classification]) -> bool:
    if a is None or b is None:
        return a is b
    return (a.label, a.pathway, a.version_id) == (b.label, b.pathway, b.version_id)


@dataclass
class FeedbackState:
    """Append-only event log with per-message indexes and the conflict queue.

    Aggregation is a pure function of the log prefix and the action weights.
    """

    events: list[FeedbackEvent] = field(default_factory=list)
    _by_message: dict[tuple[str, int], list[FeedbackEvent]] = field(default_factory=dict)
    conflicts: dict[int, Conflict] = field(default_factory=dict)
    _open_by_message: dict[tuple[str, int], int] = field(default_factory=dict)

    def next_event_id(self) -> int:
        return len(self.events)

    def append(self, event: FeedbackEvent) -> int:
        if event.event_id != self.next_event_id():
            raise ValueError(f"event_id {event.event_id} breaks log monotonicity")
        self.events.append(event)
        self._by_message.setdefault(event.key, []).append(event)
        return event.event_id

    def events_for(self, key: tuple[str, int]) -> Sequence[FeedbackEvent]:
        return self._by_message.get(key, ())

    def users_for(self, key: tuple[str, int]) -> list[str]:
        return sorted({e.user_id for e in self.events_for(key)})

    def user_stance(
        self, user_id: str, key: tuple[str, int], weights: ActionWeights
    ) -> UserStance:
        """The user's current position on a message.

        The latest explicit event wins outright. Otherwise implicit weights
        accumulate, but only for events that saw the same displayed
        classification as the user's most recent implicit event: when the
        display changes, accrued weight resets for the new label.
        """
        mine = [e for e in self.events_for(key) if e.user_id == user_id]
        explicit = [e for e in mine if e.is_explicit]
        if explicit:
            return UserStance(kind=UserStance.EXPLICIT, label=explicit[-1].implied_label())
        implicit = [e for e in mine if not e.is_explicit]
        if weights.retention_seconds is not None and implicit:
            horizon = max(e.at for e in self.events_for(key)) - weights.retention_seconds
            implicit = [e for e in implicit if e.at >= horizon]
        if not implicit:
            return UserStance(kind=UserStance.NONE)
        reference = implicit[-1].displayed
        if reference is None:
            return UserStance(kind=UserStance.NONE)
        total = 0.0
        for event in implicit:
            if not _same_display(event.displayed, reference):
                continue
            if event.kind == "IMPRESSION":
                total += weights.impression
            elif event.kind == "SCROLL_PAST":
                total += weights.scroll_past
            elif event.kind == "CLICK":
                total += weights.click
            elif event.kind == "DWELL":
                total += weights.dwell_per_10s * (event.dwell_seconds or 0.0) / 10.0
        if total >= weights.implicit_threshold:
            return UserStance(kind=UserStance.IMPLICIT_AGREE, label=reference.label, weight=total)
        return UserStance(kind=UserStance.NONE)

    def aggregate(self, key: tuple[str, int], weights: ActionWeights) -> GoldProposal:
        """Combine all user stances into a gold-label proposal.

        Whenever any explicit stance exists, implicit stances are ignored
        entirely. Mixed explicit labels yield CONFLICT; implicit-only
        disagreement (a rarity possible only across display changes) is not
        actionable and yields INSUFFICIENT.
        """
        stances = [
            self.user_stance(user, key, weights)
            for user in self.users_for(key)
        ]
        explicit_labels = {s.label for s in stances if s.kind == UserStance.EXPLICIT}
        if explicit_labels:
            if len(explicit_labels) == 1:
                return GoldProposal(
                    kind=GoldProposal.UNANIMOUS,
                    label=next(iter(explicit_labels)),
                    provenance=Provenance.explicit(),
                )
            return GoldProposal(kind=GoldProposal.CONFLICT)
        implicit_labels = {s.label for s in stances if s.kind == UserStance.IMPLICIT_AGREE}
        if len(implicit_labels) == 1:
            return GoldProposal(
                kind=GoldProposal.UNANIMOUS,
                label=next(iter(implicit_labels)),
                provenance=Provenance.implicit(),
            )
        return GoldProposal(kind=GoldProposal.INSUFFICIENT)

    def explicit_positions(self, key: tuple[str, int], weights: ActionWeights) -> dict[str, Label]:
        positions = {}
        for user in self.users_for(key):
            stance = self.user_stance(user, key, weights)
            if stance.kind == UserStance.EXPLICIT:
                positions[user] = stance.label
        return positions

    def open_conflict_for(self, key: tuple[str, int]) -> Optional[Conflict]:
        cid = self._open_by_message.get(key)
        return self.conflicts[cid] if cid is not None else None

    def open_conflicts(self) -> list[Conflict]:
        return [self.conflicts[cid] for cid in sorted(self._open_by_message.values())]

    def open_conflict(self, key: tuple[str, int], weights: ActionWeights) -> Conflict:
        """Enqueue a conflict carrying the current explicit positions. At most
        one OPEN conflict per message."""
        if key in self._open_by_message:
            raise DuplicateConflict(f"message {key} already has an open conflict")
        positions = self.explicit_positions(key, weights)
        if len(set(positions.values())) < 2:
            raise ValueError(f"no explicit disagreement on {key}")
        conflict = Conflict(
            conflict_id=len(self.conflicts),
            channel_id=key[0],
            message_id=key[1],
            positions=positions,
        )
        self.conflicts[conflict.conflict_id] = conflict
        self._open_by_message[key] = conflict.conflict_id
        return conflict

    def refresh_conflict(
        self, key: tuple[str, int], weights: ActionWeights, at: int
    ) -> Optional[Conflict]:
        """After a new explicit event: update the open conflict's positions.

        If the latest-wins rule dissolved the disagreement, the conflict
        auto-resolves by consensus (an OPEN conflict must hold both labels).
        Returns the conflict when it auto-resolved, else None.
        """
        conflict = self.open_conflict_for(key)
        if conflict is None:
            return None
        conflict.positions = self.explicit_positions(key, weights)
        labels = set(conflict.positions.values())
        if len(labels) >= 2:
            return None
        conflict.status = "RESOLVED"
        conflict.resolved_label = next(iter(labels)) if labels else None
        conflict.resolver_id = "system.consensus"
        conflict.resolved_at = at
        del self._open_by_message[key]
        return conflict

    def resolve(
        self, conflict_id: int, decided: Label, resolver_id: str, at: int
    ) -> Conflict:
        if conflict_id not in self.conflicts:
            raise UnknownConflict(str(conflict_id))
        conflict = self.conflicts[conflict_id]
        if conflict.status != "OPEN":
            raise AlreadyResolved(str(conflict_id))
        conflict.status = "RESOLVED"
        conflict.resolved_label = decided
        conflict.resolver_id = resolver_id
        conflict.resolved_at = at
        del self._open_by_message[conflict.key]
        return conflict


def sample_rating_task(
    window_messages: Sequence[Message], n: int, seed: int
) -> list[Message]:
    """Uniform sample without replacement for a representative rating task.

    Completing the task means one explicit event per sampled message, which
    counters the negativity bias of ordinary monitoring feedback.
    """
    if n > len(window_messages):
        raise WindowTooSmall(f"window holds {len(window_messages)} messages, need {n}")
    if n == 0:
        return []
    ordered = sorted(window_messages, key=lambda m: m.key)
    return random.Random(seed).sample(ordered, n)
