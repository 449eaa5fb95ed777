"""The deployable unit: one facade owning the event log and the folded state.

Every mutation validates against current state, builds log records, appends
them durably, and applies them through the same Store.apply used by replay.
Mutations serialize through a single writer lock; reads are lock-free.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import threading
import time
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence

from . import eventlog
from .classify import (
    DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE,
    Classification,
    PromptTemplate,
    SelectionStrategy,
    Triage,
    classify_p,
    predict_ft,
    train_reference,
    triage,
)
from .config import Config
from .drift import check_drift
from .errors import (
    AlreadyResolved,
    ClientFailure,
    ConflictOpen,
    EmptySplit,
    EmptyWindow,
    FeedloopError,
    ImplicitTrackingDisabled,
    InsufficientTrainExamples,
    InvalidQuery,
    InvalidTransition,
    Unparseable,
    UnknownMessage,
    UnknownSnapshot,
    UnknownVersion,
)
from .eventlog import EventLog, LogRecord
from .feedback import EXPLICIT_KINDS, IMPLICIT_KINDS, FeedbackEvent, sample_rating_task
from .goldset import GoldExample, assign_split
from .ingest import FeedQuery, Message, parse_export
from .labels import Label, Pathway, Provenance, Split
from .lifecycle import (
    CANDIDATE,
    DEPLOYED,
    PROMOTE,
    RETIRED,
    VALIDATED,
    EvalReport,
    ExperimentCell,
    ExperimentSpec,
    GovernanceEntry,
    RolloutPolicy,
    VersionRecord,
    evaluate_examples,
    fewshot_experiment,
    promotion_gate,
    retrain_trigger,
)
from .llm_client import client_from_config
from .store import Store, replay

DAY_SECONDS = 86400


class Service:
    def __init__(
        self,
        config: Optional[Config] = None,
        clock=time.time,
        client: Optional[object] = None,
    ) -> None:
        self.config = config or Config()
        self._clock = clock
        self.client = client if client is not None else client_from_config(self.config.llm_client)
        self._write_lock = threading.RLock()
        self._retraining = threading.Event()  # single-flight marker, transient
        if self.config.privacy.retention_days is not None:
            self.config.weights = dataclasses.replace(
                self.config.weights,
                retention_seconds=self.config.privacy.retention_days * DAY_SECONDS,
            )
        self.store = Store(weights=self.config.weights)
        self.log = EventLog(self.config.storage.log_path, self.config.storage.fsync_every)
        self._boot()

    def _boot(self) -> None:
        snapshot_path = self.config.storage.state_snapshot_path
        start_seq = 0
        if snapshot_path and Path(snapshot_path).exists():
            start_seq = self._load_state_snapshot(snapshot_path)
        for record in EventLog.read_path(self.log.path) if self.log.path.exists() else ():
            if record.seq >= start_seq:
                self.store.apply(record)

    # --- plumbing ---

    def _now(self) -> int:
        return int(self._clock())

    def _append(self, kind: str, payload: dict[str, Any]) -> LogRecord:
        record = LogRecord(seq=self.log.next_seq, kind=kind, payload=payload, at=self._now())
        self.log.append(record)
        self.store.apply(record)
        return record

    def pseudonymize(self, user_id: str) -> str:
        """Salted hash so raw identities never enter the log."""
        salt = self.config.privacy.user_salt
        return hashlib.sha256(f"{salt}:{user_id}".encode("utf-8")).hexdigest()[:16]

    @property
    def serving_pathway(self) -> Pathway:
        return Pathway(self.config.lifecycle.serving_pathway)

    def _ratios(self) -> tuple[float, float, float]:
        return self.config.lifecycle.split_ratios

    def digest(self) -> str:
        return self.store.digest()

    def close(self) -> None:
        with self._write_lock:
            if self.config.storage.state_snapshot_path:
                self.write_state_snapshot(self.config.storage.state_snapshot_path)
            self.log.close()

    # --- ingest ---

    def ingest_export(self, channel_id: str, raw: bytes | str) -> dict[str, Any]:
        parsed = parse_export(raw, channel_id)
        report = self.ingest_messages(parsed.messages)
        report["skipped"] = parsed.skipped
        return report

    def ingest_messages(self, msgs: Sequence[Message]) -> dict[str, Any]:
        with self._write_lock:
            seen: set[tuple[str, int]] = set()
            fresh = []
            for msg in msgs:
                if msg.key in seen or msg.key in self.store.messages:
                    continue
                seen.add(msg.key)
                fresh.append(msg)
            if msgs:
                self._append(
                    eventlog.KIND_INGEST,
                    {
                        "channel_id": msgs[0].channel_id,
                        "messages": [m.to_dict() for m in msgs],
                    },
                )
            classify_report = self._classify_new(fresh)
        return {
            "accepted": len(fresh),
            "duplicates": len(msgs) - len(fresh),
            **classify_report,
        }

    def _active_versions(self) -> list[VersionRecord]:
        rollout = self.store.registry.rollout
        if rollout is not None:
            ids = [rollout.variant_a, rollout.variant_b]
            return [self.store.registry.get(v) for v in dict.fromkeys(ids)]
        deployed = self.store.registry.deployed_version(self.serving_pathway)
        return [deployed] if deployed else []

    def _classify_new(self, msgs: Sequence[Message]) -> dict[str, int]:
        classified = 0
        unparseable = 0
        errors = 0
        versions = self._active_versions()
        threshold = self.config.lifecycle.review_threshold
        train_pool = [e for e in self.store.gold.live_examples() if e.split is Split.TRAIN]
        for version in versions:
            for msg in msgs:
                if not msg.text.strip():
                    continue  # classifiers are text-only; media-only posts stay unlabeled
                now = self._now()
                if version.pathway is Pathway.FT:
                    classification = predict_ft(
                        version.payload,
                        msg.text,
                        channel_id=msg.channel_id,
                        message_id=msg.message_id,
                        version_id=version.version_id,
                        classified_at=now,
                    )
                else:
                    if self.client is None:
                        errors += 1
                        continue
                    try:
                        classification = classify_p(
                            msg,
                            version.payload,
                            self.client,
                            train_pool,
                            version_id=version.version_id,
                            classified_at=now,
                            default_confidence=self.config.llm_client.default_confidence,
                        )
                    except Unparseable:
                        self._append(
                            eventlog.KIND_CLASSIFICATION,
                            {
                                "channel_id": msg.channel_id,
                                "message_id": msg.message_id,
                                "status": "unparseable",
                                "pathway": version.pathway.value,
                                "version_id": version.version_id,
                            },
                        )
                        unparseable += 1
                        continue
                    except (ClientFailure, InsufficientTrainExamples):
                        errors += 1
                        continue
                review = triage(classification, threshold) is Triage.REVIEW_QUEUE
                self._append(
                    eventlog.KIND_CLASSIFICATION,
                    {"status": "ok", "review": review, **classification.to_dict()},
                )
                classified += 1
        return {"classified": classified, "unparseable": unparseable, "classify_errors": errors}

    # --- feed ---

    def feed(self, query: FeedQuery, user_id: Optional[str] = None) -> dict[str, Any]:
        query.validate()
        pseudo = self.pseudonymize(user_id) if user_id else None
        items = []
        for msg in self.store.messages.search(query):
            classification = self.store.display_classification(
                msg.key, self.serving_pathway, pseudo
            )
            item: dict[str, Any] = {
                "message": msg.to_dict(),
                "classification": classification.to_dict() if classification else None,
                "in_review_queue": msg.key in self.store.review_queue,
            }
            if pseudo:
                item["mine"] = self._my_feedback(pseudo, msg.key)
            items.append(item)
        return {"items": items, "page": query.page, "page_size": query.page_size}

    def _my_feedback(self, pseudo: str, key: tuple[str, int]) -> Optional[dict[str, Any]]:
        explicit = [
            e
            for e in self.store.feedback.events_for(key)
            if e.user_id == pseudo and e.is_explicit
        ]
        if not explicit:
            return None
        last = explicit[-1]
        return {"kind": last.kind, "label": last.implied_label().value}

    # --- feedback ---

    def _resolve_displayed(
        self, key: tuple[str, int], displayed_version: Optional[str]
    ) -> Optional[Classification]:
        if displayed_version is not None:
            by_version = self.store.by_version.get(key, {})
            if displayed_version not in by_version:
                raise UnknownVersion(
                    f"message {key} has no classification by version {displayed_version}"
                )
            return by_version[displayed_version]
        return self.store.display_classification(key, self.serving_pathway)

    def record_feedback(
        self,
        user_id: str,
        channel_id: str,
        message_id: int,
        kind: str,
        label: Optional[str] = None,
        dwell_seconds: Optional[float] = None,
        displayed_version: Optional[str] = None,
    ) -> dict[str, Any]:
        """Append one feedback event, then run conflict and gold wiring."""
        if kind in IMPLICIT_KINDS and not self.config.privacy.implicit_tracking:
            raise ImplicitTrackingDisabled("implicit tracking is opt-in per deployment")
        if kind not in EXPLICIT_KINDS and kind not in IMPLICIT_KINDS:
            raise InvalidQuery(f"unknown feedback kind {kind!r}")
        key = (channel_id, message_id)
        with self._write_lock:
            if key not in self.store.messages:
                raise UnknownMessage(f"{channel_id}:{message_id}")
            displayed = self._resolve_displayed(key, displayed_version)
            if displayed is None and kind != "RELABEL":
                raise InvalidQuery(
                    f"{kind} requires a displayed classification and {key} has none"
                )
            parsed_label = Label(label) if kind == "RELABEL" and label else None
            if kind == "RELABEL" and parsed_label is None:
                raise InvalidQuery("RELABEL requires a label")
            if dwell_seconds is not None and dwell_seconds < 0:
                raise InvalidQuery("DWELL seconds must be >= 0")
            event = FeedbackEvent(
                event_id=self.store.feedback.next_event_id(),
                user_id=self.pseudonymize(user_id),
                channel_id=channel_id,
                message_id=message_id,
                kind=kind,
                at=self._now(),
                label=parsed_label,
                dwell_seconds=(
                    float(dwell_seconds)
                    if dwell_seconds is not None and kind == "DWELL"
                    else None
                ),
                displayed=displayed,
            )
            self._append(eventlog.KIND_FEEDBACK, event.to_dict())
            wiring = self._after_feedback(key)
        return {"event_id": event.event_id, **wiring}

    def record_implicit_batch(self, events: Sequence[dict[str, Any]]) -> dict[str, Any]:
        if not self.config.privacy.implicit_tracking:
            raise ImplicitTrackingDisabled("implicit tracking is opt-in per deployment")
        recorded = 0
        for spec in events:
            kind = spec.get("kind")
            if kind not in IMPLICIT_KINDS:
                raise InvalidQuery(f"implicit batch contains non-implicit kind {kind!r}")
            self.record_feedback(
                user_id=spec["user_id"],
                channel_id=spec["channel_id"],
                message_id=int(spec["message_id"]),
                kind=kind,
                dwell_seconds=spec.get("dwell_seconds"),
                displayed_version=spec.get("displayed_version"),
            )
            recorded += 1
        return {"recorded": recorded}

    def _after_feedback(self, key: tuple[str, int]) -> dict[str, Any]:
        """Post-event wiring: escalate fresh conflicts, harvest unanimous gold."""
        feedback = self.store.feedback
        proposal = feedback.aggregate(key, self.config.weights)
        outcome: dict[str, Any] = {"aggregate": proposal.kind}
        if proposal.kind == proposal.CONFLICT:
            if feedback.open_conflict_for(key) is None:
                self._append(
                    eventlog.KIND_CONFLICT,
                    {"action": "open", "channel_id": key[0], "message_id": key[1]},
                )
            outcome["conflict_id"] = feedback.open_conflict_for(key).conflict_id
        elif proposal.kind == proposal.UNANIMOUS and feedback.open_conflict_for(key) is None:
            live = self.store.gold.live_for(key)
            if (
                live is None
                or live.label is not proposal.label
                or live.provenance.kind != proposal.provenance.kind
            ):
                self._add_gold(key, proposal.label, proposal.provenance)
                outcome["gold_added"] = True
        return outcome

    def _add_gold(self, key: tuple[str, int], label: Label, provenance: Provenance) -> GoldExample:
        message = self.store.messages.get(key)
        if message is None:
            raise UnknownMessage(f"{key[0]}:{key[1]}")
        if self.store.feedback.open_conflict_for(key) is not None:
            # reject before appending: a record that cannot apply must never hit the log
            raise ConflictOpen(f"gold add for {key} while conflict open")
        example = GoldExample(
            channel_id=key[0],
            message_id=key[1],
            text=message.text,
            label=label,
            provenance=provenance,
            created_at=self._now(),
            split=assign_split(key[0], key[1], self._ratios()),
        )
        self._append(eventlog.KIND_GOLD, {"action": "add", "example": example.to_dict()})
        return example

    # --- conflicts ---

    def conflicts(self, include_resolved: bool = False) -> list[dict[str, Any]]:
        out = []
        source = (
            self.store.feedback.conflicts.values()
            if include_resolved
            else self.store.feedback.open_conflicts()
        )
        for conflict in source:
            message = self.store.messages.get(conflict.key)
            entry = conflict.to_dict()
            entry["text"] = message.text if message else ""
            out.append(entry)
        return out

    def resolve_conflict(self, conflict_id: int, label: str, resolver_id: str) -> dict[str, Any]:
        decided = Label(label)
        with self._write_lock:
            conflict = self.store.feedback.conflicts.get(conflict_id)
            if conflict is None:
                from .errors import UnknownConflict

                raise UnknownConflict(str(conflict_id))
            if conflict.status != "OPEN":
                raise AlreadyResolved(str(conflict_id))
            pseudo = self.pseudonymize(resolver_id)
            self._append(
                eventlog.KIND_CONFLICT,
                {
                    "action": "resolve",
                    "conflict_id": conflict_id,
                    "label": decided.value,
                    "resolver_id": pseudo,
                    "at": self._now(),
                },
            )
            example = self._add_gold(conflict.key, decided, Provenance.resolved(pseudo))
        return {"conflict_id": conflict_id, "gold": example.to_dict()}

    # --- review queue and rating tasks ---

    def review_queue(self) -> list[dict[str, Any]]:
        items = []
        for key in sorted(self.store.review_queue):
            message = self.store.messages.get(key)
            classification = self.store.display_classification(key, self.serving_pathway)
            items.append(
                {
                    "message": message.to_dict() if message else None,
                    "classification": classification.to_dict() if classification else None,
                    "reason": self.store.review_queue[key],
                }
            )
        return items

    def rating_task(
        self, n: int, time_from: Optional[int] = None, time_to: Optional[int] = None, seed: int = 0
    ) -> list[dict[str, Any]]:
        window = self.store.messages.in_window(time_from, time_to)
        sampled = sample_rating_task(window, n, seed)
        out = []
        for msg in sampled:
            classification = self.store.display_classification(msg.key, self.serving_pathway)
            out.append(
                {
                    "message": msg.to_dict(),
                    "classification": classification.to_dict() if classification else None,
                }
            )
        return out

    # --- goldset ---

    def snapshot_gold(self) -> dict[str, Any]:
        with self._write_lock:
            snap = self.store.gold.compute_snapshot(self._now())
            self._append(
                eventlog.KIND_GOLD,
                {"action": "snapshot", "snapshot_id": snap.snapshot_id, "at": snap.created_at},
            )
            monitored = self._evaluate_pending_hotfixes(snap.snapshot_id)
        return {"snapshot": snap.to_dict(), "hotfix_evaluations": monitored}

    def _evaluate_pending_hotfixes(self, snapshot_id: str) -> list[str]:
        """Deployed HOTFIX prompts carry a mandatory monitoring window; cutting
        a snapshot runs their scheduled evaluation when a client is available."""
        evaluated = []
        for version_id in self.pending_hotfix_evaluations():
            if self.client is None:
                break
            try:
                self.evaluate_version(version_id, snapshot_id, Split.VALIDATION)
            except (EmptySplit, ClientFailure, InsufficientTrainExamples):
                continue
            evaluated.append(version_id)
        return evaluated

    def pending_hotfix_evaluations(self) -> list[str]:
        """Deployed HOTFIX versions still awaiting their scheduled evaluation."""
        pending = []
        for version_id, record in sorted(self.store.registry.versions.items()):
            if record.review_after is None or record.status != DEPLOYED:
                continue
            deployed_at = max(
                (g.at for g in record.governance_log if g.action.startswith("HOTFIX")),
                default=record.created_at,
            )
            evaluated = any(
                g.action == "eval:VALIDATION" and g.at >= deployed_at
                for g in record.governance_log
            )
            if not evaluated:
                pending.append(version_id)
        return pending

    def export_gold(self, snapshot_id: str, split: Optional[str] = None) -> Iterator[str]:
        split_enum = Split(split.upper()) if split else None
        return self.store.gold.export_lines(snapshot_id, split_enum)

    # --- lifecycle ---

    def train(
        self,
        snapshot_id: Optional[str] = None,
        seed: int = 0,
        epochs: Optional[int] = None,
        learning_rate: Optional[float] = None,
        actor: str = "system",
        rationale: str = "retraining on accumulated gold",
    ) -> dict[str, Any]:
        """Train a candidate FT version on a snapshot's train split.

        Retraining is single-flight: a concurrent attempt raises rather than
        queueing a second job.
        """
        if self._retraining.is_set():
            raise InvalidTransition("a retraining job is already in flight")
        self._retraining.set()
        try:
            with self._write_lock:
                snap = self._snapshot_or_latest(snapshot_id)
                examples = self.store.gold.examples_in(snap.snapshot_id, Split.TRAIN)
                if not examples:
                    raise EmptySplit(f"snapshot {snap.snapshot_id} has no train examples")
                artifact = train_reference(
                    [(e.text, e.label) for e in examples],
                    seed=seed,
                    epochs=epochs if epochs is not None else DEFAULT_EPOCHS,
                    learning_rate=(
                        learning_rate if learning_rate is not None else DEFAULT_LEARNING_RATE
                    ),
                    trained_on_snapshot=snap.snapshot_id,
                )
                version_id = self.store.registry.next_version_id(Pathway.FT)
                now = self._now()
                record = VersionRecord(
                    version_id=version_id,
                    pathway=Pathway.FT,
                    payload=artifact,
                    status=CANDIDATE,
                    governance_log=[GovernanceEntry(actor, "trained", rationale, now)],
                    created_from_snapshot=snap.snapshot_id,
                    created_at=now,
                )
                self._append(
                    eventlog.KIND_VERSION, {"action": "create", "version": record.to_dict()}
                )
            return {"version_id": version_id, "snapshot_id": snap.snapshot_id}
        finally:
            self._retraining.clear()

    def _snapshot_or_latest(self, snapshot_id: Optional[str]):
        if snapshot_id is not None:
            return self.store.gold.get_snapshot(snapshot_id)
        latest = self.store.gold.latest_snapshot()
        if latest is None:
            raise UnknownSnapshot("no dataset snapshot exists yet")
        return latest

    def evaluate_version(
        self, version_id: str, snapshot_id: Optional[str] = None, split: Split = Split.VALIDATION
    ) -> EvalReport:
        """Evaluate a version on a snapshot split and record the report.

        The TEST split is consumable at most once per version; promotion
        decisions must read only VALIDATION reports.
        """
        with self._write_lock:
            version = self.store.registry.get(version_id)
            if split is Split.TRAIN:
                raise InvalidQuery("evaluation runs on VALIDATION or TEST only")
            if split is Split.TEST and version.test_eval_count() >= 1:
                raise InvalidTransition(f"{version_id} already consumed its TEST evaluation")
            snap = self._snapshot_or_latest(snapshot_id)
            examples = self.store.gold.examples_in(snap.snapshot_id, split)
            train_pool = self.store.gold.examples_in(snap.snapshot_id, Split.TRAIN)
            report = evaluate_examples(
                version,
                examples,
                snap.snapshot_id,
                split,
                train_examples=train_pool,
                client=self.client,
                default_confidence=self.config.llm_client.default_confidence,
            )
            self._append(
                eventlog.KIND_VERSION,
                {
                    "action": "eval",
                    "version_id": version_id,
                    "report": report.to_dict(),
                    "governance": GovernanceEntry(
                        "system",
                        f"eval:{split.value}",
                        f"snapshot {snap.snapshot_id}, f1={report.f1:.4f}",
                        self._now(),
                    ).to_dict(),
                },
            )
        return report

    def promote(
        self,
        candidate_id: str,
        snapshot_id: Optional[str] = None,
        actor: str = "system",
        rationale: str = "",
    ) -> dict[str, Any]:
        """Run the promotion gate: candidate vs incumbent on one snapshot's
        VALIDATION split. PROMOTE marks the candidate deployable."""
        with self._write_lock:
            candidate = self.store.registry.get(candidate_id)
            snap = self._snapshot_or_latest(snapshot_id)
            candidate_report = candidate.latest_eval(Split.VALIDATION, snap.snapshot_id)
            if candidate_report is None:
                candidate_report = self.evaluate_version(
                    candidate_id, snap.snapshot_id, Split.VALIDATION
                )
            incumbent = self.store.registry.deployed_version(candidate.pathway)
            incumbent_report = None
            if incumbent is not None:
                incumbent_report = incumbent.latest_eval(Split.VALIDATION, snap.snapshot_id)
                if incumbent_report is None:
                    incumbent_report = self.evaluate_version(
                        incumbent.version_id, snap.snapshot_id, Split.VALIDATION
                    )
            decision = promotion_gate(
                candidate_report, incumbent_report, self.config.lifecycle.promotion_margin
            )
            if decision == PROMOTE and candidate.status == CANDIDATE:
                self._append(
                    eventlog.KIND_VERSION,
                    {
                        "action": "status",
                        "version_id": candidate_id,
                        "status": VALIDATED,
                        "governance": GovernanceEntry(
                            actor,
                            "gate:PROMOTE",
                            rationale
                            or (
                                f"f1 {candidate_report.f1:.4f} vs "
                                f"{incumbent_report.f1 if incumbent_report else None} "
                                f"(margin {self.config.lifecycle.promotion_margin})"
                            ),
                            self._now(),
                        ).to_dict(),
                    },
                )
        return {
            "decision": decision,
            "candidate_f1": candidate_report.f1,
            "incumbent_f1": incumbent_report.f1 if incumbent_report else None,
            "snapshot_id": snap.snapshot_id,
        }

    def deploy(self, version_id: str, actor: str = "system", rationale: str = "") -> dict[str, Any]:
        """Deploy a VALIDATED version: retire the incumbent, record the final
        TEST-split evaluation once."""
        with self._write_lock:
            version = self.store.registry.get(version_id)
            if version.status != VALIDATED:
                raise InvalidTransition(f"{version_id} is {version.status}, not {VALIDATED}")
            incumbent = self.store.registry.deployed_version(version.pathway)
            if incumbent is not None and incumbent.version_id != version_id:
                self._append(
                    eventlog.KIND_VERSION,
                    {
                        "action": "status",
                        "version_id": incumbent.version_id,
                        "status": RETIRED,
                        "governance": GovernanceEntry(
                            actor, "retired", f"superseded by {version_id}", self._now()
                        ).to_dict(),
                    },
                )
            self._append(
                eventlog.KIND_VERSION,
                {
                    "action": "status",
                    "version_id": version_id,
                    "status": DEPLOYED,
                    "governance": GovernanceEntry(
                        actor, "deployed", rationale or "passed promotion gate", self._now()
                    ).to_dict(),
                },
            )
            test_report = None
            validation = version.latest_eval(Split.VALIDATION)
            if validation is not None and version.test_eval_count() == 0:
                try:
                    test_report = self.evaluate_version(
                        version_id, validation.snapshot_id, Split.TEST
                    )
                except (EmptySplit, ClientFailure):
                    test_report = None
        return {
            "version_id": version_id,
            "status": DEPLOYED,
            "test_eval": test_report.to_dict() if test_report else None,
        }

    def retrain_due(self, now: Optional[int] = None) -> dict[str, Any]:
        """Evaluate the retraining trigger disjunction without side effects."""
        now = now if now is not None else self._now()
        latest_drift = self.store.drift_reports[-1] if self.store.drift_reports else None
        deployed = self.store.registry.deployed_version(Pathway.FT)
        if deployed is None:
            schedule_due = True
        else:
            schedule_due = (
                deployed.created_at + self.config.lifecycle.retrain_schedule_days * DAY_SECONDS
                <= now
            )
        due = retrain_trigger(
            latest_drift,
            self.store.new_gold_since_training(),
            schedule_due,
            self.config.lifecycle.min_new_gold,
        )
        return {
            "due": due,
            "drift_triggered": bool(latest_drift and latest_drift.triggered),
            "new_gold_since_training": self.store.new_gold_since_training(),
            "schedule_due": schedule_due,
            "retraining_in_flight": self._retraining.is_set(),
        }

    # --- rollout ---

    def start_rollout(
        self,
        variant_b: str,
        fraction_b: float,
        variant_a: Optional[str] = None,
        key_basis: str = "MESSAGE",
        actor: str = "system",
        rationale: str = "",
        review_days: int = 7,
    ) -> dict[str, Any]:
        with self._write_lock:
            b = self.store.registry.get(variant_b)
            if variant_a is None:
                deployed = self.store.registry.deployed_version(b.pathway)
                if deployed is None:
                    raise InvalidTransition("no deployed incumbent to use as variant_a")
                variant_a = deployed.version_id
            a = self.store.registry.get(variant_a)
            for variant in (a, b):
                if variant.status not in (VALIDATED, DEPLOYED):
                    raise InvalidTransition(
                        f"rollout variants must be VALIDATED or DEPLOYED, {variant.version_id} is {variant.status}"
                    )
            if not 0.0 <= fraction_b <= 1.0:
                raise InvalidQuery(f"fraction_b must be in [0, 1], got {fraction_b}")
            if key_basis not in ("MESSAGE", "USER"):
                raise InvalidQuery(f"key_basis must be MESSAGE or USER, got {key_basis!r}")
            now = self._now()
            policy = RolloutPolicy(
                variant_a=variant_a,
                variant_b=variant_b,
                fraction_b=fraction_b,
                key_basis=key_basis,
                started_at=now,
                review_after=now + review_days * DAY_SECONDS,
            )
            self._append(
                eventlog.KIND_ROLLOUT,
                {
                    "action": "start",
                    "policy": policy.to_dict(),
                    "actor": actor,
                    "rationale": rationale,
                },
            )
        return {"rollout": policy.to_dict()}

    def stop_rollout(self, actor: str = "system", rationale: str = "") -> dict[str, Any]:
        with self._write_lock:
            if self.store.registry.rollout is None:
                raise InvalidTransition("no active rollout")
            self._append(
                eventlog.KIND_ROLLOUT,
                {"action": "stop", "actor": actor, "rationale": rationale},
            )
        return {"rollout": None}

    # --- prompts ---

    def apply_prompt_change(
        self,
        template_text: str,
        k_shot: int,
        selection_strategy: str,
        selection_seed: int,
        actor: str,
        rationale: str,
        mode: str = "GATED",
    ) -> dict[str, Any]:
        """Register a prompt version. GATED versions must pass the promotion
        gate; HOTFIX deploys immediately under a mandatory monitoring window."""
        if mode not in ("GATED", "HOTFIX"):
            raise InvalidQuery(f"mode must be GATED or HOTFIX, got {mode!r}")
        template = PromptTemplate(
            template_text=template_text,
            k_shot=k_shot,
            selection_strategy=SelectionStrategy(selection_strategy),
            selection_seed=selection_seed,
        )
        template.validate()
        with self._write_lock:
            now = self._now()
            version_id = self.store.registry.next_version_id(Pathway.P)
            latest_snap = self.store.gold.latest_snapshot()
            review_after = (
                now + self.config.lifecycle.hotfix_monitor_days * DAY_SECONDS
                if mode == "HOTFIX"
                else None
            )
            record = VersionRecord(
                version_id=version_id,
                pathway=Pathway.P,
                payload=template,
                status=CANDIDATE,
                governance_log=[GovernanceEntry(actor, f"created:{mode}", rationale, now)],
                created_from_snapshot=latest_snap.snapshot_id if latest_snap else "",
                created_at=now,
                review_after=review_after,
            )
            self._append(eventlog.KIND_VERSION, {"action": "create", "version": record.to_dict()})
            if mode == "HOTFIX":
                incumbent = self.store.registry.deployed_version(Pathway.P)
                if incumbent is not None:
                    self._append(
                        eventlog.KIND_VERSION,
                        {
                            "action": "status",
                            "version_id": incumbent.version_id,
                            "status": RETIRED,
                            "governance": GovernanceEntry(
                                actor, "retired", f"hotfix {version_id}", now
                            ).to_dict(),
                        },
                    )
                self._append(
                    eventlog.KIND_VERSION,
                    {
                        "action": "status",
                        "version_id": version_id,
                        "status": DEPLOYED,
                        "governance": GovernanceEntry(
                            actor,
                            "HOTFIX:deployed",
                            f"{rationale} (monitoring until {review_after})",
                            now,
                        ).to_dict(),
                    },
                )
        return {"version_id": version_id, "mode": mode, "review_after": review_after}

    # --- drift ---

    def drift_check(self, window_messages: Optional[int] = None) -> dict[str, Any]:
        """Score the recent classified-message window against the deployed FT
        model's training-corpus profile and persist the report."""
        deployed = self.store.registry.deployed_version(Pathway.FT)
        if deployed is None:
            raise UnknownVersion("no deployed FT version to take a reference profile from")
        reference = deployed.payload.vocab_profile
        now = self._now()
        limit = window_messages or self.config.drift.window_messages
        horizon = now - self.config.drift.window_days * DAY_SECONDS
        classified = [
            self.store.messages.get(key)
            for key in self.store.latest_by_pathway
            if key in self.store.messages
        ]
        candidates = [m for m in classified if m.posted_at >= horizon]
        candidates.sort(key=lambda m: (m.posted_at, m.ingest_seq), reverse=True)
        window = list(reversed(candidates[:limit]))
        if not window:
            raise EmptyWindow("no classified messages in the drift window")
        with self._write_lock:
            report = check_drift(
                window,
                reference,
                self.config.drift.tau_jsd,
                self.config.drift.tau_oov,
                computed_at=now,
            )
            self._append(eventlog.KIND_DRIFT, report.to_dict())
        return {"report": report.to_dict(), "retrain": self.retrain_due(now)}

    # --- experiments ---

    def run_experiment(self, spec: ExperimentSpec) -> list[ExperimentCell]:
        if self.client is None:
            raise ClientFailure("experiments need a completion client (mock or HTTP)")
        snap = self.store.gold.get_snapshot(spec.snapshot_id)
        train_pool = self.store.gold.examples_in(snap.snapshot_id, Split.TRAIN)
        validation = self.store.gold.examples_in(snap.snapshot_id, Split.VALIDATION)
        if not validation:
            raise EmptySplit(f"snapshot {snap.snapshot_id} has no validation examples")
        return fewshot_experiment(
            spec,
            train_pool,
            validation,
            self.client,
            default_confidence=self.config.llm_client.default_confidence,
        )

    # --- metrics ---

    def metrics(self) -> dict[str, Any]:
        feedback = self.store.feedback
        by_kind: dict[str, int] = {}
        for event in feedback.events:
            by_kind[event.kind] = by_kind.get(event.kind, 0) + 1
        versions = []
        for version_id, record in sorted(self.store.registry.versions.items()):
            latest_validation = record.latest_eval(Split.VALIDATION)
            versions.append(
                {
                    "version_id": version_id,
                    "pathway": record.pathway.value,
                    "status": record.status,
                    "created_at": record.created_at,
                    "created_from_snapshot": record.created_from_snapshot,
                    "review_after": record.review_after,
                    "validation_f1": latest_validation.f1 if latest_validation else None,
                    "evals": [e.to_dict() for e in record.evals],
                    "governance_log": [g.to_dict() for g in record.governance_log],
                }
            )
        gold_by_split: dict[str, int] = {}
        for example in self.store.gold.live_examples():
            gold_by_split[example.split.value] = gold_by_split.get(example.split.value, 0) + 1
        return {
            "messages": len(self.store.messages),
            "feedback": {"total": len(feedback.events), "by_kind": by_kind},
            "conflicts": {
                "open": len(feedback.open_conflicts()),
                "total": len(feedback.conflicts),
            },
            "gold": {
                "live": len(self.store.gold.live_examples()),
                "by_split": gold_by_split,
                "add_count": self.store.gold.add_count,
                "new_since_training": self.store.new_gold_since_training(),
                "snapshots": [s.snapshot_id for s in self.store.gold.snapshots()],
            },
            "drift": [r.to_dict() for r in self.store.drift_reports],
            "versions": versions,
            "deployed": {p.value: v for p, v in self.store.registry.deployed.items()},
            "rollout": self.store.registry.rollout.to_dict() if self.store.registry.rollout else None,
            "review_queue": len(self.store.review_queue),
            "unparseable_live": dict(self.store.unparseable_live),
            "pending_hotfix_evaluations": self.pending_hotfix_evaluations(),
            "log_seq": self.log.next_seq,
        }

    def public_config(self) -> dict[str, Any]:
        return {
            "implicit_tracking": self.config.privacy.implicit_tracking,
            "review_threshold": self.config.lifecycle.review_threshold,
            "serving_pathway": self.config.lifecycle.serving_pathway,
            "weights": {
                "impression": self.config.weights.impression,
                "scroll_past": self.config.weights.scroll_past,
                "click": self.config.weights.click,
                "dwell_per_10s": self.config.weights.dwell_per_10s,
                "implicit_threshold": self.config.weights.implicit_threshold,
            },
        }

    # --- state snapshot files (replay accelerator) ---

    def write_state_snapshot(self, path: str | Path) -> None:
        self.log.sync()
        doc = {
            "last_seq": self.log.next_seq - 1,
            "digest": self.store.digest(),
            "state": _dump_full_state(self.store),
        }
        Path(path).write_text(
            json.dumps(doc, ensure_ascii=False, separators=(",", ":")), encoding="utf-8"
        )

    def _load_state_snapshot(self, path: str | Path) -> int:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        store = _load_full_state(doc["state"], self.config.weights)
        if store.digest() != doc["digest"]:
            raise FeedloopError(f"state snapshot digest mismatch in {path}")
        self.store = store
        return int(doc["last_seq"]) + 1


def _dump_full_state(store: Store) -> dict[str, Any]:
    return {
        "messages": [m.to_dict() for m in sorted(store.messages.all_messages(), key=lambda m: m.ingest_seq)],
        "events": [e.to_dict() for e in store.feedback.events],
        "conflicts": [store.feedback.conflicts[cid].to_dict() for cid in sorted(store.feedback.conflicts)],
        "gold_history": [
            [e.to_dict() for e in store.gold.history_for(key)]
            for key in sorted(store.gold._history)  # noqa: SLF001 - same-module serializer
        ],
        "gold_live_keys": [[k[0], k[1]] for k in sorted(e.key for e in store.gold.live_examples())],
        "gold_snapshots": [s.to_dict() for s in store.gold.snapshots()],
        "gold_add_count": store.gold.add_count,
        "versions": [store.registry.versions[vid].to_dict() for vid in store.registry.versions],
        "deployed": {p.value: v for p, v in store.registry.deployed.items()},
        "rollout": store.registry.rollout.to_dict() if store.registry.rollout else None,
        "drift_reports": [r.to_dict() for r in store.drift_reports],
        "classifications": [
            c.to_dict()
            for key in sorted(store.by_version)
            for _, c in sorted(store.by_version[key].items())
        ],
        "latest": [
            c.to_dict()
            for key in sorted(store.latest_by_pathway)
            for _, c in sorted(store.latest_by_pathway[key].items())
        ],
        "review_queue": [[k[0], k[1], v] for k, v in sorted(store.review_queue.items())],
        "unparseable_live": dict(store.unparseable_live),
        "gold_count_at_last_train": store.gold_count_at_last_train,
        "applied": store.applied,
    }


def _load_full_state(doc: dict[str, Any], weights) -> Store:
    from .feedback import Conflict
    from .goldset import DatasetSnapshot

    store = Store(weights=weights)
    store.messages.add_batch([Message.from_dict(m) for m in doc["messages"]])
    for event_doc in doc["events"]:
        store.feedback.append(FeedbackEvent.from_dict(event_doc))
    for conflict_doc in doc["conflicts"]:
        conflict = Conflict(
            conflict_id=int(conflict_doc["conflict_id"]),
            channel_id=conflict_doc["channel_id"],
            message_id=int(conflict_doc["message_id"]),
            positions={u: Label(l) for u, l in conflict_doc["positions"].items()},
            status=conflict_doc["status"],
            resolved_label=Label(conflict_doc["resolved_label"]) if conflict_doc["resolved_label"] else None,
            resolver_id=conflict_doc["resolver_id"],
            resolved_at=conflict_doc["resolved_at"],
        )
        store.feedback.conflicts[conflict.conflict_id] = conflict
        if conflict.status == "OPEN":
            store.feedback._open_by_message[conflict.key] = conflict.conflict_id  # noqa: SLF001
    for history in doc["gold_history"]:
        for example_doc in history:
            store.gold.add(GoldExample.from_dict(example_doc))
    live_keys = {(k[0], int(k[1])) for k in doc["gold_live_keys"]}
    for history in doc["gold_history"]:
        key = (history[-1]["channel_id"], int(history[-1]["message_id"]))
        if key not in live_keys:
            store.gold.retract_live(key)
    store.gold.add_count = int(doc["gold_add_count"])
    for snap_doc in doc["gold_snapshots"]:
        snap = DatasetSnapshot(
            snapshot_id=snap_doc["snapshot_id"],
            example_ids=tuple(snap_doc["example_ids"]),
            counts=dict(snap_doc["counts"]),
            created_at=int(snap_doc["created_at"]),
        )
        store.gold._snapshots[snap.snapshot_id] = snap  # noqa: SLF001
        store.gold._snapshot_order.append(snap.snapshot_id)  # noqa: SLF001
    for version_doc in doc["versions"]:
        store.registry.add(VersionRecord.from_dict(version_doc))
    store.registry.deployed = {Pathway(p): v for p, v in doc["deployed"].items()}
    store.registry.rollout = RolloutPolicy.from_dict(doc["rollout"]) if doc["rollout"] else None
    from .drift import DriftReport

    store.drift_reports = [DriftReport.from_dict(r) for r in doc["drift_reports"]]
    for c_doc in doc["classifications"]:
        c = Classification.from_dict(c_doc)
        store.by_version.setdefault((c.channel_id, c.message_id), {})[c.version_id] = c
    for c_doc in doc["latest"]:
        c = Classification.from_dict(c_doc)
        store.latest_by_pathway.setdefault((c.channel_id, c.message_id), {})[c.pathway] = c
    store.review_queue = {(k[0], int(k[1])): k[2] for k in doc["review_queue"]}
    store.unparseable_live = dict(doc["unparseable_live"])
    store.gold_count_at_last_train = int(doc["gold_count_at_last_train"])
    store.applied = int(doc["applied"])
    return store


def replay_log(path: str | Path, weights=None) -> Store:
    """Rebuild state purely from a log file."""
    return replay(EventLog.read_path(path), weights=weights)
