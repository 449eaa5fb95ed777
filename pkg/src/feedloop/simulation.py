"""Closed-loop harness: two vocabulary regimes with planted keyword rules
drive the whole lifecycle through the public service facade.

Regime A messages are labeled by simulated analysts, a reference model is
trained and deployed, then the stream switches to a disjoint regime B. The
harness reports when drift triggered, and the before/after F1 of the deployed
models on a held-out regime-B set. It doubles as the validation path for the
default action weights and drift thresholds.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Any, Optional

from .classify import ModelArtifact, predict_ft
from .config import Config, StorageConfig
from .ingest import Message
from .labels import Label, Split
from .lifecycle import EvalReport
from .service import Service

REGIME_A_FILLER = [
    "weather", "bread", "garden", "football", "music", "coffee", "train",
    "station", "market", "sunday", "neighbors", "school", "bicycle",
    "holiday", "pictures", "evening",
]
REGIME_A_CT = ["chemtrails", "illuminati", "deepstate", "nwo", "reptilians", "fluoride"]

REGIME_B_FILLER = [
    "crypto", "quantum", "festival", "marathon", "recipe", "podcast",
    "startup", "yoga", "galaxy", "museum", "harbor", "cinema", "mountain",
    "library", "summit", "lakeside",
]
REGIME_B_CT = ["nanochips", "plandemic", "adrenochrome", "greatreset", "lizardfolk", "clonefarms"]

BASE_TIME = 1_700_000_000
MESSAGE_SPACING = 60  # one synthetic post per minute

# harness training settings: the package defaults (50 epochs, lr 0.1) suit
# desk-scale gold sets; at simulation scale full-batch descent needs more
# steps to fit the planted keyword rules
SIM_EPOCHS = 400
SIM_LEARNING_RATE = 0.5


@dataclass
class SimulationResult:
    total_messages: int
    switch_at: int
    drift_trigger_offset: Optional[int]  # messages after the switch, None if never
    drift_reports: list[dict[str, Any]]
    f1_before: float
    f1_after: float
    model_before: str
    model_after: str
    promotion: dict[str, Any]
    duration_seconds: float
    live_digest: str
    gold_live: int

    @property
    def delta_f1(self) -> float:
        return self.f1_after - self.f1_before


def _make_message(
    rng: random.Random, index: int, regime: str, channel: str = "sim"
) -> tuple[Message, Label]:
    filler = REGIME_A_FILLER if regime == "A" else REGIME_B_FILLER
    ct_terms = REGIME_A_CT if regime == "A" else REGIME_B_CT
    words = [rng.choice(filler) for _ in range(rng.randint(5, 10))]
    is_ct = rng.random() < 0.5
    if is_ct:
        for _ in range(rng.randint(1, 2)):
            words.insert(rng.randrange(len(words) + 1), rng.choice(ct_terms))
    message = Message(
        channel_id=channel,
        message_id=index,
        posted_at=BASE_TIME + index * MESSAGE_SPACING,
        text=" ".join(words),
    )
    return message, (Label.CT if is_ct else Label.NOT_CT)


def _f1_on_holdout(artifact: ModelArtifact, holdout: list[tuple[Message, Label]]) -> float:
    tp = fp = fn = tn = 0
    for message, gold in holdout:
        predicted = predict_ft(artifact, message.text).label
        if gold is Label.CT and predicted is Label.CT:
            tp += 1
        elif gold is Label.CT:
            fn += 1
        elif predicted is Label.CT:
            fp += 1
        else:
            tn += 1
    return EvalReport.from_counts("holdout", Split.VALIDATION, tp, fp, fn, tn).f1


class _SimClock:
    """Wall time that follows the synthetic stream position."""

    def __init__(self) -> None:
        self.now = BASE_TIME

    def advance_to(self, stamp: int) -> None:
        self.now = max(self.now, stamp)

    def __call__(self) -> int:
        self.now += 1
        return self.now


def run_simulation(
    log_path: str,
    seed: int = 7,
    total: int = 2000,
    switch_at: int = 1000,
    batch_size: int = 250,
    holdout_size: int = 300,
    config: Optional[Config] = None,
) -> SimulationResult:
    """Run the full loop and return what happened; asserts nothing itself."""
    started = time.perf_counter()
    rng = random.Random(seed)
    clock = _SimClock()
    cfg = config or Config(storage=StorageConfig(log_path=log_path, fsync_every=64))
    cfg.storage.log_path = log_path
    service = Service(cfg, clock=clock)

    stream = [
        _make_message(rng, i, "A" if i < switch_at else "B") for i in range(total)
    ]
    truth = {m.key: label for m, label in stream}
    holdout = [
        _make_message(rng, 1_000_000 + i, "B") for i in range(holdout_size)
    ]

    # Phase 1: regime A arrives and analysts label it (cold-start relabels).
    regime_a = [m for m, _ in stream[:switch_at]]
    service.ingest_messages(regime_a)
    for message in regime_a:
        clock.advance_to(message.posted_at)
        service.record_feedback(
            "analyst-1",
            message.channel_id,
            message.message_id,
            "RELABEL",
            label=truth[message.key].value,
        )
    service.snapshot_gold()
    trained = service.train(
        seed=seed,
        epochs=SIM_EPOCHS,
        learning_rate=SIM_LEARNING_RATE,
        rationale="initial model on regime-A gold",
    )
    model_before = trained["version_id"]
    service.promote(model_before, actor="sim", rationale="bootstrap")
    service.deploy(model_before, actor="sim", rationale="bootstrap deployment")
    artifact_before = service.store.registry.get(model_before).payload

    # Phase 2: stream regime B; monitor drift; feed back; retrain when due.
    drift_trigger_offset: Optional[int] = None
    model_after = model_before
    promotion: dict[str, Any] = {}
    position = switch_at
    while position < total:
        batch = [m for m, _ in stream[position : position + batch_size]]
        position += len(batch)
        clock.advance_to(batch[-1].posted_at)
        service.ingest_messages(batch)
        for message in batch:
            displayed = service.store.display_classification(
                message.key, service.serving_pathway
            )
            kind = "AGREE" if displayed.label is truth[message.key] else "DISAGREE"
            service.record_feedback(
                "analyst-1", message.channel_id, message.message_id, kind
            )
        check = service.drift_check(window_messages=batch_size)
        if check["report"]["triggered"] and drift_trigger_offset is None:
            drift_trigger_offset = position - switch_at
        if check["retrain"]["due"] and model_after == model_before:
            service.snapshot_gold()
            retrained = service.train(
                seed=seed + 1,
                epochs=SIM_EPOCHS,
                learning_rate=SIM_LEARNING_RATE,
                rationale="drift-triggered retraining",
            )
            promotion = service.promote(
                retrained["version_id"], actor="sim", rationale="post-drift gate"
            )
            if promotion["decision"] == "PROMOTE":
                service.deploy(
                    retrained["version_id"], actor="sim", rationale="post-drift deployment"
                )
                model_after = retrained["version_id"]

    artifact_after = service.store.registry.get(model_after).payload
    f1_before = _f1_on_holdout(artifact_before, holdout)
    f1_after = _f1_on_holdout(artifact_after, holdout)

    result = SimulationResult(
        total_messages=total,
        switch_at=switch_at,
        drift_trigger_offset=drift_trigger_offset,
        drift_reports=[r.to_dict() for r in service.store.drift_reports],
        f1_before=f1_before,
        f1_after=f1_after,
        model_before=model_before,
        model_after=model_after,
        promotion=promotion,
        duration_seconds=time.perf_counter() - started,
        live_digest=service.digest(),
        gold_live=len(service.store.gold.live_examples()),
    )
    service.close()
    return result
