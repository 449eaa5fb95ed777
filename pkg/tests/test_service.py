import json

import pytest

from feedloop.config import Config, StorageConfig
from feedloop.errors import (
    AlreadyResolved,
    ConflictOpen,
    EmptyWindow,
    ImplicitTrackingDisabled,
    InvalidQuery,
    InvalidTransition,
    UnknownMessage,
    UnknownVersion,
)
from feedloop.ingest import FeedQuery, Message
from feedloop.labels import Label, Provenance, Split
from feedloop.service import Service, replay_log
from feedloop.store import Store

from .conftest import EPOCH, bootstrap_model, make_messages


def test_empty_state_digest_is_a_fixed_constant():
    empty = Store().digest()
    assert empty == Store().digest()
    # pinned: the canonical empty-state serialization hash
    assert empty == "6ec9e9c11b888ea579a7d5227d0aa917681ac239da2a25de06e3ecc7247de139"


def test_ingest_via_export_then_feed(make_service):
    service = make_service()
    doc = json.dumps(
        {
            "messages": [
                {"id": i, "type": "message", "date": "2023-11-14T10:00:00", "text": f"post {i}"}
                for i in range(3)
            ]
        }
    )
    report = service.ingest_export("news", doc)
    assert report["accepted"] == 3
    page = service.feed(FeedQuery(page_size=10))
    assert len(page["items"]) == 3
    assert page["items"][0]["classification"] is None  # nothing deployed yet


def test_reingest_counts_duplicates(make_service):
    service = make_service()
    batch = make_messages(4)
    assert service.ingest_messages(batch)["accepted"] == 4
    again = service.ingest_messages(batch)
    assert (again["accepted"], again["duplicates"]) == (0, 4)


def test_feedback_unknown_message(make_service):
    service = make_service()
    with pytest.raises(UnknownMessage):
        service.record_feedback("u", "ghost", 1, "RELABEL", label="CT")


def test_agree_requires_displayed_classification(make_service):
    service = make_service()
    service.ingest_messages(make_messages(1))
    with pytest.raises(InvalidQuery):
        service.record_feedback("u", "chan", 0, "AGREE")


def test_bootstrap_deploys_and_classifies_new_messages(make_service):
    service = make_service()
    version, _ = bootstrap_model(service)
    report = service.ingest_messages(
        [Message("train", 500, EPOCH + 500, "the secret elite plot thickens")]
    )
    assert report["classified"] == 1
    page = service.feed(FeedQuery(channel_filter=frozenset({"train"}), page_size=1))
    top = page["items"][0]
    assert top["classification"]["version_id"] == version
    assert top["classification"]["label"] == "CT"


def test_empty_text_messages_are_stored_but_never_classified(make_service):
    service = make_service()
    bootstrap_model(service)
    report = service.ingest_messages([Message("train", 900, EPOCH, "", media_flag=True)])
    assert report["accepted"] == 1
    assert report["classified"] == 0


def test_explicit_disagreement_opens_conflict_and_blocks_gold(make_service):
    service = make_service()
    bootstrap_model(service)
    service.ingest_messages([Message("train", 600, EPOCH + 600, "secret plot material")])
    service.record_feedback("a", "train", 600, "AGREE")
    out = service.record_feedback("b", "train", 600, "DISAGREE")
    assert out["aggregate"] == "CONFLICT"
    conflict_id = out["conflict_id"]
    assert any(c["conflict_id"] == conflict_id for c in service.conflicts())
    assert service.store.gold.live_for(("train", 600)) is None
    # direct gold add while the conflict is open is refused at fold level
    with pytest.raises(ConflictOpen):
        service._add_gold(("train", 600), Label.CT, Provenance.explicit())


def test_resolving_conflict_emits_resolved_gold(make_service):
    service = make_service()
    bootstrap_model(service)
    service.ingest_messages([Message("train", 601, EPOCH + 601, "contested claim here")])
    service.record_feedback("a", "train", 601, "AGREE")
    out = service.record_feedback("b", "train", 601, "DISAGREE")
    result = service.resolve_conflict(out["conflict_id"], "CT", "moderator")
    assert result["gold"]["provenance"].startswith("RESOLVED:")
    live = service.store.gold.live_for(("train", 601))
    assert live.label.value == "CT"
    with pytest.raises(AlreadyResolved):
        service.resolve_conflict(out["conflict_id"], "CT", "moderator")


def test_consensus_dissolves_conflict(make_service):
    service = make_service()
    bootstrap_model(service)
    service.ingest_messages([Message("train", 602, EPOCH + 602, "another contested claim")])
    service.record_feedback("a", "train", 602, "AGREE")
    out = service.record_feedback("b", "train", 602, "DISAGREE")
    assert "conflict_id" in out
    # b self-corrects; the conflict auto-resolves and unanimity becomes gold
    final = service.record_feedback("b", "train", 602, "AGREE")
    assert final["aggregate"] == "UNANIMOUS"
    assert final.get("gold_added")
    assert service.conflicts() == []


def test_unanimous_feedback_becomes_gold_once(make_service):
    service = make_service()
    bootstrap_model(service)
    service.ingest_messages([Message("train", 603, EPOCH + 603, "plain message text")])
    first = service.record_feedback("a", "train", 603, "RELABEL", label="NOT_CT")
    assert first.get("gold_added")
    second = service.record_feedback("b", "train", 603, "RELABEL", label="NOT_CT")
    assert not second.get("gold_added")  # same label and provenance: no churn
    assert len(service.store.gold.history_for(("train", 603))) == 1


def test_implicit_affirmation_accumulates_to_gold(make_service):
    service = make_service()
    bootstrap_model(service)
    service.ingest_messages([Message("train", 604, EPOCH + 604, "secret elite plot again")])
    batch = [
        {"user_id": "viewer", "channel_id": "train", "message_id": 604, "kind": "CLICK"},
        {"user_id": "viewer", "channel_id": "train", "message_id": 604, "kind": "CLICK"},
    ]
    service.record_implicit_batch(batch)
    live = service.store.gold.live_for(("train", 604))
    assert live is not None
    assert live.provenance.kind == "IMPLICIT"


def test_privacy_switch_blocks_implicit(make_service, tmp_path):
    cfg = Config(storage=StorageConfig(log_path=str(tmp_path / "private.jsonl")))
    assert cfg.privacy.implicit_tracking is False  # opt-in by default
    service = make_service(config=cfg)
    service.ingest_messages(make_messages(1))
    with pytest.raises(ImplicitTrackingDisabled):
        service.record_implicit_batch(
            [{"user_id": "u", "channel_id": "chan", "message_id": 0, "kind": "IMPRESSION"}]
        )


def test_review_queue_collects_low_confidence(make_service, tmp_path):
    cfg = Config(storage=StorageConfig(log_path=str(tmp_path / "review.jsonl")))
    cfg.privacy.implicit_tracking = True
    cfg.lifecycle.review_threshold = 0.99  # nearly everything needs review
    service = make_service(config=cfg)
    bootstrap_model(service)
    service.ingest_messages([Message("train", 700, EPOCH + 700, "vaguely unusual words")])
    queue = service.review_queue()
    assert any(item["message"]["message_id"] == 700 for item in queue)
    # explicit adjudication clears the entry
    service.record_feedback("a", "train", 700, "RELABEL", label="NOT_CT")
    assert all(item["message"]["message_id"] != 700 for item in service.review_queue())


def test_rating_task_is_deterministic(make_service):
    service = make_service()
    service.ingest_messages(make_messages(30))
    a = service.rating_task(n=5, seed=11)
    b = service.rating_task(n=5, seed=11)
    assert [i["message"]["message_id"] for i in a] == [i["message"]["message_id"] for i in b]


def test_pseudonymization_hides_raw_ids(make_service):
    service = make_service()
    service.ingest_messages(make_messages(1))
    service.record_feedback("alice@example.org", "chan", 0, "RELABEL", label="CT")
    raw = open(service.log.path).read()
    assert "alice@example.org" not in raw
    assert service.pseudonymize("alice@example.org") in raw


def test_drift_check_requires_deployed_model(make_service):
    service = make_service()
    service.ingest_messages(make_messages(3))
    with pytest.raises(UnknownVersion):
        service.drift_check()


def test_drift_check_empty_window(make_service):
    service = make_service()
    bootstrap_model(service)
    # bootstrap classified its own corpus; move past the 7-day horizon
    service._clock.now += 40 * 86400
    with pytest.raises(EmptyWindow):
        service.drift_check()


def test_test_split_consumed_at_most_once(make_service):
    service = make_service()
    version, snap = bootstrap_model(service, n_per_class=20)
    with pytest.raises(InvalidTransition):
        service.evaluate_version(version, snap, Split.TEST)  # deploy already used it


def test_single_flight_retraining(make_service):
    service = make_service()
    bootstrap_model(service)
    service._retraining.set()
    try:
        with pytest.raises(InvalidTransition):
            service.train()
    finally:
        service._retraining.clear()


def test_live_digest_equals_replay(make_service, tmp_path):
    service = make_service()
    bootstrap_model(service)
    service.ingest_messages([Message("train", 800, EPOCH + 800, "one more message")])
    service.record_feedback("a", "train", 800, "AGREE")
    live = service.digest()
    service.log.sync()
    replayed = replay_log(service.log.path, weights=service.config.weights)
    assert replayed.digest() == live


def test_restart_preserves_state(tmp_path, clock):
    cfg = Config(storage=StorageConfig(log_path=str(tmp_path / "restart.jsonl")))
    cfg.privacy.implicit_tracking = True
    service = Service(cfg, clock=clock)
    bootstrap_model(service)
    live = service.digest()
    service.close()
    reopened = Service(cfg, clock=clock)
    assert reopened.digest() == live
    reopened.close()


def test_state_snapshot_accelerated_boot(tmp_path, clock):
    cfg = Config(
        storage=StorageConfig(
            log_path=str(tmp_path / "snap.jsonl"),
            state_snapshot_path=str(tmp_path / "state.json"),
        )
    )
    cfg.privacy.implicit_tracking = True
    service = Service(cfg, clock=clock)
    bootstrap_model(service)
    live = service.digest()
    service.close()  # writes the state snapshot

    fast = Service(cfg, clock=clock)
    assert fast.digest() == live
    # the tail keeps appending after a snapshot boot
    fast.ingest_messages([Message("x", 1, EPOCH, "tail message")])
    tail_digest = fast.digest()
    fast.close()
    verify = replay_log(cfg.storage.log_path, weights=cfg.weights)
    assert verify.digest() == tail_digest


def test_export_gold_roundtrip(make_service):
    service = make_service()
    _, snap = bootstrap_model(service)
    lines = list(service.export_gold(snap))
    assert lines
    rows = [json.loads(l) for l in lines]
    keys = [(r["channel_id"], r["message_id"]) for r in rows]
    assert keys == sorted(keys)
    assert "\n".join(service.export_gold(snap)) == "\n".join(lines)


def test_hotfix_prompt_classifies_on_ingest(make_service, tmp_path):
    from feedloop.llm_client import MockCompletionClient

    cfg = Config(storage=StorageConfig(log_path=str(tmp_path / "p-serve.jsonl")))
    cfg.privacy.implicit_tracking = True
    cfg.lifecycle.serving_pathway = "P"
    service = make_service(config=cfg)
    service.client = MockCompletionClient(["CT", "garbage", "also garbage"])
    service.apply_prompt_change(
        template_text="{examples}Q: {message}\nA:",
        k_shot=0,
        selection_strategy="RANDOM_SEEDED",
        selection_seed=0,
        actor="oncall",
        rationale="bootstrap prompt",
        mode="HOTFIX",
    )
    report = service.ingest_messages(
        [
            Message("p", 1, EPOCH, "first message"),
            Message("p", 2, EPOCH + 1, "second message"),
        ]
    )
    assert report["classified"] == 1
    assert report["unparseable"] == 1  # retry consumed the second garbage answer
    page = service.feed(FeedQuery(page_size=5))
    by_id = {i["message"]["message_id"]: i for i in page["items"]}
    assert by_id[1]["classification"]["label"] == "CT"
    assert by_id[1]["classification"]["pathway"] == "P"
    assert by_id[2]["classification"] is None  # unparseable kept no classification
    queue = service.review_queue()
    assert any(item["reason"] == "unparseable" for item in queue)


def test_rollout_display_prefers_assigned_variant(make_service):
    service = make_service()
    v1, snap = bootstrap_model(service)
    # a second validated version
    v2 = service.train(seed=9)["version_id"]
    service.promote(v2, snap)
    service.start_rollout(variant_b=v2, fraction_b=0.0, key_basis="MESSAGE")
    service.ingest_messages([Message("train", 950, EPOCH + 950, "plot of the elite")])
    item = service.feed(FeedQuery(page_size=1))["items"][0]
    assert item["classification"]["version_id"] == v1  # fraction 0.0: everything stays A
    # during the rollout both variants classified the message
    assert set(service.store.by_version[("train", 950)]) == {v1, v2}
    service.stop_rollout()
    service.start_rollout(variant_b=v2, fraction_b=1.0, key_basis="MESSAGE")
    item = service.feed(FeedQuery(page_size=1))["items"][0]
    assert item["classification"]["version_id"] == v2  # fraction 1.0: everything is B


def test_feed_time_range_filters(make_service):
    service = make_service()
    service.ingest_messages(make_messages(5))
    page = service.feed(FeedQuery(time_from=EPOCH + 60, time_to=EPOCH + 180, page_size=10))
    assert [i["message"]["message_id"] for i in page["items"]] == [3, 2, 1]


def test_retention_window_expires_implicit_influence(tmp_path, clock):
    cfg = Config(storage=StorageConfig(log_path=str(tmp_path / "retention.jsonl")))
    cfg.privacy.implicit_tracking = True
    cfg.privacy.retention_days = 1
    service = Service(cfg, clock=clock)
    bootstrap_model(service)
    service.ingest_messages([Message("train", 970, EPOCH + 970, "secret plot words")])
    service.record_feedback("viewer", "train", 970, "CLICK")
    service.record_feedback("viewer", "train", 970, "CLICK")
    stance = service.store.feedback.user_stance(
        service.pseudonymize("viewer"), ("train", 970), service.config.weights
    )
    assert stance.kind == "IMPLICIT_AGREE"
    # two days later another user's event moves the message's log horizon
    service._clock.now += 2 * 86400
    service.record_feedback("other", "train", 970, "IMPRESSION")
    stale = service.store.feedback.user_stance(
        service.pseudonymize("viewer"), ("train", 970), service.config.weights
    )
    assert stale.kind == "NONE"
    service.close()


def test_concurrent_readers_during_mutation(make_service):
    import threading

    service = make_service()
    bootstrap_model(service)
    service.ingest_messages(make_messages(50, channel="busy"))
    errors = []

    def reader():
        try:
            for _ in range(60):
                service.feed(FeedQuery(page_size=20))
                service.metrics()
                service.review_queue()
        except Exception as exc:  # noqa: BLE001 - collecting for assertion
            errors.append(exc)

    def writer(offset):
        try:
            for i in range(30):
                service.record_feedback(
                    f"user-{offset}", "busy", i, "RELABEL", label="CT" if i % 2 else "NOT_CT"
                )
        except Exception as exc:  # noqa: BLE001
            errors.append(exc)

    threads = [threading.Thread(target=reader) for _ in range(3)] + [
        threading.Thread(target=writer, args=(n,)) for n in range(3)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert errors == []
    service.log.sync()
    assert replay_log(service.log.path, weights=service.config.weights).digest() == service.digest()


def test_negative_dwell_rejected(make_service):
    service = make_service()
    bootstrap_model(service)
    service.ingest_messages([Message("train", 980, EPOCH + 980, "secret plot here")])
    with pytest.raises(InvalidQuery):
        service.record_feedback("u", "train", 980, "DWELL", dwell_seconds=-3)


def test_label_ignored_on_non_relabel_kinds(make_service):
    service = make_service()
    bootstrap_model(service)
    service.ingest_messages([Message("train", 981, EPOCH + 981, "secret plot here")])
    service.record_feedback("u", "train", 981, "AGREE", label="NOT_CT")
    events = service.store.feedback.events_for(("train", 981))
    assert events[-1].label is None  # AGREE derives its label from the display


def test_train_split_evaluation_rejected(make_service):
    service = make_service()
    version, snap = bootstrap_model(service)
    with pytest.raises(InvalidQuery):
        service.evaluate_version(version, snap, Split.TRAIN)
