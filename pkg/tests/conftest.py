import json

import pytest

from feedloop.config import Config, StorageConfig
from feedloop.ingest import Message
from feedloop.service import Service

EPOCH = 1_700_000_000


class TickingClock:
    """Deterministic clock: one second per call, jumpable via `.now`."""

    def __init__(self, start: int = EPOCH) -> None:
        self.now = start

    def __call__(self) -> int:
        self.now += 1
        return self.now


@pytest.fixture
def clock():
    return TickingClock()


@pytest.fixture
def make_service(tmp_path, clock):
    """Factory for services on fresh tmp logs; closes them on teardown."""
    created = []

    def factory(config: Config | None = None, **kwargs) -> Service:
        cfg = config or Config(
            storage=StorageConfig(log_path=str(tmp_path / f"log-{len(created)}.jsonl"))
        )
        if config is None:
            cfg.privacy.implicit_tracking = True
        service = Service(cfg, clock=kwargs.pop("clock", clock), **kwargs)
        created.append(service)
        return service

    yield factory
    for service in created:
        service.close()


def make_messages(n: int, channel: str = "chan", text: str = "hello world", start_id: int = 0):
    return [
        Message(
            channel_id=channel,
            message_id=start_id + i,
            posted_at=EPOCH + i * 60,
            text=f"{text} {start_id + i}",
        )
        for i in range(n)
    ]


def export_doc(entries) -> str:
    return json.dumps({"messages": entries})


def bootstrap_model(service: Service, n_per_class: int = 6, channel: str = "train"):
    """Ingest a separable corpus, label it, train, promote, and deploy."""
    ct = [
        Message(channel, i, EPOCH + i, f"secret elite plot number {i}")
        for i in range(n_per_class)
    ]
    not_ct = [
        Message(channel, 100 + i, EPOCH + 100 + i, f"buy fresh bread today {i}")
        for i in range(n_per_class)
    ]
    service.ingest_messages(ct + not_ct)
    for msg in ct:
        service.record_feedback("trainer", channel, msg.message_id, "RELABEL", label="CT")
    for msg in not_ct:
        service.record_feedback("trainer", channel, msg.message_id, "RELABEL", label="NOT_CT")
    snap = service.snapshot_gold()["snapshot"]["snapshot_id"]
    version = service.train()["version_id"]
    service.promote(version)
    service.deploy(version)
    return version, snap
