#!/usr/bin/env python3
"""Seed a deployment with demo data for the web UI: a trained + deployed
model, 50 classified feed messages, and one open conflict.

Usage:
    python scripts/seed_demo.py --log demo-log.jsonl
    feedloop --config demo-config.json serve
"""

import argparse
import json
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from feedloop.config import Config, StorageConfig
from feedloop.service import Service
from feedloop.simulation import _make_message


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--log", default="demo-log.jsonl")
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--feed-size", type=int, default=50)
    args = parser.parse_args()

    cfg = Config(storage=StorageConfig(log_path=args.log))
    cfg.privacy.implicit_tracking = True
    service = Service(cfg)

    rng = random.Random(args.seed)
    training = [_make_message(rng, i, "A", channel="training") for i in range(60)]
    service.ingest_messages([m for m, _ in training])
    for message, label in training:
        service.record_feedback(
            "seed-analyst", message.channel_id, message.message_id, "RELABEL", label=label.value
        )
    service.snapshot_gold()
    trained = service.train(seed=args.seed, rationale="demo seed model")
    service.promote(trained["version_id"], actor="seed", rationale="demo bootstrap")
    service.deploy(trained["version_id"], actor="seed", rationale="demo bootstrap")

    feed = [_make_message(rng, 1000 + i, "A", channel="monitored") for i in range(args.feed_size)]
    service.ingest_messages([m for m, _ in feed])

    # one seeded disagreement for the conflict screen
    target = feed[0][0]
    service.record_feedback("seed-analyst", target.channel_id, target.message_id, "AGREE")
    out = service.record_feedback("seed-reviewer", target.channel_id, target.message_id, "DISAGREE")

    metrics = service.metrics()
    print(
        json.dumps(
            {
                "log": args.log,
                "messages": metrics["messages"],
                "deployed": metrics["deployed"],
                "open_conflicts": metrics["conflicts"]["open"],
                "conflict_id": out.get("conflict_id"),
            },
            indent=2,
        )
    )
    service.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
