#!/usr/bin/env python3
"""Run the closed-loop drift/retraining simulation and print the outcome.

Usage:
    python scripts/run_simulation.py [--seed N] [--log PATH] [--total N]
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from feedloop.simulation import run_simulation


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--total", type=int, default=2000)
    parser.add_argument("--switch-at", type=int, default=1000)
    parser.add_argument("--batch-size", type=int, default=250)
    parser.add_argument("--log", default=None, help="event log path (default: temp file)")
    args = parser.parse_args()

    log_path = args.log or str(Path(tempfile.mkdtemp()) / "simulation-log.jsonl")
    result = run_simulation(
        log_path,
        seed=args.seed,
        total=args.total,
        switch_at=args.switch_at,
        batch_size=args.batch_size,
    )
    print(
        json.dumps(
            {
                "total_messages": result.total_messages,
                "switch_at": result.switch_at,
                "drift_trigger_offset": result.drift_trigger_offset,
                "f1_before": result.f1_before,
                "f1_after": result.f1_after,
                "delta_f1": result.delta_f1,
                "model_before": result.model_before,
                "model_after": result.model_after,
                "promotion": result.promotion,
                "gold_live": result.gold_live,
                "duration_seconds": result.duration_seconds,
                "log_path": log_path,
                "live_digest": result.live_digest,
            },
            indent=2,
        )
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
