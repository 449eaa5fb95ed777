"""Command-line entry points. Every subcommand opens the service on the
configured event log, performs one operation, prints JSON, and exits; `serve`
starts the HTTP API."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from .config import load_config
from .errors import FeedloopError
from .labels import Split
from .lifecycle import ExperimentSpec
from .service import Service, replay_log


def _service(args) -> Service:
    config = load_config(args.config) if args.config else load_config()
    return Service(config)


def _emit(doc) -> None:
    print(json.dumps(doc, indent=2, ensure_ascii=False))


def cmd_ingest(args) -> int:
    service = _service(args)
    try:
        raw = Path(args.file).read_bytes()
        _emit(service.ingest_export(args.channel, raw))
    finally:
        service.close()
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    service = _service(args)
    app = create_app(service)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    finally:
        service.close()
    return 0


def cmd_train(args) -> int:
    service = _service(args)
    try:
        _emit(service.train(snapshot_id=args.snapshot, seed=args.seed))
    finally:
        service.close()
    return 0


def cmd_evaluate(args) -> int:
    service = _service(args)
    try:
        report = service.evaluate_version(
            args.version, snapshot_id=args.snapshot, split=Split(args.split.upper())
        )
        _emit(report.to_dict())
    finally:
        service.close()
    return 0


def cmd_promote(args) -> int:
    service = _service(args)
    try:
        _emit(service.promote(args.version, snapshot_id=args.snapshot, actor=args.actor))
    finally:
        service.close()
    return 0


def cmd_deploy(args) -> int:
    service = _service(args)
    try:
        _emit(service.deploy(args.version, actor=args.actor))
    finally:
        service.close()
    return 0


def cmd_snapshot(args) -> int:
    service = _service(args)
    try:
        _emit(service.snapshot_gold())
    finally:
        service.close()
    return 0


def cmd_drift_check(args) -> int:
    service = _service(args)
    try:
        _emit(service.drift_check(window_messages=args.window))
    finally:
        service.close()
    return 0


def cmd_experiment(args) -> int:
    service = _service(args)
    try:
        spec = ExperimentSpec.from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
        _emit([cell.to_dict() for cell in service.run_experiment(spec)])
    finally:
        service.close()
    return 0


def cmd_rollout(args) -> int:
    service = _service(args)
    try:
        if args.stop:
            _emit(service.stop_rollout(actor=args.actor))
        else:
            if args.b is None:
                raise FeedloopError("rollout requires --b <version> (or --stop)")
            _emit(
                service.start_rollout(
                    variant_b=args.b,
                    fraction_b=args.fraction,
                    variant_a=args.a,
                    key_basis=args.basis.upper(),
                    actor=args.actor,
                )
            )
    finally:
        service.close()
    return 0


def cmd_export(args) -> int:
    service = _service(args)
    try:
        lines = list(service.export_gold(args.snapshot, args.split))
        out = "\n".join(lines) + ("\n" if lines else "")
        if args.out == "-":
            sys.stdout.write(out)
        else:
            Path(args.out).write_text(out, encoding="utf-8")
            _emit({"snapshot": args.snapshot, "rows": len(lines), "out": args.out})
    finally:
        service.close()
    return 0


def cmd_replay_verify(args) -> int:
    config = load_config(args.config) if args.config else load_config()
    store = replay_log(config.storage.log_path, weights=config.weights)
    digest = store.digest()
    result = {"records": store.applied, "digest": digest}
    if args.expect:
        result["matches"] = digest == args.expect
        _emit(result)
        return 0 if result["matches"] else 1
    _emit(result)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feedloop")
    parser.add_argument("--config", help="path to JSON config file", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a Telegram desktop-export file")
    p.add_argument("--channel", required=True)
    p.add_argument("--file", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("serve", help="replay the log and serve the HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("train", help="train a candidate reference model on a snapshot")
    p.add_argument("--snapshot", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a version on a gold split")
    p.add_argument("--version", required=True)
    p.add_argument("--split", default="validation", choices=["validation", "test"])
    p.add_argument("--snapshot", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("promote", help="run the promotion gate for a candidate")
    p.add_argument("--version", required=True)
    p.add_argument("--snapshot", default=None)
    p.add_argument("--actor", default="operator")
    p.set_defaults(func=cmd_promote)

    p = sub.add_parser("deploy", help="deploy a validated version")
    p.add_argument("--version", required=True)
    p.add_argument("--actor", default="operator")
    p.set_defaults(func=cmd_deploy)

    p = sub.add_parser("snapshot", help="cut an immutable gold-set snapshot")
    p.set_defaults(func=cmd_snapshot)

    p = sub.add_parser("drift-check", help="score the recent window against the deployed model")
    p.add_argument("--window", type=int, default=None)
    p.set_defaults(func=cmd_drift_check)

    p = sub.add_parser("experiment", help="run a few-shot experiment grid from a JSON spec")
    p.add_argument("--spec", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("rollout", help="start or stop an A/B rollout")
    p.add_argument("--b", default=None, help="variant B version id")
    p.add_argument("--a", default=None, help="variant A version id (default: deployed)")
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--basis", default="message", choices=["message", "user"])
    p.add_argument("--actor", default="operator")
    p.add_argument("--stop", action="store_true")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("export", help="export a snapshot split as JSONL")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("replay-verify", help="replay the log and print the state digest")
    p.add_argument("--expect", default=None, help="fail unless the digest matches")
    p.set_defaults(func=cmd_replay_verify)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FeedloopError as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
