"""Operator command line: simulate, replay, serve, bench, train, report.

Machine-readable results (JSON/JSONL) go to stdout and files; human
summaries go to stderr. Exit codes: 0 ok, 1 usage, 2 unreadable input or
other I/O failure, 3 internal invariant failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import ActionClass, PipelineConfig, load_config
from .tracking import FilterParams
from .action import ClassifierModel, ModelError, RULE_BASED_MODEL, train_linear
from .feedback import FeedbackLog, VerdictError, retrain
from .kinematics import WindowFeatures
from .pipeline import compute_metrics, replay_file
from .simulator import (
    SimConfig,
    generate_match,
    review_time_savings,
    read_truth,
    write_stream,
    write_truth,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(doc: dict) -> None:
    print(json.dumps(doc, separators=(",", ":")))


def _say(text: str) -> None:
    print(text, file=sys.stderr)


def _load_pipeline_setup(args):
    config = PipelineConfig()
    tracker: dict = {}
    if getattr(args, "config", None):
        config, tracker = load_config(args.config)
    params = FilterParams(**tracker) if tracker else FilterParams()
    model = RULE_BASED_MODEL
    if getattr(args, "model", None):
        model = ClassifierModel.load(args.model)
    return config, params, model


def _default_truth_path(stream_path: Path) -> Path:
    if stream_path.suffix == ".jsonl":
        return stream_path.with_suffix(".truth.jsonl")
    return Path(str(stream_path) + ".truth.jsonl")


def _parse_mix(text: str) -> dict:
    mix = {}
    for part in text.split(","):
        kind, _, weight = part.partition("=")
        mix[kind.strip()] = float(weight)
    return mix


def cmd_simulate(args) -> int:
    mix = _parse_mix(args.mix) if args.mix else None
    sim_kwargs = dict(
        seed=args.seed,
        n_events=args.events,
        noise_sigma_m=args.noise,
        occlusion_prob=args.occlusion,
        fps=args.fps,
    )
    if mix:
        sim_kwargs["event_mix"] = mix
    sim = SimConfig(**sim_kwargs)
    frames, truth = generate_match(sim)
    out = Path(args.out)
    truth_path = Path(args.truth) if args.truth else _default_truth_path(out)
    write_stream(frames, out)
    write_truth(truth, truth_path)
    _emit({
        "stream": str(out),
        "truth": str(truth_path),
        "frames": len(frames),
        "events": len(truth),
    })
    _say(f"wrote {len(frames)} frames / {len(truth)} events to {out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    config, params, model = _load_pipeline_setup(args)
    decisions_out = None
    if args.out:
        decisions_out = open(args.out, "w", encoding="utf-8")

    def sink(decision):
        if decisions_out:
            decisions_out.write(decision.to_json() + "\n")

    try:
        result = replay_file(
            args.infile, config=config, filter_params=params, model=model,
            speed_factor=args.pace, on_decision=sink,
        )
    finally:
        if decisions_out:
            decisions_out.close()

    truth = None
    truth_path = Path(args.truth) if args.truth else _default_truth_path(Path(args.infile))
    if truth_path.exists():
        truth = read_truth(truth_path)
    metrics = compute_metrics(result.decisions, truth, config)
    metrics["malformed_lines"] = result.malformed_lines
    metrics["dropped_frames"] = result.dropped_frames
    _emit(metrics)
    acc = metrics.get("accuracy")
    _say(
        f"replayed {args.infile}: {metrics['decisions']} decisions"
        + (f", accuracy {acc:.3f}" if acc is not None else "")
        + f", p95 latency {metrics['latency_ms']['p95']:.1f} ms"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    config, params, model = _load_pipeline_setup(args)
    result = replay_file(args.infile, config=config, filter_params=params, model=model)
    lat = sorted(d.latency.t_total_ms for d in result.decisions)
    if lat:
        stats = {
            "mean": float(np.mean(lat)),
            "p50": float(np.percentile(lat, 50)),
            "p95": float(np.percentile(lat, 95)),
            "max": lat[-1],
        }
    else:
        stats = {"mean": 0.0, "p50": 0.0, "p95": 0.0, "max": 0.0}
    doc = {
        "events": len(result.decisions),
        "latency_ms": stats,
        "budget_ms": config.latency_budget_ms,
        "budget_violations": sum(1 for d in result.decisions if "budget_exceeded" in d.flags),
        "within_budget": bool(lat) and stats["p95"] <= config.latency_budget_ms,
    }
    _emit(doc)
    _say(
        f"bench: {doc['events']} events, p95 {stats['p95']:.1f} ms "
        f"vs budget {config.latency_budget_ms:.0f} ms"
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import ServiceSettings, serve

    config, params, model = _load_pipeline_setup(args)
    settings = ServiceSettings(
        log_dir=Path(args.log_dir),
        config=config,
        filter_params=params,
        model=model,
    )
    _say(f"serving on port {args.port}, logs in {args.log_dir}")
    serve(settings, host=args.host, port=args.port)
    return EXIT_OK


def _read_labeled_features(features_path: str, labels_path: str):
    samples = []
    with open(features_path, "r", encoding="utf-8") as f:
        features = [WindowFeatures.from_wire(json.loads(line)) for line in f if line.strip()]
    with open(labels_path, "r", encoding="utf-8") as f:
        labels = [ActionClass.from_wire(line.strip()) for line in f if line.strip()]
    if len(features) != len(labels):
        raise ValueError("features/labels length mismatch")
    return list(zip(features, labels))


def cmd_train(args) -> int:
    if args.feedback_log:
        if not args.model:
            raise SystemExit(EXIT_USAGE)
        base = ClassifierModel.load(args.model)
        log = FeedbackLog(args.feedback_log).load()
        model = retrain(base, log, epochs=args.epochs, learning_rate=args.lr)
        doc = {"version": model.version, "kind": model.kind, "samples": len(log)}
    else:
        if not (args.features and args.labels):
            raise SystemExit(EXIT_USAGE)
        samples = _read_labeled_features(args.features, args.labels)
        model = train_linear(samples, epochs=args.epochs, learning_rate=args.lr)
        from .action import training_accuracy

        doc = {
            "version": model.version,
            "kind": model.kind,
            "samples": len(samples),
            "training_accuracy": training_accuracy(model, samples),
        }
    model.save(args.out)
    doc["model"] = str(args.out)
    _emit(doc)
    _say(f"wrote model v{model.version} to {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    minutes = review_time_savings(args.matches, args.requests, args.minutes)
    _emit({"minutes": minutes, "hours": minutes / 60.0})
    _say(f"review time saved: {minutes:g} minutes ({minutes / 60.0:g} hours)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kickjudge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic labeled match")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--events", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--occlusion", type=float, default=0.0)
    p.add_argument("--fps", type=float, default=60.0)
    p.add_argument("--mix", type=str, default=None,
                   help="e.g. slide=0.3,standard=0.4,turning=0.3")
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="score a recorded stream")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--out", default=None, help="decision log JSONL")
    p.add_argument("--pace", type=float, default=None,
                   help="honor timestamps at this speed factor (default: unpaced)")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("bench", help="unpaced replay, latency percentiles")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--model", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the live scoring service")
    p.add_argument("--port", type=int, default=8700)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--config", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--log-dir", default="logs")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("train", help="fit or retrain the linear classifier")
    p.add_argument("--features", default=None, help="WindowFeatures JSONL")
    p.add_argument("--labels", default=None, help="class name per line")
    p.add_argument("--feedback-log", default=None, help="FeedbackSample JSONL")
    p.add_argument("--model", default=None, help="base model for retraining")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.5)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("report", help="manual review time replaced per day")
    p.add_argument("--matches", type=float, required=True)
    p.add_argument("--requests", type=float, required=True)
    p.add_argument("--minutes", type=float, required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        _say(f"error: cannot read {exc.filename or exc}")
        return EXIT_IO
    except (OSError, json.JSONDecodeError) as exc:
        _say(f"error: {exc}")
        return EXIT_IO
    except (ValueError, ModelError, VerdictError) as exc:
        _say(f"error: {exc}")
        return EXIT_INTERNAL
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    raise SystemExit(main())
