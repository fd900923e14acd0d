"""Command-line entry points: run, compare, scale."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io as apio
from .config import ConfigError, load_config


def _parse_worker_list(text: str) -> list[int]:
    try:
        counts = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("worker counts must be integers")
    if not counts or any(c < 1 for c in counts):
        raise argparse.ArgumentTypeError("worker counts must be >= 1")
    return counts


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    workers = args.workers if args.workers else None
    state = apio.run_from_config(cfg, workers=workers)
    out = args.output or cfg.output
    if out:
        apio.write_csv(state.collect(), out,
                       observable_index=cfg.observable_index)
        apio.write_summary(state, str(Path(out).with_suffix(".summary.json")))
        print(f"wrote {out}")
    else:
        points = sum(len(m) for m in state.maps.values())
        print(f"{points} points on {len(state.maps)} branch(es), "
              f"{state.stats.jobs_done} jobs "
              f"(serial {state.stats.serial_time:.3f}s, "
              f"parallel {state.stats.queue_time:.3f}s)")
    return 0


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    counts = args.workers
    if len(counts) != 2:
        print("compare needs exactly two worker counts", file=sys.stderr)
        return 2
    run_a = apio.run_from_config(cfg, workers=counts[0]).collect()
    run_b = apio.run_from_config(cfg, workers=counts[1]).collect()
    report = apio.compare(run_a, run_b)
    tolerance = 10.0 * cfg.alm.newton_tol
    print(json.dumps({
        "workers": counts,
        "keys_match": report.keys_match,
        "missing_keys": [list(k) for k in report.missing_keys],
        "extra_keys": [list(k) for k in report.extra_keys],
        "max_deviation": report.max_deviation,
        "tolerance": tolerance,
        "ok": report.ok(tolerance),
    }, indent=2))
    return 0 if report.ok(tolerance) else 1


def cmd_scale(args) -> int:
    cfg = load_config(args.config)
    samples = apio.scale_harness(cfg, args.workers, repeats=args.repeats)
    if args.output:
        apio.write_scale_csv(samples, args.output)
        print(f"wrote {args.output}")
    else:
        for s in samples:
            print(f"workers={s.workers}: serial {s.serial_mean:.3f}s, "
                  f"parallel {s.parallel_mean:.3f}s "
                  f"[{s.parallel_min:.3f}, {s.parallel_max:.3f}]")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apalm",
        description="Adaptive (parallel) arc-length continuation runs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configuration")
    p_run.add_argument("config")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--output", default=None)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser(
        "compare", help="compare two worker counts for determinism")
    p_cmp.add_argument("config")
    p_cmp.add_argument("--workers", type=_parse_worker_list, required=True,
                       help="two counts, e.g. 1,4")
    p_cmp.set_defaults(func=cmd_compare)

    p_scale = sub.add_parser("scale", help="worker-count timing sweep")
    p_scale.add_argument("config")
    p_scale.add_argument("--workers", type=_parse_worker_list, required=True)
    p_scale.add_argument("--repeats", type=int, default=3)
    p_scale.add_argument("--output", default=None)
    p_scale.set_defaults(func=cmd_scale)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
