"""Command line entry point: ``acmgame simulate`` and ``acmgame check``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core.config import load_config, validate_config
from .core.errors import DimensionMismatch, NumericalAbort, ParseError, ValidationError

EXIT_OK = 0
EXIT_FAILED_CHECK = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acmgame", description="Actor-critic-mass pursuit-evasion simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment and write metrics")
    sim.add_argument("--config", required=True, type=Path, help="TOML experiment file")
    sim.add_argument("--seed", type=int, help="override master_seed")
    sim.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory (default: out)")
    sim.add_argument("--dump-weights", action="store_true", help="also write per-agent weight snapshots")
    sim.add_argument("--duration", type=float, help="override t_final (seconds)")
    sim.add_argument("--dt", type=float, help="override the step size (seconds)")
    sim.add_argument("--jsonl", action="store_true", help="mirror the metrics as JSON lines")

    sub.add_parser("check", help="run the built-in derivative and oracle checks")
    return p


def _simulate(args) -> int:
    from . import engine

    try:
        cfg = load_config(args.config)
        over = {}
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ValidationError("--seed must be an unsigned 64-bit integer")
            over["master_seed"] = args.seed
        if args.duration is not None:
            over["t_final"] = args.duration
            # a shortened run keeps exploring for as long as it lasts
            over["t_explore"] = min(cfg.t_explore, args.duration)
        if args.dt is not None:
            over["dt"] = args.dt
        cfg = validate_config(cfg.replace(**over))
        engine.components(cfg)  # builds and checks the group models
        state = engine.initialize(cfg)
    except (ParseError, ValidationError, DimensionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    sinks = [engine.CsvSink(out / "metrics.csv", every=cfg.record_every)]
    if args.jsonl:
        sinks.append(engine.JsonlSink(out / "metrics.jsonl", every=cfg.record_every))
    if args.dump_weights:
        per_second = max(1, round(1.0 / cfg.dt))
        sinks.append(engine.WeightSink(out / "weights", cfg, every=max(cfg.record_every, per_second)))

    code = EXIT_OK
    try:
        summary = engine.run(cfg, sinks, state=state)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        summary = exc.summary
        code = EXIT_NUMERICAL
    (out / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    hit = summary.interception.t_hit
    print(f"t_final={summary.final_t:g} records={summary.n_records} "
          f"interception={'none' if hit is None else f'{hit:g}s'} wall={summary.wall_time_s:.1f}s -> {out}")
    return code


def _check() -> int:
    from .diagnostics import run_checks

    results = run_checks()
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED_CHECK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "simulate":
        return _simulate(args)
    return _check()


if __name__ == "__main__":
    sys.exit(main())
