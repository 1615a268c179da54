"""Command line: ``sabsn run`` and ``sabsn analyze``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analyzer import DID_NOT_SETTLE, NOT_APPLICABLE, analyze_run
from .config import PRESETS, load_config
from .errors import ConfigError
from .simulation import Simulation


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sabsn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="progress lines on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one run and write its logs")
    run.add_argument("--config", type=Path, help="YAML file merged over the defaults")
    run.add_argument("--duration", type=float, help="virtual seconds (default 300)")
    run.add_argument("--seed", type=int)
    run.add_argument("--scenario", action="append", choices=sorted(PRESETS), default=[],
                     help="preset overlay; repeat to stack (e.g. S1 then S3)")
    run.add_argument("--out", type=Path, default=Path("out"), help="output root (default ./out)")
    run.add_argument("--run-id", help="directory name under --out (default: start time in ms)")
    run.add_argument("--realtime", action="store_true", help="pace ticks to wall-clock time")

    an = sub.add_parser("analyze", help="QoS series and control metrics for a finished run")
    an.add_argument("--run-id", required=True)
    an.add_argument("--attribute", required=True, choices=("reliability", "cost"))
    an.add_argument("--setpoint", type=float, help="default: the run's stored setpoint")
    an.add_argument("--per-component", action="store_true", help="add local curves to the plot and CSV")
    an.add_argument("--band", type=float, default=0.02, help="settling band fraction (default 0.02)")
    an.add_argument("--tail", type=float, default=0.1, help="steady-state tail fraction (default 0.1)")
    an.add_argument("--out", type=Path, default=Path("out"), help="output root holding the run directory")
    return p


def cmd_run(args) -> int:
    overrides = {}
    if args.duration is not None:
        overrides["duration"] = args.duration
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = load_config(args.config, args.scenario, overrides)
    sim = Simulation(config, out_dir=args.out, run_id=args.run_id, realtime=args.realtime)
    summary = sim.run()
    print(json.dumps(summary, indent=2))
    print(f"logs written to {sim.run_dir}")
    return 0


def _fmt(value, none_text):
    return none_text if value is None else f"{value:.4g}"


def cmd_analyze(args) -> int:
    run_dir = args.out / args.run_id
    report, series, paths = analyze_run(run_dir, args.run_id, args.attribute, args.setpoint,
                                        args.per_component, args.band, args.tail)
    print(f"steady state: {report.steady_state_value:.4g} (setpoint {report.setpoint:g})")
    print(f"SSE: {report.sse_percent:.4g}%")
    print(f"overshoot: {_fmt(report.overshoot_percent, NOT_APPLICABLE)}%")
    settle = report.settling_time_seconds
    print(f"settling time: {DID_NOT_SETTLE if settle is None else f'{settle:g} s'}")
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_analyze(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
