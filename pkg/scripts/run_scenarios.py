#!/usr/bin/env python3
"""Run the preset scenarios, analyze each one and print a metrics table.

    python scripts/run_scenarios.py --out out --duration 540
"""
import argparse
import logging
from pathlib import Path

from sabsn.analyzer import analyze_run
from sabsn.config import load_config
from sabsn.simulation import Simulation

SCENARIOS = {
    "S1": ["S1"],
    "S2": ["S2"],
    "S1+S3": ["S1", "S3"],
}


def fmt(value, spec):
    return "-" if value is None else format(value, spec)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out")
    ap.add_argument("--duration", type=float, default=540.0)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--per-component", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    rows = []
    for label, presets in SCENARIOS.items():
        overrides = {"seed": args.seed} if args.seed is not None else None
        cfg = load_config(scenarios=presets, overrides=overrides)
        run_id = "scenario_" + label.replace("+", "_")
        sim = Simulation(cfg, out_dir=args.out, run_id=run_id)
        summary = sim.run(args.duration)
        report, _, paths = analyze_run(Path(args.out) / run_id, run_id, summary["attribute"],
                                       per_component=args.per_component, out_dir=Path(args.out) / run_id)
        rows.append((label, report, summary["hub"]["dropped"], paths["plot"]))

    header = f"{'scenario':<8} {'attr':<11} {'setpoint':>8} {'steady':>8} {'SSE %':>7} {'OS %':>7} {'settle s':>9} {'drops':>6}"
    print(header)
    print("-" * len(header))
    for label, r, drops, _ in rows:
        print(f"{label:<8} {r.attribute:<11} {r.setpoint:>8.3f} {r.steady_state_value:>8.4f} "
              f"{r.sse_percent:>7.2f} {fmt(r.overshoot_percent, '>7.2f'):>7} "
              f"{fmt(r.settling_time_seconds, '>9.1f'):>9} {drops:>6}")
    print()
    for label, _, _, plot in rows:
        print(f"{label}: {plot}")


if __name__ == "__main__":
    main()
