"""Offline evaluation of a run: QoS series from the CSV logs and control metrics."""
from __future__ import annotations

import bisect
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from .manager import estimate_local, log_category
from .repository import LogRecord, formula_for, read_run_logs
from .runtime import as_fraction

log = logging.getLogger(__name__)

DID_NOT_SETTLE = "did not settle"
NOT_APPLICABLE = "n/a"


@dataclass
class QoSSeries:
    attribute: str
    timestamps: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    # local value per component; NaN while the component is inactive
    components: dict[str, list[float]] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.timestamps) != len(self.values):
            raise ValueError("timestamps and values differ in length")
        if any(b <= a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ValueError("timestamps must be strictly increasing")
        for cid, vals in self.components.items():
            if len(vals) != len(self.values):
                raise ValueError(f"component series {cid!r} differs in length")

    def __len__(self) -> int:
        return len(self.values)

    def after(self, t: float) -> "QoSSeries":
        """Samples with timestamp >= t."""
        i = bisect.bisect_left(self.timestamps, t)
        return QoSSeries(self.attribute, self.timestamps[i:], self.values[i:],
                         {c: v[i:] for c, v in self.components.items()})


@dataclass
class MetricsReport:
    attribute: str
    setpoint: float
    steady_state_value: float
    sse_percent: float
    overshoot_percent: float | None  # None: steady state is zero
    settling_time_seconds: float | None  # None: did not settle
    duration: float
    samples: int
    band_fraction: float = 0.02
    tail_fraction: float = 0.1
    run_id: str = ""

    @property
    def settled(self) -> bool:
        return self.settling_time_seconds is not None


# monitor cadence

def sample_times(duration: float, monitor_freq: float = 1.0, tick_duration: float = 0.1) -> list[float]:
    """Virtual times at which a monitor node at ``monitor_freq`` fires within ``duration``."""
    dt = as_fraction(tick_duration)
    rate = as_fraction(monitor_freq) * dt
    if rate <= 0:
        raise ValueError("monitor frequency must be > 0")
    last_tick = math.floor(as_fraction(duration) / dt)
    out: list[float] = []
    k = 1
    while True:
        tick = math.ceil(Fraction(k) / rate)
        if tick > last_tick:
            break
        t = float(tick * dt)
        if not out or t > out[-1]:
            out.append(t)
        k += 1
    return out


class _History:
    """Per-component records sorted by time, for "newest n at or before t" lookups."""

    def __init__(self, records: Sequence[LogRecord]):
        self.by_component: dict[str, list[LogRecord]] = {}
        for rec in records:
            self.by_component.setdefault(rec.component_id, []).append(rec)
        self.times = {c: [r.timestamp for r in recs] for c, recs in self.by_component.items()}

    def upto(self, component_id: str, t: float) -> int:
        return bisect.bisect_right(self.times.get(component_id, []), t)

    def window(self, component_id: str, t: float, n: int) -> list[LogRecord]:
        recs = self.by_component.get(component_id, [])
        end = self.upto(component_id, t)
        return recs[max(0, end - n):end][::-1]

    def last(self, component_id: str, t: float) -> LogRecord | None:
        end = self.upto(component_id, t)
        return self.by_component[component_id][end - 1] if end else None


def components_of(logs: Mapping[str, list[LogRecord]]) -> list[str]:
    """Component ids in announcement order (the t=0 frequency records), then any stragglers."""
    seen: dict[str, None] = {}
    for rec in logs.get("Adaptation", []):
        if rec.timestamp == 0.0:
            seen.setdefault(rec.component_id)
    for cat in ("Status", "EnergyStatus", "Event"):
        for rec in logs.get(cat, []):
            seen.setdefault(rec.component_id)
    return list(seen)


def reconstruct_series(
    logs: Mapping[str, list[LogRecord]],
    attribute: str,
    n: int = 100,
    *,
    duration: float | None = None,
    monitor_freq: float = 1.0,
    tick_duration: float = 0.1,
    components: Sequence[str] | None = None,
    weights: Mapping[str, float] | None = None,
) -> QoSSeries:
    """Recompute what the monitor saw: windowed local estimates folded by the global formula.

    Active set comes from the Event log, frequencies (for cost) from the
    Adaptation log; both are taken as of each sample time inclusive.
    """
    category = log_category(attribute)
    formula = formula_for(attribute, weights)
    comps = list(components) if components is not None else components_of(logs)
    records = logs.get(category, [])
    if not records and not logs.get("Adaptation"):
        log.warning("no %s records; returning an empty series", category)
        return QoSSeries(attribute, [], [], {c: [] for c in comps})
    if duration is None:
        duration = max((r.timestamp for recs in logs.values() for r in recs), default=0.0)

    history = _History(records)
    adaptations = _History(logs.get("Adaptation", []))
    events = sorted(logs.get("Event", []), key=lambda r: r.timestamp)

    times = sample_times(duration, monitor_freq, tick_duration)
    series = QoSSeries(attribute, components={c: [] for c in comps})
    active = set(comps)
    ev = 0
    for t in times:
        while ev < len(events) and events[ev].timestamp <= t:
            e = events[ev]
            if e.payload == "deactivate":
                active.discard(e.component_id)
            else:
                active.add(e.component_id)
            ev += 1
        order = [c for c in comps if c in active]
        values = {}
        for cid in order:
            freq = None
            if attribute == "cost":
                rec = adaptations.last(cid, t)
                freq = rec.payload if rec is not None else None
            values[cid] = estimate_local(attribute, history.window(cid, t, n), freq).value
        series.timestamps.append(t)
        series.values.append(formula(values, order))
        for cid in comps:
            series.components[cid].append(values.get(cid, math.nan))
    return series


# metrics

def steady_state(values: Sequence[float], tail: float = 0.1) -> float:
    """Mean of the last ceil(tail * len) samples."""
    if not values:
        raise ValueError("empty series has no steady state")
    if not 0 < tail <= 1:
        raise ValueError(f"tail fraction must be in (0, 1], got {tail}")
    # round first so 0.1 * 540 counts as 54, not 55
    k = max(1, math.ceil(round(tail * len(values), 9)))
    window = values[-k:]
    # clamp: the rounded mean of a constant tail must be that constant
    return min(max(math.fsum(window) / k, min(window)), max(window))


def sse(steady: float, setpoint: float) -> float:
    if setpoint <= 0:
        raise ValueError("setpoint must be > 0")
    return 100.0 * abs(setpoint - steady) / setpoint


def overshoot(values: Sequence[float], steady: float) -> float | None:
    """Percent excess of the series maximum over ``steady``; None when steady is zero."""
    if not values:
        raise ValueError("empty series")
    if steady == 0:
        return None
    return 100.0 * max(0.0, (max(values) - steady) / steady)


def settling_time(timestamps: Sequence[float], values: Sequence[float], steady: float,
                  band: float = 0.02) -> float | None:
    """Earliest sample time after which every sample stays inside steady * (1 +/- band).

    None when the series never settles, including when only the final sample
    is inside the band.
    """
    if not values:
        raise ValueError("empty series")
    half = abs(steady) * band
    first_in = None
    for i in range(len(values) - 1, -1, -1):
        if abs(values[i] - steady) > half:
            break
        first_in = i
    if first_in is None or (first_in == len(values) - 1 and len(values) > 1):
        return None
    return timestamps[first_in]


def compute_metrics(series: QoSSeries, setpoint: float, band: float = 0.02, tail: float = 0.1,
                    duration: float | None = None, run_id: str = "") -> MetricsReport:
    ss = steady_state(series.values, tail)
    return MetricsReport(
        attribute=series.attribute,
        setpoint=setpoint,
        steady_state_value=ss,
        sse_percent=sse(ss, setpoint),
        overshoot_percent=overshoot(series.values, ss),
        settling_time_seconds=settling_time(series.timestamps, series.values, ss, band),
        duration=duration if duration is not None else series.timestamps[-1],
        samples=len(series),
        band_fraction=band,
        tail_fraction=tail,
        run_id=run_id,
    )


# report files

_REPORT_FIELDS = ("run_id", "attribute", "setpoint", "steady_state_value", "sse_percent", "overshoot_percent",
                  "settling_time_seconds", "duration", "samples", "band_fraction", "tail_fraction")


def format_report(report: MetricsReport) -> str:
    lines = []
    for name in _REPORT_FIELDS:
        value = getattr(report, name)
        if value is None:
            value = DID_NOT_SETTLE if name == "settling_time_seconds" else NOT_APPLICABLE
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{name}: {value}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> MetricsReport:
    raw = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(": ")
        raw[key.strip()] = value.strip()
    missing = [f for f in _REPORT_FIELDS if f not in raw]
    if missing:
        raise ValueError(f"report lacks fields {missing}")

    def num(key):
        return None if raw[key] in (DID_NOT_SETTLE, NOT_APPLICABLE) else float(raw[key])

    return MetricsReport(
        attribute=raw["attribute"], setpoint=num("setpoint"), steady_state_value=num("steady_state_value"),
        sse_percent=num("sse_percent"), overshoot_percent=num("overshoot_percent"),
        settling_time_seconds=num("settling_time_seconds"), duration=num("duration"),
        samples=int(raw["samples"]), band_fraction=num("band_fraction"), tail_fraction=num("tail_fraction"),
        run_id=raw["run_id"],
    )


def emit(report: MetricsReport, series: QoSSeries, out_dir: str | Path, per_component: bool = False) -> dict[str, Path]:
    """Write the text report, the series CSV and an SVG plot; returns the paths by kind."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{series.attribute}_{report.run_id}" if report.run_id else series.attribute
    paths = {
        "report": out_dir / f"report_{stem}.txt",
        "series": out_dir / f"series_{stem}.csv",
        "plot": out_dir / f"qos_{stem}.svg",
    }
    paths["report"].write_text(format_report(report))

    comps = list(series.components) if per_component else []
    with paths["series"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", series.attribute] + comps)
        for i, (t, v) in enumerate(zip(series.timestamps, series.values)):
            w.writerow([repr(t), repr(v)] + [repr(series.components[c][i]) for c in comps])

    with matplotlib.rc_context({"svg.fonttype": "none", "svg.hashsalt": "sabsn"}):
        fig, ax = plt.subplots(figsize=(9, 4.5))
        ax.plot(series.timestamps, series.values, label=f"global {series.attribute}", linewidth=1.8)
        for cid in comps:
            ax.plot(series.timestamps, series.components[cid], label=cid, linewidth=0.8, alpha=0.8)
        ax.axhline(report.setpoint, color="k", linestyle="--", linewidth=1, label="setpoint")
        ax.set_xlabel("time (s)")
        ax.set_ylabel(series.attribute)
        ax.legend(loc="best", fontsize="small")
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(paths["plot"], format="svg", metadata={"Date": None})
        plt.close(fig)
    return paths


def load_run(run_dir: str | Path, run_id: str) -> tuple[dict, dict]:
    """Logs and run metadata (summary plus stored config tree) for one run directory."""
    import yaml

    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"no run directory {run_dir}")
    logs = read_run_logs(run_dir, run_id)
    meta: dict = {}
    summary = run_dir / f"summary_{run_id}.json"
    if summary.exists():
        meta.update(json.loads(summary.read_text()))
    cfg = run_dir / f"config_{run_id}.yaml"
    if cfg.exists():
        meta["config"] = yaml.safe_load(cfg.read_text()) or {}
    return logs, meta


def analyze_run(run_dir: str | Path, run_id: str, attribute: str, setpoint: float | None = None,
                per_component: bool = False, band: float = 0.02, tail: float = 0.1,
                out_dir: str | Path | None = None) -> tuple[MetricsReport, QoSSeries, dict]:
    logs, meta = load_run(run_dir, run_id)
    manager = meta.get("config", {}).get("manager", {})
    engine_attr = meta.get("attribute") or manager.get("qos_attribute")
    if engine_attr and engine_attr != attribute:
        log.warning("run %s was driven by the %s engine; analyzing %s as requested", run_id, engine_attr, attribute)
    if setpoint is None:
        if engine_attr != attribute or "setpoint" not in manager:
            raise ValueError(f"no stored {attribute} setpoint for run {run_id}; pass one explicitly")
        setpoint = float(manager["setpoint"])
    series = reconstruct_series(
        logs, attribute, int(meta.get("info_quant", manager.get("info_quant", 100))),
        duration=meta.get("virtual_time"),
        monitor_freq=float(meta.get("monitor_freq", manager.get("monitor_freq", 1.0))),
        tick_duration=float(meta.get("tick_duration", meta.get("config", {}).get("tick_duration", 0.1))),
        weights=manager.get("formula_weights"),
    )
    if not len(series):
        raise ValueError(f"run {run_id} has no samples to analyze")
    report = compute_metrics(series, setpoint, band, tail, meta.get("virtual_time"), run_id)
    paths = emit(report, series, out_dir if out_dir is not None else run_dir, per_component)
    return report, series, paths
