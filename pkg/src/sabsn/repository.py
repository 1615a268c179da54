"""Knowledge repository: typed run logs, CSV persistence, QoS formulas, data access."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import FormulaError, LogSchemaError
from .messages import (
    EVENT_VALUES,
    STATUS_VALUES,
    AdaptationCommand,
    DataAccessRequest,
    EnergyStatus,
    Event,
    Status,
    UncertaintyNoise,
)

CATEGORIES = ("Adaptation", "Status", "Event", "Uncertainty", "EnergyStatus")

# category -> name of the payload column in the CSV
PAYLOAD_COLUMN = {
    "Adaptation": "frequency",
    "Status": "status",
    "Event": "event",
    "Uncertainty": "noise_factor",
    "EnergyStatus": "cost",
}

_NUMERIC = {"Adaptation", "Uncertainty", "EnergyStatus"}


@dataclass(frozen=True, slots=True)
class LogRecord:
    category: str
    timestamp: float
    component_id: str
    payload: object


def validate_record(record: LogRecord) -> None:
    cat, payload = record.category, record.payload
    if cat not in CATEGORIES:
        raise LogSchemaError(f"unknown log category {cat!r}")
    if not isinstance(record.timestamp, (int, float)) or record.timestamp < 0:
        raise LogSchemaError(f"{cat}: bad timestamp {record.timestamp!r}")
    if cat == "Status":
        if payload not in STATUS_VALUES:
            raise LogSchemaError(f"Status payload must be one of {STATUS_VALUES}, got {payload!r}")
    elif cat == "Event":
        if payload not in EVENT_VALUES:
            raise LogSchemaError(f"Event payload must be one of {EVENT_VALUES}, got {payload!r}")
    else:
        if isinstance(payload, bool) or not isinstance(payload, (int, float)) or not math.isfinite(payload):
            raise LogSchemaError(f"{cat} payload must be a finite number, got {payload!r}")
        if cat == "EnergyStatus" and payload < 0:
            raise LogSchemaError(f"EnergyStatus cost must be >= 0, got {payload!r}")
        if cat == "Adaptation" and payload <= 0:
            raise LogSchemaError(f"Adaptation frequency must be > 0, got {payload!r}")


def log_path(directory: Path | str, category: str, run_id: str) -> Path:
    return Path(directory) / f"{category.lower()}_{run_id}.csv"


def format_row(record: LogRecord) -> list[str]:
    payload = record.payload
    if record.category in _NUMERIC:
        payload = repr(float(payload))
    return [repr(float(record.timestamp)), record.component_id, payload]


def parse_row(category: str, row: list[str]) -> LogRecord:
    if len(row) != 3:
        raise LogSchemaError(f"{category}: expected 3 fields, got {row!r}")
    ts, cid, payload = row
    try:
        timestamp = float(ts)
        value = float(payload) if category in _NUMERIC else payload
    except ValueError as exc:
        raise LogSchemaError(f"{category}: unparseable row {row!r}") from exc
    record = LogRecord(category, timestamp, cid, value)
    validate_record(record)
    return record


def header(category: str) -> list[str]:
    return ["timestamp", "component_id", PAYLOAD_COLUMN[category]]


def serialize(records: Iterable[LogRecord], category: str) -> str:
    lines = [",".join(header(category))]
    for rec in records:
        lines.append(",".join(format_row(rec)))
    return "\n".join(lines) + "\n"


def read_log(path: Path | str, category: str) -> list[LogRecord]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing log file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head != header(category):
            raise LogSchemaError(f"{path}: header {head!r} != {header(category)!r}")
        return [parse_row(category, row) for row in reader]


def read_run_logs(directory: Path | str, run_id: str) -> dict[str, list[LogRecord]]:
    return {cat: read_log(log_path(directory, cat, run_id), cat) for cat in CATEGORIES}


class KnowledgeRepository:
    """Append-only in-memory logs with a (component, category) index.

    When ``directory`` is given, records are flushed to one CSV per category at
    the end of every tick.
    """

    def __init__(self, directory: Path | str | None = None, run_id: str = "0"):
        self.run_id = run_id
        self.directory = Path(directory) if directory is not None else None
        self.records: dict[str, list[LogRecord]] = {c: [] for c in CATEGORIES}
        self._index: dict[tuple[str, str], list[LogRecord]] = defaultdict(list)
        self._unflushed: list[LogRecord] = []
        self._files = {}
        self._writers = {}
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            for cat in CATEGORIES:
                fh = log_path(self.directory, cat, run_id).open("w", newline="")
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header(cat))
                self._files[cat] = fh
                self._writers[cat] = writer

    def append(self, record: LogRecord) -> None:
        validate_record(record)
        log = self.records[record.category]
        if log and record.timestamp < log[-1].timestamp:
            raise LogSchemaError(
                f"{record.category}: timestamp {record.timestamp} precedes {log[-1].timestamp}"
            )
        log.append(record)
        self._index[(record.component_id, record.category)].append(record)
        self._unflushed.append(record)

    def query_window(self, component_id: str, category: str, n: int) -> list[LogRecord]:
        """Up to ``n`` most recent records, newest first."""
        if n < 1:
            raise ValueError(f"window size must be >= 1, got {n}")
        hist = self._index.get((component_id, category))
        if not hist:
            return []
        return hist[: -n - 1 : -1]

    def handle(self, request: DataAccessRequest) -> list[LogRecord]:
        return self.query_window(request.component_id, request.category, request.n)

    def flush(self, now: float | None = None) -> int:
        count = len(self._unflushed)
        if self._writers:
            for rec in self._unflushed:
                self._writers[rec.category].writerow(format_row(rec))
            for fh in self._files.values():
                fh.flush()
        self._unflushed.clear()
        return count

    def close(self) -> None:
        self.flush()
        for fh in self._files.values():
            fh.close()
        self._files.clear()
        self._writers.clear()

    def counts(self) -> dict[str, int]:
        return {cat: len(recs) for cat, recs in self.records.items()}

    # bus probes

    def attach(self, bus, node_id: str = "data_access") -> None:
        bus.subscribe("status", node_id, self._on_status)
        bus.subscribe("event", node_id, self._on_event)
        bus.subscribe("energy_status", node_id, self._on_energy)
        bus.subscribe("uncertainty", node_id, self._on_uncertainty)
        bus.subscribe("adaptation_command", node_id, self._on_adaptation)

    def _on_status(self, msg: Status) -> None:
        self.append(LogRecord("Status", msg.timestamp, msg.component_id, msg.status))

    def _on_event(self, msg: Event) -> None:
        self.append(LogRecord("Event", msg.timestamp, msg.component_id, msg.event))

    def _on_energy(self, msg: EnergyStatus) -> None:
        self.append(LogRecord("EnergyStatus", msg.timestamp, msg.component_id, msg.cost))

    def _on_uncertainty(self, msg: UncertaintyNoise) -> None:
        self.append(LogRecord("Uncertainty", msg.timestamp, msg.sensor_id, msg.noise_factor))

    def _on_adaptation(self, msg: AdaptationCommand) -> None:
        self.append(LogRecord("Adaptation", msg.timestamp, msg.target, msg.frequency))


# QoS formulas


@dataclass(frozen=True)
class ReliabilityFormula:
    """Product of component reliabilities, each raised to an optional weight (default 1)."""

    weights: Mapping[str, float] = field(default_factory=dict)
    kind: str = "reliability"

    def __call__(self, values: Mapping[str, float], active: Iterable[str]) -> float:
        total = 1.0
        for cid in active:
            try:
                r = values[cid]
            except KeyError:
                raise FormulaError(f"no reliability value for component {cid!r}") from None
            w = self.weights.get(cid, 1.0)
            total *= r if w == 1.0 else r**w
        return total


@dataclass(frozen=True)
class CostFormula:
    """Weighted sum of component costs (default weight 1)."""

    weights: Mapping[str, float] = field(default_factory=dict)
    kind: str = "cost"

    def __call__(self, values: Mapping[str, float], active: Iterable[str]) -> float:
        total = 0.0
        for cid in active:
            try:
                c = values[cid]
            except KeyError:
                raise FormulaError(f"no cost value for component {cid!r}") from None
            total += self.weights.get(cid, 1.0) * c
        return total


def formula_for(kind: str, weights: Mapping[str, float] | None = None):
    if kind == "reliability":
        return ReliabilityFormula(dict(weights or {}))
    if kind == "cost":
        return CostFormula(dict(weights or {}))
    raise ValueError(f"unknown QoS attribute {kind!r}")


def eval_global_reliability(assign: Mapping[str, float], active: Iterable[str]) -> float:
    return ReliabilityFormula()(assign, active)


def eval_global_cost(assign: Mapping[str, float], active: Iterable[str]) -> float:
    return CostFormula()(assign, active)
