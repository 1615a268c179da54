"""Managing system: monitor, strategy manager (planner) and strategy enactor.

The planner turns a global QoS setpoint into per-component setpoints by
sweeping one shared delta over a symmetric grid; the enactor drives each
component's frequency toward its local setpoint with a proportional law.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

from .errors import ConfigError, PlanningError
from .messages import AdaptationCommand, DataAccessRequest, Event, ExceptionMsg, Strategy
from .repository import formula_for

log = logging.getLogger(__name__)

STABILITY_MARGIN = 0.02
ATTRIBUTES = ("reliability", "cost")
ENGINES = {"reli_engine": "reliability", "cost_engine": "cost"}


@dataclass
class ManagerConfig:
    qos_attribute: str = "reliability"
    setpoint: float = 0.9
    monitor_freq: float = 1.0
    actuation_freq: float = 0.2
    info_quant: int = 100
    offset: float = 0.1
    gain: float = 0.002
    stability_margin: float = STABILITY_MARGIN
    formula_weights: dict = field(default_factory=dict)

    def __post_init__(self):
        self.qos_attribute = ENGINES.get(self.qos_attribute, self.qos_attribute)
        if self.qos_attribute not in ATTRIBUTES:
            raise ConfigError("manager.qos_attribute", f"must be reliability/reli_engine or cost/cost_engine")
        if self.info_quant < 1:
            raise ConfigError("manager.info_quant", "must be >= 1")
        if not 0 < self.gain <= self.offset:
            raise ConfigError("manager.gain", f"need 0 < gain <= offset, got gain={self.gain}, offset={self.offset}")
        if self.qos_attribute == "reliability" and not 0 < self.setpoint <= 1:
            raise ConfigError("manager.setpoint", "reliability setpoint must be in (0, 1]")
        if self.qos_attribute == "cost" and self.setpoint <= 0:
            raise ConfigError("manager.setpoint", "cost setpoint must be > 0")
        if self.monitor_freq <= 0:
            raise ConfigError("manager.monitor_freq", "must be > 0")
        if self.actuation_freq <= 0:
            raise ConfigError("manager.actuation_freq", "must be > 0")
        if self.stability_margin < 0:
            raise ConfigError("manager.stability_margin", "must be >= 0")


@dataclass
class ControllerParams:
    kp: float = 200.0
    kp_cost: float = 5.0
    f_min: float = 0.1
    f_max: float = 20.0
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.f_min < self.f_max:
            raise ConfigError("controller.f_min", f"need f_min < f_max, got {self.f_min} >= {self.f_max}")
        if self.f_min <= 0:
            raise ConfigError("controller.f_min", "must be > 0")
        for cid, (lo, hi) in self.bounds.items():
            if not 0 < lo < hi:
                raise ConfigError(f"controller.bounds.{cid}", f"need 0 < lo < hi, got [{lo}, {hi}]")

    def bounds_for(self, component_id: str) -> tuple[float, float]:
        lo, hi = self.bounds.get(component_id, (self.f_min, self.f_max))
        return float(lo), float(hi)

    def gain_for(self, attribute: str) -> float:
        return self.kp if attribute == "reliability" else self.kp_cost


class Estimate(NamedTuple):
    value: float
    samples: int

    @property
    def low_confidence(self) -> bool:
        return self.samples == 0


def estimate_local(attribute: str, window: Sequence, frequency: float | None = None) -> Estimate:
    """Local QoS of one component from its newest-first log window.

    Reliability is successes / (successes + fails); init and running records are
    ignored. Cost is mean energy per execution times the execution frequency.
    """
    if attribute == "reliability":
        ok = bad = 0
        for rec in window:
            if rec.payload == "success":
                ok += 1
            elif rec.payload == "fail":
                bad += 1
        n = ok + bad
        return Estimate(ok / n, n) if n else Estimate(1.0, 0)
    if attribute == "cost":
        if not window:
            return Estimate(0.0, 0)
        if frequency is None:
            raise ValueError("cost estimate needs the component frequency")
        mean = sum(rec.payload for rec in window) / len(window)
        return Estimate(mean * frequency, len(window))
    raise ValueError(f"unknown attribute {attribute!r}")


def log_category(attribute: str) -> str:
    return "Status" if attribute == "reliability" else "EnergyStatus"


def needs_adaptation(measured: float, setpoint: float, margin: float = STABILITY_MARGIN) -> bool:
    return abs(setpoint - measured) > setpoint * margin


def control(error: float, kp: float) -> float:
    """Proportional law: u = Kp * e."""
    return kp * error


def delta_grid(offset: float, gain: float) -> list[float]:
    """Symmetric search grid {-K*gain, ..., 0, ..., K*gain}, K = floor(offset / gain)."""
    k_max = math.floor(offset / gain + 1e-9)
    return [k * gain for k in range(-k_max, k_max + 1)]


def _clamp_candidate(value: float, kind: str) -> float:
    if kind == "reliability":
        return min(1.0, max(0.0, value))
    return max(0.0, value)


@dataclass
class Plan:
    delta: float
    setpoints: dict
    global_value: float
    best_effort: bool


def plan_strategy(
    setpoint: float,
    measured: Mapping[str, float],
    active: Iterable[str],
    *,
    offset: float,
    gain: float,
    kind: str = "reliability",
    margin: float = STABILITY_MARGIN,
    formula: Callable | None = None,
    pinned: Iterable[str] = (),
) -> Plan:
    """Common-delta search for per-component setpoints.

    Candidates are measured values shifted by d (clamped to the attribute's
    domain); pinned components keep their measured value. The smallest |d|
    whose global value lies within ``setpoint * margin`` wins (ties: closer to
    the setpoint, then the negative d). If none qualifies the d minimising the
    global error is returned, ties broken by |d| then sign, flagged best-effort.
    """
    active = list(active)
    if not active:
        raise PlanningError("empty active set: nothing to manage")
    missing = [c for c in active if c not in measured]
    if missing:
        raise PlanningError(f"no measurement for {missing}")
    formula = formula or formula_for(kind)
    pinned = set(pinned) & set(active)
    free = [c for c in active if c not in pinned]
    if not free:
        log.warning("all components pinned at saturation; returning best-effort strategy")
        values = {c: measured[c] for c in active}
        return Plan(0.0, values, formula(values, active), True)

    tol = setpoint * margin

    def candidate(d: float) -> tuple[dict, float]:
        values = {c: measured[c] if c in pinned else _clamp_candidate(measured[c] + d, kind) for c in active}
        return values, formula(values, active)

    k_max = math.floor(offset / gain + 1e-9)
    best = None  # (err, |d|, d, values, g)
    for m in range(k_max + 1):
        hits = []
        for k in ((0,) if m == 0 else (-m, m)):
            d = k * gain
            values, g = candidate(d)
            err = abs(g - setpoint)
            if err <= tol:
                hits.append((err, d, values, g))
            key = (err, abs(d), d)
            if best is None or key < best[:3]:
                best = (err, abs(d), d, values, g)
        if hits:
            err, d, values, g = min(hits, key=lambda h: (h[0], h[1]))
            return Plan(d, values, g, False)
    _, _, d, values, g = best
    return Plan(d, values, g, True)


@dataclass
class Actuation:
    component_id: str
    frequency: float
    previous: float
    error: float
    attempted: float
    saturated: str | None = None


def enact(
    setpoints: Mapping[str, float],
    measured: Mapping[str, float],
    frequencies: Mapping[str, float],
    params: ControllerParams,
    kind: str = "reliability",
    margin: float = STABILITY_MARGIN,
) -> list[Actuation]:
    """Per-component proportional actuation outside the dead-band.

    Reliability error is setpoint - measured and raises frequency when
    positive. Cost error is measured - setpoint and lowers frequency when
    positive.
    """
    kp = params.gain_for(kind)
    out = []
    for cid, target in setpoints.items():
        if kind == "reliability":
            error = target - measured[cid]
        else:
            error = measured[cid] - target
        if abs(error) <= abs(target) * margin:
            continue
        freq = frequencies[cid]
        u = control(error, kp)
        attempted = freq + u if kind == "reliability" else freq - u
        lo, hi = params.bounds_for(cid)
        new = min(max(attempted, lo), hi)
        saturated = None
        if attempted > hi:
            saturated = "saturated_high"
        elif attempted < lo:
            saturated = "saturated_low"
        out.append(Actuation(cid, new, freq, error, attempted, saturated))
    return out


class Controller:
    """Plug-in seam for the strategy enactor's control law."""

    def setup(self, params: ControllerParams, qos_attribute: str, frequencies: Mapping[str, float],
              margin: float = STABILITY_MARGIN) -> None:
        raise NotImplementedError

    def apply_reli_strategy(self, strategy: Strategy) -> list[Actuation]:
        raise NotImplementedError

    def apply_cost_strategy(self, strategy: Strategy) -> list[Actuation]:
        raise NotImplementedError

    def receive_event(self, event: Event) -> list[Actuation]:
        raise NotImplementedError


class ProportionalController(Controller):
    def setup(self, params, qos_attribute, frequencies, margin=STABILITY_MARGIN):
        self.params = params
        self.qos_attribute = qos_attribute
        self.margin = margin
        self.defaults = dict(frequencies)
        self.frequencies = dict(frequencies)

    def _apply(self, strategy: Strategy, kind: str) -> list[Actuation]:
        acts = enact(strategy.setpoints, strategy.measured, self.frequencies, self.params, kind, self.margin)
        for a in acts:
            self.frequencies[a.component_id] = a.frequency
        return acts

    def apply_reli_strategy(self, strategy):
        return self._apply(strategy, "reliability")

    def apply_cost_strategy(self, strategy):
        return self._apply(strategy, "cost")

    def receive_event(self, event):
        cid = event.component_id
        if event.event != "activate" or cid not in self.defaults:
            return []
        prev = self.frequencies[cid]
        self.frequencies[cid] = self.defaults[cid]
        return [Actuation(cid, self.defaults[cid], prev, 0.0, self.defaults[cid])]


@dataclass
class PlanTrace:
    timestamp: float
    active: tuple
    measured: dict
    global_value: float
    adapted: bool
    delta: float | None = None
    best_effort: bool = False
    setpoints: dict | None = None
    pinned: tuple = ()


class ManagingSystem:
    """Monitor + strategy manager + strategy enactor wired to the bus.

    Register ``planner_node`` before ``monitor_node`` so the monitor sample at
    time t already reflects adaptations issued at t.
    """

    def __init__(self, config: ManagerConfig, params: ControllerParams, engine, repository,
                 components: Iterable[str], frequencies: Mapping[str, float],
                 controller: Controller | None = None):
        from .runtime import FunctionNode

        self.config = config
        self.params = params
        self.engine = engine
        self.bus = engine.bus
        self.repository = repository
        self.attribute = config.qos_attribute
        self.formula = formula_for(self.attribute, config.formula_weights)
        self.components = tuple(components)
        self.active: list[str] = list(self.components)
        self.pinned: dict[str, float] = {}
        self.controller = controller or ProportionalController()
        self.controller.setup(params, self.attribute, frequencies, config.stability_margin)
        self.monitor_trace: list[tuple[float, float, dict]] = []
        self.plan_trace: list[PlanTrace] = []
        self.audit: list[str] = []
        self.planner_node = FunctionNode("strategy_manager", self.actuate)
        self.monitor_node = FunctionNode("monitor", self.monitor)
        self.bus.subscribe("event", "strategy_manager", self.receive_event)
        self.bus.subscribe("exception", "strategy_manager", self.handle_exception)
        self.bus.subscribe("strategy", "strategy_enactor", self._on_strategy)

    def start(self, now: float = 0.0) -> None:
        """Announce the initial frequency of every component as an adaptation record."""
        for cid in self.components:
            self.bus.publish("adaptation_command",
                             AdaptationCommand(cid, self.controller.frequencies[cid], now))

    # monitor

    def measure(self) -> dict[str, Estimate]:
        out = {}
        category = log_category(self.attribute)
        for cid in self.active:
            req = DataAccessRequest("strategy_manager", category, cid, self.config.info_quant)
            window = self.repository.handle(req)
            freq = self.controller.frequencies.get(cid)
            out[cid] = estimate_local(self.attribute, window, freq)
        return out

    def global_value(self, measured: Mapping[str, float]) -> float:
        return self.formula(measured, self.active)

    def monitor(self, now: float) -> float:
        est = self.measure()
        values = {c: e.value for c, e in est.items()}
        g = self.global_value(values)
        self.monitor_trace.append((now, g, values))
        return g

    # strategy manager

    def actuate(self, now: float) -> PlanTrace | None:
        if not self.active:
            self.audit.append(f"{now}: no active components, skipping actuation")
            return None
        values = {c: e.value for c, e in self.measure().items()}
        g = self.global_value(values)
        self._refresh_pins(values)
        sp = self.config.setpoint
        margin = self.config.stability_margin
        if not needs_adaptation(g, sp, margin):
            trace = PlanTrace(now, tuple(self.active), values, g, False, pinned=tuple(self.pinned))
            self.plan_trace.append(trace)
            return trace
        plan = plan_strategy(sp, values, self.active, offset=self.config.offset, gain=self.config.gain,
                             kind=self.attribute, margin=margin, formula=self.formula, pinned=self.pinned)
        trace = PlanTrace(now, tuple(self.active), values, g, True, plan.delta, plan.best_effort,
                          plan.setpoints, tuple(self.pinned))
        self.plan_trace.append(trace)
        self.bus.publish("strategy", Strategy(self.attribute, plan.setpoints, now, values))
        return trace

    def _refresh_pins(self, values: Mapping[str, float]) -> None:
        margin = self.config.stability_margin
        for cid, pinned_at in list(self.pinned.items()):
            if cid not in values:
                continue
            if abs(values[cid] - pinned_at) > margin * max(abs(pinned_at), 1e-12):
                del self.pinned[cid]

    def handle_exception(self, ex: ExceptionMsg) -> None:
        last = self.plan_trace[-1].measured if self.plan_trace else {}
        if ex.component_id in last:
            self.pinned[ex.component_id] = last[ex.component_id]
        if self.active and set(self.active) <= set(self.pinned):
            log.warning("every active component is saturated; planning is best-effort")

    def receive_event(self, event: Event) -> None:
        cid = event.component_id
        if cid not in self.components:
            self.audit.append(f"{event.timestamp}: event for unknown component {cid!r} ignored")
            return
        if event.event == "deactivate":
            if cid in self.active:
                self.active.remove(cid)
            self.pinned.pop(cid, None)
        elif cid not in self.active:
            # keep registration order so formula evaluation order is stable
            self.active = [c for c in self.components if c in self.active or c == cid]
        for act in self.controller.receive_event(event):
            self.bus.publish("adaptation_command", AdaptationCommand(act.component_id, act.frequency, event.timestamp))

    # strategy enactor

    def _on_strategy(self, strategy: Strategy) -> None:
        if strategy.attribute == "reliability":
            acts = self.controller.apply_reli_strategy(strategy)
        else:
            acts = self.controller.apply_cost_strategy(strategy)
        for act in acts:
            self.bus.publish("adaptation_command", AdaptationCommand(act.component_id, act.frequency, strategy.timestamp))
            if act.saturated:
                self.bus.publish("exception", ExceptionMsg(act.component_id, act.saturated, act.attempted,
                                                           strategy.timestamp))
