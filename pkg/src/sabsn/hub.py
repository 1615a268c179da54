"""Central hub: bounded FIFO of sensor data fused into a patient risk status."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import ConfigError, SaturationError
from .messages import AdaptationCommand, EnergyStatus, Event, ExceptionMsg, PatientStatus, SensorData, Status
from .sensor import DEFAULT_THRESHOLDS, Battery, label_for

log = logging.getLogger(__name__)

HUB_ID = "centralhub"


def fuse(latest_risk: Mapping[str, float], strategy: str = "mean", thresholds=DEFAULT_THRESHOLDS):
    """Fused (risk, label) of the latest per-sensor risks, or None when there is nothing to fuse."""
    if not latest_risk:
        return None
    values = sorted(latest_risk.values())
    if strategy == "mean":
        risk = sum(values) / len(values)
    elif strategy == "max":
        risk = values[-1]
    else:
        raise ValueError(f"unknown fusion strategy {strategy!r}")
    risk = min(100.0, max(0.0, risk))
    return risk, label_for(risk, thresholds)


@dataclass
class HubConfig:
    capacity: int = 10
    initial_frequency: float = 10.0
    energy_per_execution: float = 0.05
    fusion: str = "mean"
    instant_recharge: bool = True
    battery_capacity: float = 100.0
    recharge_rate: float | None = None

    def __post_init__(self):
        if self.capacity < 1:
            raise ConfigError("hub.capacity", "must be >= 1")
        if self.initial_frequency <= 0:
            raise ConfigError("hub.frequency", "must be > 0")
        if self.fusion not in ("mean", "max"):
            raise ConfigError("hub.fusion", f"unknown fusion strategy {self.fusion!r}")
        if self.energy_per_execution < 0:
            raise ConfigError("hub.energy_per_execution", "must be >= 0")
        if self.recharge_rate is None:
            self.recharge_rate = 10.0 * self.energy_per_execution


class CentralHub:
    def __init__(self, config: HubConfig, engine, sensor_ids: Iterable[str], node_id: str = HUB_ID):
        self.id = node_id
        self.config = config
        self.engine = engine
        self.bus = engine.bus
        self.sensor_ids = frozenset(sensor_ids)
        self.queue: deque[SensorData] = deque()
        self.latest_risk: dict[str, float] = {}
        self.battery = Battery(config.battery_capacity, config.battery_capacity, config.recharge_rate)
        self.active = True
        self.last_step = 0.0
        self.arrived = self.accepted = self.dropped = self.processed = 0
        self.last_status: PatientStatus | None = None
        self.bus.subscribe("sensor_data", self.id, self.enqueue)
        self.bus.subscribe("event", self.id, self._on_event)
        self.bus.subscribe("adaptation_command", self.id, self._on_command)

    def start(self, now: float = 0.0) -> None:
        self.bus.publish("status", Status(self.id, "init", now))

    def _on_event(self, msg: Event) -> None:
        # a sensor that leaves the network stops contributing to fusion
        if msg.event == "deactivate":
            self.latest_risk.pop(msg.component_id, None)

    def enqueue(self, msg: SensorData) -> bool:
        self.arrived += 1
        if len(self.queue) >= self.config.capacity:
            self.dropped += 1
            self.bus.publish("status", Status(self.id, "fail", msg.timestamp))
            return False
        self.queue.append(msg)
        self.accepted += 1
        return True

    def step(self, now: float) -> None:
        elapsed = now - self.last_step
        self.last_step = now
        if not self.active:
            self.battery.recharge(elapsed)
            if self.battery.full:
                self.active = True
                self.bus.publish("event", Event(self.id, "activate", now))
                self.bus.publish("status", Status(self.id, "running", now))
            return
        if not self.queue:
            return
        cost = self.config.energy_per_execution
        if self.battery.level < cost:
            self.active = False
            self.bus.publish("event", Event(self.id, "deactivate", now))
            return
        self.process_one(now)

    def process_one(self, now: float) -> PatientStatus | None:
        if not self.queue:
            return None
        msg = self.queue.popleft()
        self.processed += 1
        if msg.sensor_id in self.sensor_ids:
            self.latest_risk[msg.sensor_id] = msg.risk_percent
        cost = self.config.energy_per_execution
        self.battery.consume(cost)
        if self.config.instant_recharge:
            self.battery.level = self.battery.capacity
        fused = fuse(self.latest_risk, self.config.fusion)
        status = None
        if fused is not None:
            status = PatientStatus(fused[0], fused[1], now)
            self.last_status = status
            self.bus.publish("patient_status", status)
        self.bus.publish("status", Status(self.id, "success", now))
        self.bus.publish("energy_status", EnergyStatus(self.id, cost, now))
        return status

    def _on_command(self, msg: AdaptationCommand) -> None:
        if msg.target == self.id:
            self.apply_adaptation(msg)

    def apply_adaptation(self, cmd: AdaptationCommand) -> float | None:
        if not self.active:
            log.debug("%s: ignoring command while inactive: %s", self.id, cmd)
            return None
        try:
            self.engine.set_frequency(self.id, cmd.frequency)
        except SaturationError as exc:
            self.bus.publish("exception", ExceptionMsg(self.id, exc.kind, exc.attempted, cmd.timestamp))
            return exc.clamped
        return cmd.frequency
