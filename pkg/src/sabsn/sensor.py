"""Sensor nodes: collect -> risk-classify -> transfer, with battery and failure models."""
from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field

from .errors import ConfigError, SaturationError
from .messages import (
    AdaptationCommand,
    EnergyStatus,
    Event,
    ExceptionMsg,
    SensorData,
    Status,
    UncertaintyNoise,
)
from .patient import N_STATES, band_of_state, check_ranges

log = logging.getLogger(__name__)

# default risk-percent sub-interval per band: low [0,20], moderate (20,65], high (65,100]
DEFAULT_THRESHOLDS = (20.0, 65.0)


def label_for(percent: float, thresholds=DEFAULT_THRESHOLDS) -> str:
    low_hi, mod_hi = thresholds
    if percent <= low_hi:
        return "low"
    if percent <= mod_hi:
        return "moderate"
    return "high"


def _band_interval(band: str, thresholds) -> tuple[float, float]:
    low_hi, mod_hi = thresholds
    return {"low": (0.0, low_hi), "moderate": (low_hi, mod_hi), "high": (mod_hi, 100.0)}[band]


def risk_of(value: float, ranges, thresholds=DEFAULT_THRESHOLDS) -> tuple[float, str]:
    """Map a raw reading to (risk_percent, label).

    Inside the low-risk range the percent rises linearly from 0 at ``lo`` to
    the low threshold at ``hi``. In bands above it the percent rises with the
    value; in bands below it the percent rises as the value falls, so the edge
    shared with the safer neighbour maps to the start of the band's interval.
    Moderate/high bands never return their exclusive start exactly. Readings
    outside every range (or NaN) are 100 / high.
    """
    for state, (lo, hi) in enumerate(ranges):
        if lo <= value <= hi:
            band = band_of_state(state)
            start, end = _band_interval(band, thresholds)
            frac = (value - lo) / (hi - lo)
            if state < N_STATES // 2:
                frac = 1.0 - frac
            percent = start + frac * (end - start)
            if band != "low" and percent <= start:
                percent = math.nextafter(start, math.inf)
            percent = min(percent, end)
            return percent, label_for(percent, thresholds)
    return 100.0, "high"


@dataclass
class Battery:
    capacity: float = 100.0
    level: float = 100.0
    recharge_rate: float = 1.0

    def __post_init__(self):
        if not 0 <= self.level <= self.capacity:
            raise ConfigError("battery.level", f"must be within [0, {self.capacity}]")

    def consume(self, amount: float) -> None:
        self.level = max(0.0, self.level - amount)

    def recharge(self, seconds: float) -> None:
        self.level = min(self.capacity, self.level + self.recharge_rate * seconds)

    @property
    def full(self) -> bool:
        return self.level >= self.capacity


@dataclass
class SensorConfig:
    sensor_id: str
    sign: str
    risk_value_ranges: list
    risk_band_probabilities: tuple = (0.8, 0.15, 0.05)
    accuracy: float = 1.0
    instant_recharge: bool = True
    start_active: bool = True
    initial_frequency: float = 1.0
    energy_per_execution: float = 0.1
    capacity: float = 100.0
    recharge_rate: float | None = None
    failure_margin: float = 0.05
    risk_thresholds: tuple = DEFAULT_THRESHOLDS

    def __post_init__(self):
        p = f"sensors.{self.sensor_id}"
        self.risk_value_ranges = check_ranges(self.risk_value_ranges, f"{p}.risk_ranges")
        probs = tuple(float(x) for x in self.risk_band_probabilities)
        if len(probs) != 3 or any(x < 0 for x in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigError(f"{p}.risk_band_probabilities", f"need 3 non-negative values summing to 1, got {probs}")
        self.risk_band_probabilities = probs
        if not 0.0 <= self.accuracy <= 1.0:
            raise ConfigError(f"{p}.accuracy", "must be within [0, 1]")
        if self.initial_frequency <= 0:
            raise ConfigError(f"{p}.frequency", "must be > 0")
        if self.energy_per_execution < 0:
            raise ConfigError(f"{p}.energy_per_execution", "must be >= 0")
        if self.capacity <= 0:
            raise ConfigError(f"{p}.capacity", "must be > 0")
        if self.recharge_rate is None:
            self.recharge_rate = 10.0 * self.energy_per_execution
        if self.failure_margin < 0:
            raise ConfigError(f"{p}.failure_margin", "must be >= 0")


@dataclass
class SensorReading:
    sensor_id: str
    raw_value: float
    risk_percent: float
    risk_label: str
    timestamp: float


@dataclass
class SensorCounters:
    success: int = 0
    fail: int = 0
    noise_fail: int = 0
    accuracy_fail: int = 0
    ignored_commands: list = field(default_factory=list)


class Sensor:
    """Managed-system sensor node.

    Injected noise is one-shot: each UncertaintyNoise message perturbs exactly
    one subsequent collection, so the injection rate bounds the failure rate.
    """

    def __init__(self, config: SensorConfig, engine, patient, rng: random.Random):
        self.id = config.sensor_id
        self.config = config
        self.engine = engine
        self.bus = engine.bus
        self.patient = patient
        self.rng = rng
        self.battery = Battery(config.capacity, config.capacity, config.recharge_rate)
        self.enabled = config.start_active
        self.active = config.start_active
        self.pending_noise = 0.0
        self.last_step = 0.0
        self.counters = SensorCounters()
        self.bus.subscribe("uncertainty", self.id, self._on_noise)
        self.bus.subscribe("adaptation_command", self.id, self._on_command)

    def start(self, now: float = 0.0) -> None:
        self.bus.publish("status", Status(self.id, "init", now))
        if not self.enabled:
            self.bus.publish("event", Event(self.id, "deactivate", now))

    def _on_noise(self, msg: UncertaintyNoise) -> None:
        if msg.sensor_id == self.id:
            self.pending_noise = msg.noise_factor

    def _on_command(self, msg: AdaptationCommand) -> None:
        if msg.target == self.id:
            self.apply_adaptation(msg)

    def step(self, now: float) -> None:
        elapsed = now - self.last_step
        self.last_step = now
        if not self.enabled:
            return
        if not self.active:
            self._recharge(now, elapsed)
            return
        cost = self.config.energy_per_execution
        if self.battery.level < cost:
            self._deactivate(now)
            return
        self.consume_and_recharge(now)
        value = self.collect(now)
        if value is None:
            self.counters.fail += 1
            self.bus.publish("status", Status(self.id, "fail", now))
            return
        percent, label = risk_of(value, self.config.risk_value_ranges, self.config.risk_thresholds)
        self.transfer(SensorReading(self.id, value, percent, label, now))

    def collect(self, now: float) -> float | None:
        """Read and perturb the vital sign; None when the execution fails."""
        value = self.patient.current_value(self.config.sign)
        noise = self.pending_noise
        self.pending_noise = 0.0
        accurate = self.rng.random() <= self.config.accuracy
        if abs(noise) > self.config.failure_margin:
            self.counters.noise_fail += 1
            return None
        if not accurate:
            self.counters.accuracy_fail += 1
            return None
        return value * (1.0 + noise)

    def transfer(self, reading: SensorReading) -> None:
        self.counters.success += 1
        self.bus.publish(
            "sensor_data",
            SensorData(reading.sensor_id, reading.raw_value, reading.risk_percent, reading.risk_label, reading.timestamp),
        )
        self.bus.publish("status", Status(self.id, "success", reading.timestamp))

    def consume_and_recharge(self, now: float) -> float:
        cost = self.config.energy_per_execution
        self.battery.consume(cost)
        self.bus.publish("energy_status", EnergyStatus(self.id, cost, now))
        if self.config.instant_recharge:
            self.battery.level = self.battery.capacity
        return self.battery.level

    def _deactivate(self, now: float) -> None:
        self.active = False
        log.info("%s: battery depleted at t=%.1f", self.id, now)
        self.bus.publish("event", Event(self.id, "deactivate", now))

    def _recharge(self, now: float, elapsed: float) -> None:
        self.battery.recharge(elapsed)
        if self.battery.full:
            self.active = True
            self.bus.publish("event", Event(self.id, "activate", now))
            self.bus.publish("status", Status(self.id, "running", now))

    def apply_adaptation(self, cmd: AdaptationCommand) -> float | None:
        if not (self.enabled and self.active):
            self.counters.ignored_commands.append(cmd)
            log.debug("%s: ignoring command while inactive: %s", self.id, cmd)
            return None
        try:
            self.engine.set_frequency(self.id, cmd.frequency)
        except SaturationError as exc:
            self.bus.publish("exception", ExceptionMsg(self.id, exc.kind, exc.attempted, cmd.timestamp))
            return exc.clamped
        return cmd.frequency
