"""Uncertainty injection (step/ramp/random noise waveforms) and the hub flood source."""
from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import ConfigError
from .messages import SensorData, UncertaintyNoise
from .runtime import as_fraction

WAVEFORMS = ("step", "ramp", "random")


@dataclass(frozen=True)
class WaveformSpec:
    target_sensor: str
    kind: str = "step"
    offset: float = 0.0
    amplitude: float = 0.2
    frequency: float = 1.0
    duration: float = 120.0
    begin: float = 60.0

    def __post_init__(self):
        p = f"injector.waveforms.{self.target_sensor}"
        if self.kind not in WAVEFORMS:
            raise ConfigError(f"{p}.type", f"must be one of {WAVEFORMS}, got {self.kind!r}")
        if self.duration < 0:
            raise ConfigError(f"{p}.duration", "must be >= 0")
        if self.frequency <= 0:
            raise ConfigError(f"{p}.frequency", "must be > 0")
        if self.begin < 0:
            raise ConfigError(f"{p}.begin", "must be >= 0")


def noise_at(t: float, spec: WaveformSpec, rng: random.Random | None = None) -> float:
    """Noise factor of ``spec`` at virtual time ``t``; zero outside [begin, begin + duration]."""
    if t < spec.begin or t > spec.begin + spec.duration:
        return 0.0
    if spec.kind == "step" or (spec.kind == "ramp" and spec.duration == 0):
        return spec.offset + spec.amplitude
    if spec.kind == "ramp":
        return spec.offset + spec.amplitude * (t - spec.begin) / spec.duration
    if rng is None:
        raise ValueError("random waveform needs an rng")
    return spec.offset + rng.uniform(0.0, spec.amplitude)


class UncertaintyInjector:
    """Publishes noise for the configured sensors only.

    The node runs at the global injection frequency; each waveform keeps its own
    accumulator so it fires at ``min(spec.frequency, global frequency)``.
    """

    def __init__(self, engine, frequency: float, sensors: Iterable[str], specs: Mapping[str, WaveformSpec],
                 rng: random.Random, node_id: str = "injector"):
        self.id = node_id
        self.bus = engine.bus
        self.frequency = as_fraction(frequency)
        self.sensors = tuple(sensors)
        self.specs = dict(specs)
        for sid in self.sensors:
            if sid not in self.specs:
                raise ConfigError(f"injector.waveforms.{sid}", "listed sensor has no waveform")
        self.rng = rng
        self._acc: dict[str, Fraction] = {sid: Fraction(0) for sid in self.sensors}
        self.published: list[UncertaintyNoise] = []

    def step(self, now: float) -> None:
        self.inject(now)

    def inject(self, now: float) -> list[UncertaintyNoise]:
        out = []
        for sid in self.sensors:
            spec = self.specs[sid]
            self._acc[sid] += min(as_fraction(spec.frequency) / self.frequency, Fraction(1))
            if self._acc[sid] < 1:
                continue
            self._acc[sid] -= 1
            msg = UncertaintyNoise(sid, noise_at(now, spec, self.rng), now)
            self.bus.publish("uncertainty", msg)
            out.append(msg)
        self.published.extend(out)
        return out


class FloodSource:
    """Extra traffic into the hub from other patients sharing it.

    Publishes ``burst`` SensorData messages per activation while the flood
    window is open; ids are outside the hub's sensor set so fusion ignores them.
    """

    def __init__(self, engine, burst: int = 1, begin: float = 0.0, duration: float = float("inf"),
                 node_id: str = "flood"):
        self.id = node_id
        self.bus = engine.bus
        self.burst = int(burst)
        self.begin = float(begin)
        self.end = float(begin) + float(duration)
        self.sent = 0

    def step(self, now: float) -> None:
        if not self.begin <= now <= self.end:
            return
        for i in range(self.burst):
            self.bus.publish("sensor_data", SensorData(f"ext_{i}", 0.0, 0.0, "low", now, source="flood"))
            self.sent += 1
