"""Deterministic tick scheduler and topic-based publish/subscribe bus.

Nodes are plain objects with an ``id`` attribute and a ``step(now)`` method.
Each tick runs the injector phase, then managed-system nodes in registration
order, then managing-system nodes, then the tick-end hooks (log flush).
"""
from __future__ import annotations

import hashlib
import math
import random
import time
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

from .errors import ConfigError, SaturationError

PHASES = ("injector", "managed", "managing")


def as_fraction(value) -> Fraction:
    """Exact rational for a frequency or duration given as int/float/str."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    return Fraction(value).limit_denominator(10**6)


def derive_rng(seed: int, name: str) -> random.Random:
    """Independent stream per node, keyed by the node's stable name."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass
class SimClock:
    tick: int = 0
    tick_duration: Fraction = Fraction(1, 10)

    @property
    def now(self) -> float:
        return float(self.tick * self.tick_duration)


@dataclass
class NodeSchedule:
    component_id: str
    frequency: Fraction
    phase: int = 0
    accumulator: Fraction = Fraction(0)
    activations: int = 0

    def __post_init__(self):
        if self.frequency <= 0:
            raise ConfigError(self.component_id, f"frequency must be > 0, got {self.frequency}")


@dataclass
class Subscription:
    topic: str
    node_id: str
    handler: Callable
    inbox: deque = field(default_factory=deque)


class Bus:
    """Topic registry with per-subscriber FIFO inboxes.

    Publishing outside a handler dispatches immediately; publishing from inside
    a handler only enqueues, and the running dispatch loop drains it.
    """

    def __init__(self, topics: Iterable[str] = ()):
        self._subs: dict[str, list[Subscription]] = {t: [] for t in topics}
        self._ready: deque[Subscription] = deque()
        self._dispatching = False
        self.published = 0

    def register_topic(self, name: str) -> None:
        if name in self._subs:
            raise ConfigError(f"topics.{name}", "topic already registered")
        self._subs[name] = []

    @property
    def topics(self) -> list[str]:
        return list(self._subs)

    def _topic(self, name: str) -> list[Subscription]:
        try:
            return self._subs[name]
        except KeyError:
            raise ConfigError(f"topics.{name}", "unknown topic") from None

    def subscribe(self, topic: str, node_id: str, handler: Callable) -> Subscription:
        sub = Subscription(topic, node_id, handler)
        self._topic(topic).append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        self._topic(sub.topic).remove(sub)

    def subscribers(self, topic: str) -> int:
        return len(self._topic(topic))

    def publish(self, topic: str, msg) -> int:
        subs = self._topic(topic)
        for sub in subs:
            sub.inbox.append(msg)
            self._ready.append(sub)
        self.published += 1
        if not self._dispatching:
            self.dispatch()
        return len(subs)

    def dispatch(self) -> int:
        delivered = 0
        self._dispatching = True
        try:
            while self._ready:
                sub = self._ready.popleft()
                sub.handler(sub.inbox.popleft())
                delivered += 1
        finally:
            self._dispatching = False
        return delivered


class FunctionNode:
    """Adapter turning a callable into a schedulable node."""

    def __init__(self, node_id: str, fn: Callable[[float], None]):
        self.id = node_id
        self._fn = fn

    def step(self, now: float) -> None:
        self._fn(now)


class Engine:
    def __init__(
        self,
        tick_duration=Fraction(1, 10),
        *,
        seed: int = 0,
        f_min: float = 0.1,
        f_max: float = 20.0,
        topics: Iterable[str] = (),
        realtime: bool = False,
    ):
        self.clock = SimClock(0, as_fraction(tick_duration))
        self.bus = Bus(topics)
        self.seed = seed
        self.f_min = f_min
        self.f_max = f_max
        self.realtime = realtime
        self._phases: dict[str, list] = {p: [] for p in PHASES}
        self._schedules: dict[str, NodeSchedule] = {}
        self._bounds: dict[str, tuple[float, float]] = {}
        self._requested: dict[str, float] = {}
        self._pending: dict[str, Fraction] = {}
        self._tick_end: list[Callable[[float], None]] = []

    @property
    def now(self) -> float:
        return self.clock.now

    def rng(self, name: str) -> random.Random:
        return derive_rng(self.seed, name)

    def register(self, node, phase: str, frequency, *, offset: int = 0, bounds=None) -> NodeSchedule:
        if phase not in self._phases:
            raise ConfigError(f"nodes.{node.id}", f"unknown phase {phase!r}")
        if node.id in self._schedules:
            raise ConfigError(f"nodes.{node.id}", "duplicate node id")
        sched = NodeSchedule(node.id, as_fraction(frequency), phase=offset)
        self._phases[phase].append(node)
        self._schedules[node.id] = sched
        self._requested[node.id] = float(frequency)
        if bounds is not None:
            self._bounds[node.id] = (float(bounds[0]), float(bounds[1]))
        return sched

    def on_tick_end(self, callback: Callable[[float], None]) -> None:
        self._tick_end.append(callback)

    def schedule(self, component_id: str) -> NodeSchedule:
        try:
            return self._schedules[component_id]
        except KeyError:
            raise ConfigError(f"nodes.{component_id}", "component not scheduled") from None

    def bounds(self, component_id: str) -> tuple[float, float]:
        return self._bounds.get(component_id, (self.f_min, self.f_max))

    def frequency(self, component_id: str) -> float:
        self.schedule(component_id)
        return self._requested[component_id]

    def set_frequency(self, component_id: str, freq: float) -> float:
        """Change a node's rate from the next tick on; returns the previous rate.

        Out-of-bounds requests are clamped, applied, and then reported via
        SaturationError.
        """
        self.schedule(component_id)
        previous = self._requested[component_id]
        lo, hi = self.bounds(component_id)
        clamped = min(max(float(freq), lo), hi)
        self._requested[component_id] = clamped
        self._pending[component_id] = as_fraction(clamped)
        if clamped != freq:
            raise SaturationError(component_id, float(freq), clamped)
        return previous

    def advance(self, n_ticks: int) -> int:
        if n_ticks <= 0:
            return 0
        executed = 0
        dt = self.clock.tick_duration
        for _ in range(n_ticks):
            started = time.perf_counter() if self.realtime else 0.0
            if self._pending:
                for cid, freq in self._pending.items():
                    self._schedules[cid].frequency = freq
                self._pending.clear()
            self.clock.tick += 1
            tick = self.clock.tick
            now = self.clock.now
            for phase in PHASES:
                for node in self._phases[phase]:
                    sched = self._schedules[node.id]
                    if tick <= sched.phase:
                        continue
                    sched.accumulator += sched.frequency * dt
                    runs = math.floor(sched.accumulator)
                    if runs:
                        sched.accumulator -= runs
                        for _ in range(runs):
                            node.step(now)
                        sched.activations += runs
                        executed += runs
            for hook in self._tick_end:
                hook(now)
            if self.realtime:
                time.sleep(max(0.0, float(dt) - (time.perf_counter() - started)))
        return executed

    def run_for(self, seconds) -> int:
        ticks = as_fraction(seconds) / self.clock.tick_duration
        return self.advance(math.floor(ticks))
