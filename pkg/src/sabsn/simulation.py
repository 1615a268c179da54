"""Wires a RunConfig into a runnable system and persists its outputs."""
from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import asdict
from pathlib import Path

from .config import RunConfig, dump_tree
from .hub import HUB_ID, CentralHub
from .injector import FloodSource, UncertaintyInjector
from .manager import ManagingSystem
from .messages import TOPICS
from .patient import Patient
from .repository import KnowledgeRepository
from .runtime import Engine, as_fraction
from .sensor import Sensor

log = logging.getLogger(__name__)


def new_run_id(out_dir: Path | None = None) -> str:
    run_id = str(int(time.time() * 1000))
    if out_dir is not None:
        base, n = run_id, 1
        while (Path(out_dir) / run_id).exists():
            run_id = f"{base}_{n}"
            n += 1
    return run_id


class Simulation:
    def __init__(self, config: RunConfig, out_dir: str | Path | None = None, run_id: str | None = None,
                 realtime: bool = False, progress_every: float = 60.0):
        cfg = copy.deepcopy(config)
        self.config = cfg
        self.out_root = Path(out_dir) if out_dir is not None else None
        self.run_id = run_id or new_run_id(self.out_root)
        self.run_dir = self.out_root / self.run_id if self.out_root is not None else None
        self.progress_every = progress_every

        ctrl = cfg.controller
        engine = Engine(as_fraction(cfg.tick_duration), seed=cfg.seed, f_min=ctrl.f_min, f_max=ctrl.f_max,
                        topics=TOPICS, realtime=realtime)
        self.engine = engine
        self.repository = KnowledgeRepository(self.run_dir, self.run_id)
        self.repository.attach(engine.bus)

        self.patient = Patient(cfg.patient, engine.rng("patient"))
        self.injector = UncertaintyInjector(engine, cfg.injector.frequency, cfg.injector.sensors,
                                            cfg.injector.waveforms, engine.rng("injector"))
        self.flood = None
        if cfg.flood.rate > 0 and cfg.flood.burst > 0:
            self.flood = FloodSource(engine, cfg.flood.burst, cfg.flood.begin, cfg.flood.duration)
        self.sensors = [Sensor(s, engine, self.patient, engine.rng(s.sensor_id)) for s in cfg.sensors]
        self.hub = CentralHub(cfg.hub, engine, [s.sensor_id for s in cfg.sensors])

        frequencies = {HUB_ID: cfg.hub.initial_frequency}
        frequencies.update({s.sensor_id: s.initial_frequency for s in cfg.sensors})
        self.manager = ManagingSystem(cfg.manager, ctrl, engine, self.repository, cfg.component_ids, frequencies)

        engine.register(self.injector, "injector", cfg.injector.frequency)
        if self.flood is not None:
            engine.register(self.flood, "injector", cfg.flood.rate)
        engine.register(self.patient, "managed", cfg.patient.frequency)
        for sensor in self.sensors:
            engine.register(sensor, "managed", sensor.config.initial_frequency,
                            bounds=ctrl.bounds_for(sensor.id))
        engine.register(self.hub, "managed", cfg.hub.initial_frequency, bounds=ctrl.bounds_for(HUB_ID))
        engine.register(self.manager.planner_node, "managing", cfg.manager.actuation_freq)
        engine.register(self.manager.monitor_node, "managing", cfg.manager.monitor_freq)
        engine.on_tick_end(self.repository.flush)
        self._started = False

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        if self.run_dir is not None:
            (self.run_dir / f"config_{self.run_id}.yaml").write_text(dump_tree(self.config.tree))
        self.hub.start(0.0)
        for sensor in self.sensors:
            sensor.start(0.0)
        self.manager.start(0.0)
        self.repository.flush()

    def advance(self, n_ticks: int) -> int:
        self.start()
        return self.engine.advance(n_ticks)

    def run(self, duration: float | None = None) -> dict:
        self.start()
        duration = self.config.duration if duration is None else duration
        ticks = int(as_fraction(duration) / self.engine.clock.tick_duration)
        chunk = max(1, int(as_fraction(self.progress_every) / self.engine.clock.tick_duration))
        done = 0
        while done < ticks:
            n = min(chunk, ticks - done)
            self.engine.advance(n)
            done += n
            trace = self.manager.monitor_trace
            log.info("t=%.1f records=%d qos=%s", self.engine.now, sum(self.repository.counts().values()),
                     f"{trace[-1][1]:.4f}" if trace else "n/a")
        return self.finish()

    def finish(self) -> dict:
        self.repository.close()
        summary = self.summary()
        if self.run_dir is not None:
            with (self.run_dir / f"plan_{self.run_id}.jsonl").open("w") as fh:
                for tr in self.manager.plan_trace:
                    fh.write(json.dumps(asdict(tr), sort_keys=True) + "\n")
            (self.run_dir / f"summary_{self.run_id}.json").write_text(json.dumps(summary, indent=2) + "\n")
        return summary

    def summary(self) -> dict:
        trace = self.manager.monitor_trace
        return {
            "run_id": self.run_id,
            "virtual_time": float(self.engine.now),
            "tick_duration": float(self.engine.clock.tick_duration),
            "monitor_freq": self.config.manager.monitor_freq,
            "info_quant": self.config.manager.info_quant,
            "attribute": self.manager.attribute,
            "setpoint": self.manager.config.setpoint,
            "records": self.repository.counts(),
            "final_qos": trace[-1][1] if trace else None,
            "hub": {"arrived": self.hub.arrived, "accepted": self.hub.accepted, "dropped": self.hub.dropped,
                    "processed": self.hub.processed},
        }
