"""Run configuration: YAML tree, validation with key paths, scenario presets."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import yaml

from .errors import ConfigError
from .hub import HUB_ID, HubConfig
from .injector import WaveformSpec
from .manager import ControllerParams, ManagerConfig
from .patient import PatientConfig, load_patient_config
from .sensor import SensorConfig

DEFAULT_DURATION = 300.0

# documented keys per section; anything else is rejected
SCHEMA = {
    "": {"duration", "seed", "tick_duration", "patient", "sensors", "hub", "injector", "flood", "manager",
         "controller"},
    "patient": {"frequency", "signs"},
    "patient.signs.*": {"change_frequency", "change_offset", "initial_state", "transitions", "ranges"},
    "sensors.*": {"id", "sign", "risk_band_probabilities", "risk_ranges", "accuracy", "instant_recharge",
                  "start_active", "frequency", "energy_per_execution", "capacity", "recharge_rate",
                  "failure_margin", "risk_thresholds"},
    "hub": {"capacity", "frequency", "energy_per_execution", "fusion", "instant_recharge", "battery_capacity",
            "recharge_rate"},
    "injector": {"frequency", "sensors", "waveforms"},
    "injector.waveforms.*": {"type", "offset", "amplitude", "frequency", "duration", "begin"},
    "flood": {"rate", "burst", "begin", "duration"},
    "manager": {"qos_attribute", "setpoint", "monitor_freq", "actuation_freq", "info_quant", "offset", "gain",
                "stability_margin", "formula_weights"},
    "controller": {"kp", "kp_cost", "f_min", "f_max", "bounds"},
}

# Scenario overlays. ``sensors`` is keyed by sensor id and merged into the list entry.
PRESETS = {
    "S1": {
        "manager": {"qos_attribute": "reliability", "setpoint": 0.9},
        "injector": {
            "frequency": 1.0,
            "sensors": ["oximeter", "ecg"],
            "waveforms": {
                "oximeter": {"type": "step", "offset": 0.0, "amplitude": 0.2, "frequency": 1.0,
                             "duration": 120.0, "begin": 60.0},
                "ecg": {"type": "step", "offset": 0.0, "amplitude": 0.2, "frequency": 1.0,
                        "duration": 120.0, "begin": 60.0},
            },
        },
        "flood": {"rate": 12.0, "burst": 1, "begin": 30.0, "duration": 1.0e9},
        "controller": {"bounds": {"centralhub": [0.1, 50.0]}},
    },
    "S2": {
        "manager": {"qos_attribute": "cost", "setpoint": 2.0, "offset": 0.5, "gain": 0.01},
        "sensors": {sid: {"frequency": 5.0} for sid in
                    ("oximeter", "ecg", "thermometer", "abps", "abpd", "glucosemeter")},
    },
    "S3": {
        "sensors": {"thermometer": {"start_active": False}, "glucosemeter": {"start_active": False}},
    },
}


def default_tree() -> dict:
    text = resources.files("sabsn").joinpath("data/default.yaml").read_text()
    return yaml.safe_load(text)


def deep_merge(base: Mapping, overlay: Mapping, path: str = "") -> dict:
    """New dict with ``overlay`` merged into ``base``; the inputs are not modified."""
    out = copy.deepcopy(dict(base))
    for key, value in overlay.items():
        p = f"{path}.{key}" if path else str(key)
        if key == "sensors" and not path and isinstance(value, Mapping):
            out["sensors"] = _merge_sensors(out.get("sensors", []), value)
        elif isinstance(value, Mapping) and isinstance(out.get(key), Mapping) and value:
            out[key] = deep_merge(out[key], value, p)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _merge_sensors(sensors: list, overlay: Mapping) -> list:
    by_id = {s["id"]: i for i, s in enumerate(sensors)}
    out = copy.deepcopy(list(sensors))
    for sid, fields in overlay.items():
        if sid not in by_id:
            raise ConfigError(f"sensors.{sid}", "overlay targets an unknown sensor")
        out[by_id[sid]].update(copy.deepcopy(dict(fields)))
    return out


def apply_preset(tree: Mapping, preset_id: str) -> dict:
    try:
        overlay = PRESETS[preset_id]
    except KeyError:
        raise ConfigError("scenario", f"unknown scenario {preset_id!r}; expected one of {sorted(PRESETS)}") from None
    return deep_merge(tree, overlay)


def load_tree(path: str | Path | None = None, scenarios=(), overrides: Mapping | None = None) -> dict:
    """Defaults, then the config file, then scenario overlays, then explicit overrides."""
    tree = default_tree()
    if path is not None:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, Mapping):
            raise ConfigError("", f"{path}: top level must be a mapping")
        if isinstance(user.get("sensors"), list):
            tree = dict(tree)
            tree["sensors"] = user.pop("sensors")
        tree = deep_merge(tree, user)
    for sid in scenarios:
        tree = apply_preset(tree, sid)
    if overrides:
        tree = deep_merge(tree, overrides)
    return tree


def _check_keys(tree: Mapping, schema_key: str, path: str) -> None:
    allowed = SCHEMA[schema_key]
    for key in tree:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else str(key), "unknown key")


@dataclass
class InjectorConfig:
    frequency: float = 1.0
    sensors: tuple = ()
    waveforms: dict = field(default_factory=dict)


@dataclass
class FloodConfig:
    rate: float = 0.0
    burst: int = 1
    begin: float = 0.0
    duration: float = 0.0


@dataclass
class RunConfig:
    duration: float
    seed: int
    tick_duration: float
    patient: PatientConfig
    sensors: list
    hub: HubConfig
    injector: InjectorConfig
    flood: FloodConfig
    manager: ManagerConfig
    controller: ControllerParams
    tree: dict = field(default_factory=dict, repr=False)

    @property
    def component_ids(self) -> list[str]:
        return [HUB_ID] + [s.sensor_id for s in self.sensors]


def _num(tree, key, path, default=None, cast=float):
    if key not in tree:
        if default is None:
            raise ConfigError(f"{path}.{key}" if path else key, "missing")
        return default
    try:
        return cast(tree[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}" if path else key, f"expected {cast.__name__}, got {tree[key]!r}") from None


def build_config(tree: Mapping) -> RunConfig:
    _check_keys(tree, "", "")
    duration = _num(tree, "duration", "", DEFAULT_DURATION)
    if duration <= 0:
        raise ConfigError("duration", "must be > 0")
    seed = _num(tree, "seed", "", 0, int)
    tick = _num(tree, "tick_duration", "", 0.1)
    if tick <= 0:
        raise ConfigError("tick_duration", "must be > 0")

    sensors_tree = tree.get("sensors") or []
    sensors = []
    seen = {HUB_ID}
    band_probs = {}
    for i, s in enumerate(sensors_tree):
        sid = s.get("id")
        p = f"sensors.{sid or i}"
        _check_keys(s, "sensors.*", p)
        if not sid:
            raise ConfigError(f"sensors[{i}].id", "missing")
        if sid in seen:
            raise ConfigError(p, "duplicate component id")
        seen.add(sid)
        if "risk_ranges" not in s:
            raise ConfigError(f"{p}.risk_ranges", "missing")
        if "sign" not in s:
            raise ConfigError(f"{p}.sign", "missing")
        cfg = SensorConfig(
            sensor_id=sid,
            sign=s["sign"],
            risk_value_ranges=s["risk_ranges"],
            risk_band_probabilities=tuple(s.get("risk_band_probabilities", (0.8, 0.15, 0.05))),
            accuracy=_num(s, "accuracy", p, 1.0),
            instant_recharge=bool(s.get("instant_recharge", True)),
            start_active=bool(s.get("start_active", True)),
            initial_frequency=_num(s, "frequency", p, 1.0),
            energy_per_execution=_num(s, "energy_per_execution", p, 0.1),
            capacity=_num(s, "capacity", p, 100.0),
            recharge_rate=s.get("recharge_rate"),
            failure_margin=_num(s, "failure_margin", p, 0.05),
            risk_thresholds=tuple(s.get("risk_thresholds", (20.0, 65.0))),
        )
        sensors.append(cfg)
        band_probs[cfg.sign] = cfg.risk_band_probabilities

    ptree = tree.get("patient") or {}
    _check_keys(ptree, "patient", "patient")
    for name, spec in (ptree.get("signs") or {}).items():
        _check_keys(spec, "patient.signs.*", f"patient.signs.{name}")
    patient = load_patient_config(ptree, "patient", band_probs)
    for cfg in sensors:
        if cfg.sign not in patient.signs:
            raise ConfigError(f"sensors.{cfg.sensor_id}.sign", f"patient does not generate {cfg.sign!r}")

    htree = tree.get("hub") or {}
    _check_keys(htree, "hub", "hub")
    hub = HubConfig(
        capacity=_num(htree, "capacity", "hub", 10, int),
        initial_frequency=_num(htree, "frequency", "hub", 10.0),
        energy_per_execution=_num(htree, "energy_per_execution", "hub", 0.05),
        fusion=htree.get("fusion", "mean"),
        instant_recharge=bool(htree.get("instant_recharge", True)),
        battery_capacity=_num(htree, "battery_capacity", "hub", 100.0),
        recharge_rate=htree.get("recharge_rate"),
    )

    itree = tree.get("injector") or {}
    _check_keys(itree, "injector", "injector")
    ifreq = _num(itree, "frequency", "injector", 1.0)
    if ifreq <= 0:
        raise ConfigError("injector.frequency", "must be > 0")
    known = {s.sensor_id for s in sensors}
    waveforms = {}
    for sid, w in (itree.get("waveforms") or {}).items():
        p = f"injector.waveforms.{sid}"
        _check_keys(w, "injector.waveforms.*", p)
        if sid not in known:
            raise ConfigError(p, "unknown target sensor")
        waveforms[sid] = WaveformSpec(
            target_sensor=sid,
            kind=w.get("type", "step"),
            offset=_num(w, "offset", p, 0.0),
            amplitude=_num(w, "amplitude", p, 0.2),
            frequency=_num(w, "frequency", p, ifreq),
            duration=_num(w, "duration", p, 120.0),
            begin=_num(w, "begin", p, 60.0),
        )
    targets = tuple(itree.get("sensors") or ())
    for sid in targets:
        if sid not in known:
            raise ConfigError(f"injector.sensors.{sid}", "unknown target sensor")
        if sid not in waveforms:
            raise ConfigError(f"injector.waveforms.{sid}", "listed sensor has no waveform")
    injector = InjectorConfig(ifreq, targets, waveforms)

    ftree = tree.get("flood") or {}
    _check_keys(ftree, "flood", "flood")
    flood = FloodConfig(
        rate=_num(ftree, "rate", "flood", 0.0),
        burst=_num(ftree, "burst", "flood", 1, int),
        begin=_num(ftree, "begin", "flood", 0.0),
        duration=_num(ftree, "duration", "flood", 0.0),
    )
    if flood.rate < 0 or flood.burst < 0:
        raise ConfigError("flood", "rate and burst must be >= 0")

    mtree = tree.get("manager") or {}
    _check_keys(mtree, "manager", "manager")
    manager = ManagerConfig(
        qos_attribute=mtree.get("qos_attribute", "reliability"),
        setpoint=_num(mtree, "setpoint", "manager", 0.9),
        monitor_freq=_num(mtree, "monitor_freq", "manager", 1.0),
        actuation_freq=_num(mtree, "actuation_freq", "manager", 0.2),
        info_quant=_num(mtree, "info_quant", "manager", 100, int),
        offset=_num(mtree, "offset", "manager", 0.1),
        gain=_num(mtree, "gain", "manager", 0.002),
        stability_margin=_num(mtree, "stability_margin", "manager", 0.02),
        formula_weights=dict(mtree.get("formula_weights") or {}),
    )
    for cid in manager.formula_weights:
        if cid not in seen:
            raise ConfigError(f"manager.formula_weights.{cid}", "unknown component")

    ctree = tree.get("controller") or {}
    _check_keys(ctree, "controller", "controller")
    bounds = {}
    for cid, pair in (ctree.get("bounds") or {}).items():
        if cid not in seen:
            raise ConfigError(f"controller.bounds.{cid}", "unknown component")
        if len(pair) != 2:
            raise ConfigError(f"controller.bounds.{cid}", "expected [f_min, f_max]")
        bounds[cid] = (float(pair[0]), float(pair[1]))
    controller = ControllerParams(
        kp=_num(ctree, "kp", "controller", 200.0),
        kp_cost=_num(ctree, "kp_cost", "controller", 5.0),
        f_min=_num(ctree, "f_min", "controller", 0.1),
        f_max=_num(ctree, "f_max", "controller", 20.0),
        bounds=bounds,
    )
    for cid, freq in [(HUB_ID, hub.initial_frequency)] + [(s.sensor_id, s.initial_frequency) for s in sensors]:
        lo, hi = controller.bounds_for(cid)
        if not lo <= freq <= hi:
            raise ConfigError(f"{cid}.frequency", f"initial frequency {freq} outside actuation bounds [{lo}, {hi}]")

    return RunConfig(duration, seed, tick, patient, sensors, hub, injector, flood, manager, controller,
                     copy.deepcopy(dict(tree)))


def load_config(path=None, scenarios=(), overrides=None) -> RunConfig:
    return build_config(load_tree(path, scenarios, overrides))


def dump_tree(tree: Mapping) -> str:
    return yaml.safe_dump(dict(tree), sort_keys=False, default_flow_style=None)
