"""Wire protocol exchanged over the bus.

Every message is an immutable dataclass. ``timestamp`` is virtual seconds.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Union

STATUS_VALUES = ("init", "running", "success", "fail")
EVENT_VALUES = ("activate", "deactivate")
RISK_LABELS = ("low", "moderate", "high")


@dataclass(frozen=True, slots=True)
class SensorData:
    sensor_id: str
    value: float
    risk_percent: float
    risk_label: str
    timestamp: float
    source: str = "patient"


@dataclass(frozen=True, slots=True)
class Status:
    component_id: str
    status: str
    timestamp: float


@dataclass(frozen=True, slots=True)
class Event:
    component_id: str
    event: str
    timestamp: float


@dataclass(frozen=True, slots=True)
class EnergyStatus:
    component_id: str
    cost: float
    timestamp: float


@dataclass(frozen=True, slots=True)
class UncertaintyNoise:
    sensor_id: str
    noise_factor: float
    timestamp: float


@dataclass(frozen=True, slots=True)
class AdaptationCommand:
    target: str
    frequency: float
    timestamp: float


@dataclass(frozen=True, slots=True)
class Strategy:
    attribute: str
    setpoints: Mapping[str, float]
    timestamp: float
    # measurements the plan was computed from, so the enactor acts on the same snapshot
    measured: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class ExceptionMsg:
    component_id: str
    kind: str
    attempted: float
    timestamp: float


@dataclass(frozen=True, slots=True)
class DataAccessRequest:
    requester: str
    category: str
    component_id: str
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"window size must be >= 1, got {self.n}")


@dataclass(frozen=True, slots=True)
class PatientStatus:
    fused_risk: float
    label: str
    timestamp: float


Message = Union[
    SensorData,
    Status,
    Event,
    EnergyStatus,
    UncertaintyNoise,
    AdaptationCommand,
    Strategy,
    ExceptionMsg,
    DataAccessRequest,
    PatientStatus,
]

# topic name -> message type carried on it
TOPICS = {
    "sensor_data": SensorData,
    "status": Status,
    "event": Event,
    "energy_status": EnergyStatus,
    "uncertainty": UncertaintyNoise,
    "adaptation_command": AdaptationCommand,
    "strategy": Strategy,
    "exception": ExceptionMsg,
    "patient_status": PatientStatus,
}
