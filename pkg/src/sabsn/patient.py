"""Vital-sign generation: one five-state discrete-time Markov chain per sign.

States are ordered by value: high-risk-low, moderate-risk-low, low-risk,
moderate-risk-high, high-risk-high. A sign holds a value drawn uniformly from
its state's range until the chain moves again.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import ConfigError

SIGNS = ("oxigenation", "heart_rate", "temperature", "abps", "abpd", "glucose")
N_STATES = 5
ROW_TOL = 1e-9
_EPS = 1e-9


def band_of_state(state: int) -> str:
    return ("high", "moderate", "low", "moderate", "high")[state]


def matrix_from_band_probabilities(p_low: float, p_mod: float, p_high: float) -> list[list[float]]:
    """Transition matrix whose stationary band occupancy is (p_low, p_mod, p_high).

    Every row is the same distribution, so the chain is stationary from the
    first step; moderate and high mass is split evenly between the two sides.
    """
    row = [p_high / 2, p_mod / 2, p_low, p_mod / 2, p_high / 2]
    return [list(row) for _ in range(N_STATES)]


def check_ranges(ranges, path: str) -> list[tuple[float, float]]:
    if len(ranges) != N_STATES:
        raise ConfigError(path, f"expected {N_STATES} ranges, got {len(ranges)}")
    out = []
    for i, pair in enumerate(ranges):
        if len(pair) != 2:
            raise ConfigError(f"{path}[{i}]", "range must be a [lo, hi] pair")
        lo, hi = float(pair[0]), float(pair[1])
        if not lo < hi:
            raise ConfigError(f"{path}[{i}]", f"empty range [{lo}, {hi}]")
        if out and lo < out[-1][1]:
            raise ConfigError(f"{path}[{i}]", f"overlaps or precedes previous range {out[-1]}")
        out.append((lo, hi))
    return out


def check_matrix(matrix, path: str) -> list[list[float]]:
    if len(matrix) != N_STATES:
        raise ConfigError(path, f"expected {N_STATES} rows, got {len(matrix)}")
    out = []
    for i, row in enumerate(matrix):
        if len(row) != N_STATES:
            raise ConfigError(f"{path}[{i}]", f"expected {N_STATES} entries, got {len(row)}")
        row = [float(p) for p in row]
        if any(p < 0 for p in row):
            raise ConfigError(f"{path}[{i}]", "negative transition probability")
        total = sum(row)
        if abs(total - 1.0) > ROW_TOL:
            raise ConfigError(f"{path}[{i}]", f"row sums to {total:.12g}, not 1")
        out.append(row)
    return out


@dataclass
class VitalSignModel:
    sign_id: str
    transition_matrix: Sequence[Sequence[float]]
    state_ranges: Sequence[tuple[float, float]]
    change_frequency: float
    change_offset: float = 0.0
    current_state: int = 2
    current_value: float = float("nan")
    last_change_time: float = 0.0

    def __post_init__(self):
        self.transition_matrix = tuple(tuple(r) for r in check_matrix(self.transition_matrix, self.sign_id))
        self.state_ranges = tuple(check_ranges(self.state_ranges, self.sign_id))
        if self.change_frequency <= 0:
            raise ConfigError(f"{self.sign_id}.change_frequency", "must be > 0")

    @property
    def period(self) -> float:
        return 1.0 / self.change_frequency + self.change_offset

    def draw_value(self, rng: random.Random) -> float:
        lo, hi = self.state_ranges[self.current_state]
        return rng.uniform(lo, hi)

    def force_state(self, state: int, rng: random.Random) -> None:
        self.current_state = state
        self.current_value = self.draw_value(rng)

    def maybe_transition(self, now: float, rng: random.Random) -> int | None:
        """Advance the chain if a full period plus offset has elapsed; returns the new state."""
        if now - self.last_change_time + _EPS < self.period:
            return None
        row = self.transition_matrix[self.current_state]
        u = rng.random()
        acc = 0.0
        nxt = N_STATES - 1
        for j, p in enumerate(row):
            acc += p
            if u < acc:
                nxt = j
                break
        # guard against float shortfall in the cumulative sum landing on a zero-probability state
        while row[nxt] == 0.0:
            nxt -= 1
        self.current_state = nxt
        self.current_value = self.draw_value(rng)
        self.last_change_time = now
        return nxt


@dataclass
class PatientConfig:
    frequency: float
    signs: dict[str, VitalSignModel] = field(default_factory=dict)


def load_patient_config(tree: Mapping, path: str = "patient", band_probabilities=None) -> PatientConfig:
    """Build and validate a PatientConfig from a config subtree.

    ``band_probabilities`` maps sign -> (p_low, p_mod, p_high) and fills in
    transition matrices a sign does not configure.
    """
    band_probabilities = band_probabilities or {}
    freq = float(tree.get("frequency", 10.0))
    if freq <= 0:
        raise ConfigError(f"{path}.frequency", "must be > 0")
    signs_tree = tree.get("signs")
    if not signs_tree:
        raise ConfigError(f"{path}.signs", "at least one vital sign is required")
    signs = {}
    for name, spec in signs_tree.items():
        p = f"{path}.signs.{name}"
        if name not in SIGNS:
            raise ConfigError(p, f"unknown vital sign; expected one of {SIGNS}")
        cf = float(spec.get("change_frequency", 0))
        if cf <= 0:
            raise ConfigError(f"{p}.change_frequency", "must be > 0")
        offset = float(spec.get("change_offset", 0.0))
        if offset < 0:
            raise ConfigError(f"{p}.change_offset", "must be >= 0")
        if "ranges" not in spec:
            raise ConfigError(f"{p}.ranges", "missing")
        ranges = check_ranges(spec["ranges"], f"{p}.ranges")
        if "transitions" in spec:
            matrix = check_matrix(spec["transitions"], f"{p}.transitions")
        elif name in band_probabilities:
            matrix = matrix_from_band_probabilities(*band_probabilities[name])
        else:
            raise ConfigError(f"{p}.transitions", "missing and no sensor band probabilities to derive it")
        state = int(spec.get("initial_state", 2))
        if not 0 <= state < N_STATES:
            raise ConfigError(f"{p}.initial_state", f"must be in 0..{N_STATES - 1}")
        signs[name] = VitalSignModel(name, matrix, ranges, cf, offset, current_state=state)
    return PatientConfig(freq, signs)


def patient_config_to_tree(cfg: PatientConfig) -> dict:
    return {
        "frequency": cfg.frequency,
        "signs": {
            name: {
                "change_frequency": m.change_frequency,
                "change_offset": m.change_offset,
                "initial_state": m.current_state,
                "transitions": [list(r) for r in m.transition_matrix],
                "ranges": [list(r) for r in m.state_ranges],
            }
            for name, m in cfg.signs.items()
        },
    }


class Patient:
    """Scheduled node advancing every sign's chain; sensors read values on request."""

    def __init__(self, config: PatientConfig, rng: random.Random, node_id: str = "patient"):
        self.id = node_id
        self.config = config
        self.models = config.signs
        self.rng = rng
        for model in self.models.values():
            model.current_value = model.draw_value(rng)
            model.last_change_time = 0.0
        self.transitions = 0

    def step(self, now: float) -> None:
        for model in self.models.values():
            if model.maybe_transition(now, self.rng) is not None:
                self.transitions += 1

    def current_value(self, sign_id: str) -> float:
        try:
            return self.models[sign_id].current_value
        except KeyError:
            raise LookupError(f"unknown vital sign {sign_id!r}") from None

    def current_state(self, sign_id: str) -> int:
        return self.models[sign_id].current_state
