import logging
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sabsn.errors import ConfigError, PlanningError
from sabsn.manager import (
    ControllerParams,
    ManagerConfig,
    ManagingSystem,
    ProportionalController,
    control,
    delta_grid,
    enact,
    estimate_local,
    needs_adaptation,
    plan_strategy,
)
from sabsn.messages import TOPICS, Event, Strategy
from sabsn.repository import KnowledgeRepository, LogRecord, eval_global_reliability
from sabsn.runtime import Engine

from oracles import random_planner_case, sweep_plan

COMPONENTS = ["centralhub", "oximeter", "ecg", "thermometer", "abps", "abpd", "glucosemeter"]


def status_window(successes, fails):
    return [LogRecord("Status", 0.0, "x", "success")] * successes + [LogRecord("Status", 0.0, "x", "fail")] * fails


# estimates

def test_estimate_ratio_and_neutral_default():
    assert estimate_local("reliability", status_window(9, 1)).value == 0.9
    idle = [LogRecord("Status", 0.0, "x", "init"), LogRecord("Status", 0.0, "x", "running")]
    est = estimate_local("reliability", idle)
    assert est.value == 1.0 and est.low_confidence
    assert estimate_local("cost", []).value == 0.0


def test_cost_estimate_is_mean_energy_times_frequency():
    window = [LogRecord("EnergyStatus", 0.0, "x", c) for c in (0.1, 0.1, 0.4)]
    assert estimate_local("cost", window, 2.0).value == pytest.approx(0.4)
    with pytest.raises(ValueError):
        estimate_local("cost", window)


# control law and dead-band

def test_control_examples():
    assert control(0.0, 200) == 0.0
    assert control(0.05, 200) == 10.0
    assert control(-0.05, 200) == -10.0


@given(st.floats(-1e3, 1e3), st.floats(-10, 10), st.floats(-100, 100))
def test_control_linear_in_error(kp, e, a):
    assert control(a * e, kp) == pytest.approx(a * control(e, kp), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("measured,expected", [(0.90, False), (0.88, True), (0.885, False), (0.92, True)])
def test_dead_band(measured, expected):
    assert needs_adaptation(measured, 0.90) is expected


def test_delta_grid_is_symmetric():
    grid = delta_grid(0.1, 0.002)
    assert len(grid) == 101 and grid[50] == 0.0
    assert grid[0] == -grid[-1] == pytest.approx(-0.1)
    assert delta_grid(0.1, 0.03) == pytest.approx([-0.09, -0.06, -0.03, 0.0, 0.03, 0.06, 0.09])


# planner

def test_plan_at_setpoint_keeps_measurements():
    measured = {c: 1.0 for c in COMPONENTS}
    measured["centralhub"] = 0.9
    plan = plan_strategy(0.9, measured, COMPONENTS, offset=0.1, gain=0.002)
    assert plan.delta == 0.0 and plan.setpoints == measured and not plan.best_effort


def test_plan_raises_locals_to_reach_setpoint():
    active = ["centralhub", "oximeter", "ecg"]
    measured = dict.fromkeys(active, 0.9)
    plan = plan_strategy(0.81, measured, active, offset=0.1, gain=0.002)
    oracle = sweep_plan(0.81, measured, active, offset=0.1, gain=0.002, kind="reliability")
    assert plan == oracle
    assert plan.delta > 0 and abs(plan.global_value - 0.81) <= 0.81 * 0.02


def test_unreachable_setpoint_returns_boundary_best_effort():
    measured = dict.fromkeys(COMPONENTS, 0.5)
    plan = plan_strategy(0.99, measured, COMPONENTS, offset=0.1, gain=0.002)
    assert plan.best_effort and plan.delta == pytest.approx(0.1)


def test_planner_refuses_empty_or_unmeasured_active_set():
    with pytest.raises(PlanningError):
        plan_strategy(0.9, {}, [], offset=0.1, gain=0.002)
    with pytest.raises(PlanningError):
        plan_strategy(0.9, {"ecg": 1.0}, ["ecg", "abps"], offset=0.1, gain=0.002)


@pytest.mark.parametrize("seed", range(40))
@pytest.mark.parametrize("kind", ["reliability", "cost"])
def test_planner_matches_exhaustive_sweep(seed, kind):
    case = random_planner_case(random.Random(seed), kind)
    args = (case.pop("setpoint"), case.pop("measured"), case.pop("active"))
    assert plan_strategy(*args, **case) == sweep_plan(*args, **case)


# enactor

def params(**kw):
    return ControllerParams(**kw)


def test_enact_raises_frequency_by_kp_times_error():
    (act,) = enact({"ecg": 0.95}, {"ecg": 0.90}, {"ecg": 1.0}, params())
    assert act.frequency == pytest.approx(11.0) and act.saturated is None


def test_enact_clamps_and_flags_saturation():
    (act,) = enact({"ecg": 1.0}, {"ecg": 0.5}, {"ecg": 1.0}, params())
    assert act.frequency == 20.0 and act.saturated == "saturated_high" and act.attempted == pytest.approx(101.0)
    (act,) = enact({"ecg": 0.5}, {"ecg": 1.0}, {"ecg": 1.0}, params())
    assert act.frequency == 0.1 and act.saturated == "saturated_low"


def test_enact_dead_band_per_component():
    assert enact({"ecg": 0.9, "abps": 0.5}, {"ecg": 0.905, "abps": 0.505}, {"ecg": 1, "abps": 1}, params()) == []


def test_cost_error_lowers_frequency_when_over_budget():
    (act,) = enact({"ecg": 0.3}, {"ecg": 0.5}, {"ecg": 5.0}, params(kp_cost=5.0), kind="cost")
    assert act.error == pytest.approx(0.2) and act.frequency == pytest.approx(4.0)


def test_per_component_bounds_apply():
    (act,) = enact({"centralhub": 1.0}, {"centralhub": 0.5}, {"centralhub": 10.0},
                   params(bounds={"centralhub": (0.1, 50.0)}))
    assert act.frequency == 50.0 and act.saturated == "saturated_high"


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.1, 20))
def test_reliability_direction(target, measured, freq):
    for act in enact({"c": target}, {"c": measured}, {"c": freq}, params()):
        if measured < target:
            assert act.frequency >= freq
        else:
            assert act.frequency <= freq


@given(st.floats(0.01, 5), st.floats(0, 5), st.floats(0.1, 20))
def test_cost_direction(target, measured, freq):
    for act in enact({"c": target}, {"c": measured}, {"c": freq}, params(), kind="cost"):
        if measured > target:
            assert act.frequency <= freq
        else:
            assert act.frequency >= freq


def test_config_validation():
    with pytest.raises(ConfigError):
        ManagerConfig(qos_attribute="latency")
    with pytest.raises(ConfigError):
        ManagerConfig(gain=0.5, offset=0.1)
    with pytest.raises(ConfigError):
        ManagerConfig(setpoint=1.5)
    assert ManagerConfig(qos_attribute="cost_engine", setpoint=2).qos_attribute == "cost"
    with pytest.raises(ConfigError):
        ControllerParams(f_min=5, f_max=1)


# managing system wired to a repository

class Loop:
    def __init__(self, rel=None, setpoint=0.9, **bounds):
        self.engine = Engine(seed=0, topics=TOPICS)
        self.repo = KnowledgeRepository()
        self.repo.attach(self.engine.bus)
        self.commands = []
        self.strategies = []
        self.engine.bus.subscribe("adaptation_command", "probe", self.commands.append)
        self.engine.bus.subscribe("strategy", "probe", self.strategies.append)
        self.manager = ManagingSystem(ManagerConfig(setpoint=setpoint), ControllerParams(bounds=bounds),
                                      self.engine, self.repo, COMPONENTS, dict.fromkeys(COMPONENTS, 1.0))
        self.t = 0.0
        if rel:
            self.set_reliability(rel)

    def set_reliability(self, rel):
        """Append a fresh 100-record window per component."""
        self.t += 1.0
        for cid in COMPONENTS:
            fails = round((1 - rel.get(cid, 1.0)) * 100)
            for i in range(100):
                self.repo.append(LogRecord("Status", self.t, cid, "fail" if i < fails else "success"))


def test_initial_frequencies_are_announced():
    loop = Loop()
    loop.manager.start(0.0)
    assert [(c.target, c.frequency) for c in loop.commands] == [(c, 1.0) for c in COMPONENTS]
    assert len(loop.repo.records["Adaptation"]) == len(COMPONENTS)


def test_in_band_measurements_produce_no_strategy():
    loop = Loop({"ecg": 0.91})
    trace = loop.manager.actuate(5.0)
    assert not trace.adapted and loop.strategies == [] and loop.commands == []


def test_every_command_is_logged():
    loop = Loop({"ecg": 0.7})
    loop.manager.actuate(5.0)
    assert loop.commands
    logged = [(r.component_id, r.payload, r.timestamp) for r in loop.repo.records["Adaptation"]]
    assert logged == [(c.target, c.frequency, c.timestamp) for c in loop.commands]


def test_saturated_component_is_pinned_then_released():
    loop = Loop({"ecg": 0.5, "oximeter": 0.8})
    loop.manager.actuate(5.0)
    assert "ecg" in loop.manager.pinned
    loop.manager.actuate(10.0)
    strategy = loop.strategies[-1]
    assert strategy.setpoints["ecg"] == 0.5
    loop.set_reliability({"ecg": 0.7, "oximeter": 0.8})
    trace = loop.manager.actuate(15.0)
    # released before planning; saturating again re-pins it at the new level
    assert "ecg" not in trace.pinned
    assert loop.strategies[-1].setpoints["ecg"] != 0.7
    assert loop.manager.pinned["ecg"] == 0.7


def test_all_saturated_gives_best_effort_with_warning(caplog):
    loop = Loop({c: 0.3 for c in COMPONENTS})
    loop.manager.actuate(5.0)
    assert set(loop.manager.pinned) == set(COMPONENTS)
    with caplog.at_level(logging.WARNING):
        trace = loop.manager.actuate(10.0)
    assert trace.best_effort and trace.delta == 0.0
    assert "saturated" in caplog.text or "pinned" in caplog.text


def test_deactivate_then_activate():
    loop = Loop({"ecg": 0.7})
    bus = loop.engine.bus
    bus.publish("event", Event("oximeter", "deactivate", 1.0))
    trace = loop.manager.actuate(5.0)
    assert trace.active == tuple(c for c in COMPONENTS if c != "oximeter")
    loop.manager.controller.frequencies["oximeter"] = 7.0
    bus.publish("event", Event("oximeter", "activate", 6.0))
    assert loop.manager.active == COMPONENTS
    assert (loop.commands[-1].target, loop.commands[-1].frequency) == ("oximeter", 1.0)


def test_unknown_component_event_is_audited():
    loop = Loop()
    loop.engine.bus.publish("event", Event("ghost", "deactivate", 1.0))
    assert loop.manager.active == COMPONENTS and "ghost" in loop.manager.audit[-1]


def test_monitor_records_global_value():
    loop = Loop({"centralhub": 0.95, **{c: 0.9 for c in COMPONENTS[1:]}})
    g = loop.manager.monitor(1.0)
    assert g == eval_global_reliability({"centralhub": 0.95, **{c: 0.9 for c in COMPONENTS[1:]}}, COMPONENTS)
    assert loop.manager.monitor_trace[-1][0] == 1.0


def test_controller_seam_receives_strategies():
    calls = []

    class Recording(ProportionalController):
        def apply_reli_strategy(self, strategy):
            calls.append(strategy)
            return []

    eng = Engine(seed=0, topics=TOPICS)
    repo = KnowledgeRepository()
    mgr = ManagingSystem(ManagerConfig(), ControllerParams(), eng, repo, ["ecg"], {"ecg": 1.0}, controller=Recording())
    eng.bus.publish("strategy", Strategy("reliability", {"ecg": 0.95}, 1.0, {"ecg": 0.5}))
    assert len(calls) == 1 and mgr.controller.frequencies == {"ecg": 1.0}
