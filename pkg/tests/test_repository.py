import pytest
from hypothesis import given
from hypothesis import strategies as st

from sabsn.errors import FormulaError, LogSchemaError
from sabsn.messages import DataAccessRequest, Event, Status
from sabsn.repository import (
    CATEGORIES,
    KnowledgeRepository,
    LogRecord,
    eval_global_cost,
    eval_global_reliability,
    format_row,
    formula_for,
    header,
    log_path,
    parse_row,
    read_log,
    read_run_logs,
    serialize,
)
from sabsn.runtime import Bus
from sabsn.messages import TOPICS

COMPONENTS = ["centralhub", "oximeter", "ecg", "thermometer", "abps", "abpd", "glucosemeter"]


def test_status_record_is_next_line_of_file(tmp_path):
    repo = KnowledgeRepository(tmp_path, "r1")
    bus = Bus(TOPICS)
    repo.attach(bus)
    bus.publish("status", Status("oximeter", "init", 0.0))
    bus.publish("status", Status("oximeter", "success", 0.5))
    repo.flush()
    lines = log_path(tmp_path, "Status", "r1").read_text().splitlines()
    assert lines == ["timestamp,component_id,status", "0.0,oximeter,init", "0.5,oximeter,success"]


def test_file_names_and_headers(tmp_path):
    repo = KnowledgeRepository(tmp_path, "42")
    repo.close()
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == sorted(f"{c.lower()}_42.csv" for c in CATEGORIES)
    assert header("EnergyStatus") == ["timestamp", "component_id", "cost"]


def test_wrong_payload_for_category_rejected():
    repo = KnowledgeRepository()
    with pytest.raises(LogSchemaError):
        repo.append(LogRecord("Status", 0.0, "ecg", "deactivate"))
    with pytest.raises(LogSchemaError):
        repo.append(LogRecord("EnergyStatus", 0.0, "ecg", -1.0))
    with pytest.raises(LogSchemaError):
        repo.append(LogRecord("Adaptation", 0.0, "ecg", 0.0))
    with pytest.raises(LogSchemaError):
        repo.append(LogRecord("Weather", 0.0, "ecg", 1.0))


def test_timestamps_must_not_go_backwards():
    repo = KnowledgeRepository()
    repo.append(LogRecord("Status", 2.0, "ecg", "success"))
    with pytest.raises(LogSchemaError):
        repo.append(LogRecord("Status", 1.0, "abps", "success"))


def test_thousand_appends_thousand_lines(tmp_path):
    repo = KnowledgeRepository(tmp_path, "n")
    for i in range(1000):
        repo.append(LogRecord("EnergyStatus", i / 10, "ecg", 0.1))
    repo.close()
    assert len(log_path(tmp_path, "EnergyStatus", "n").read_text().splitlines()) == 1001


def test_window_queries():
    repo = KnowledgeRepository()
    assert repo.query_window("ecg", "Status", 5) == []
    for i in range(3):
        repo.append(LogRecord("Status", float(i), "ecg", "success"))
    assert len(repo.query_window("ecg", "Status", 5)) == 3
    for i in range(3, 100):
        repo.append(LogRecord("Status", float(i), "ecg", "fail" if i % 7 == 0 else "success"))
    window = repo.query_window("ecg", "Status", 10)
    assert [r.timestamp for r in window] == [float(i) for i in range(99, 89, -1)]
    assert repo.handle(DataAccessRequest("m", "Status", "ecg", 10)) == window
    with pytest.raises(ValueError):
        DataAccessRequest("m", "Status", "ecg", 0)


def test_read_log_missing_file_names_it(tmp_path):
    with pytest.raises(FileNotFoundError, match="status_x.csv"):
        read_log(log_path(tmp_path, "Status", "x"), "Status")


def test_read_log_bad_header(tmp_path):
    p = tmp_path / "status_x.csv"
    p.write_text("time,who,what\n")
    with pytest.raises(LogSchemaError):
        read_log(p, "Status")


records = st.one_of(
    st.builds(LogRecord, st.just("Status"), st.floats(0, 1e6), st.sampled_from(COMPONENTS),
              st.sampled_from(["init", "running", "success", "fail"])),
    st.builds(LogRecord, st.just("EnergyStatus"), st.floats(0, 1e6), st.sampled_from(COMPONENTS),
              st.floats(0, 1e3)),
    st.builds(LogRecord, st.just("Adaptation"), st.floats(0, 1e6), st.sampled_from(COMPONENTS),
              st.floats(1e-3, 1e3)),
    st.builds(LogRecord, st.just("Uncertainty"), st.floats(0, 1e6), st.sampled_from(COMPONENTS),
              st.floats(-10, 10)),
)


@given(st.lists(records, max_size=30))
def test_rows_round_trip(recs):
    for rec in recs:
        assert parse_row(rec.category, format_row(rec)) == rec


@given(st.lists(st.floats(0, 1e3), max_size=20))
def test_serialize_round_trip_through_files(tmp_path_factory, costs):
    d = tmp_path_factory.mktemp("rt")
    repo = KnowledgeRepository(d, "rt")
    recs = [LogRecord("EnergyStatus", float(i), "ecg", c) for i, c in enumerate(costs)]
    for r in recs:
        repo.append(r)
    repo.close()
    assert read_run_logs(d, "rt")["EnergyStatus"] == recs
    assert log_path(d, "EnergyStatus", "rt").read_text() == serialize(recs, "EnergyStatus")


def test_event_round_trip(tmp_path):
    repo = KnowledgeRepository(tmp_path, "e")
    bus = Bus(TOPICS)
    repo.attach(bus)
    bus.publish("event", Event("ecg", "deactivate", 1.0))
    bus.publish("event", Event("ecg", "activate", 2.0))
    repo.close()
    assert [r.payload for r in read_log(log_path(tmp_path, "Event", "e"), "Event")] == ["deactivate", "activate"]


def test_reliability_formula_examples():
    ones = {c: 1.0 for c in COMPONENTS}
    assert eval_global_reliability(ones, COMPONENTS) == 1.0
    assert eval_global_reliability({**ones, "ecg": 0.0}, COMPONENTS) == 0.0
    mixed = {"centralhub": 0.95, **{c: 0.9 for c in COMPONENTS[1:]}}
    assert eval_global_reliability(mixed, COMPONENTS) == pytest.approx(0.95 * 0.9**6, rel=1e-15)
    assert eval_global_reliability(mixed, COMPONENTS) == pytest.approx(0.504868, abs=1e-6)


def test_cost_formula_examples():
    assert eval_global_cost({c: 0.0 for c in COMPONENTS}, COMPONENTS) == 0.0
    assert eval_global_cost({"centralhub": 0.2, "ecg": 0.3}, ["centralhub", "ecg"]) == pytest.approx(0.5)


def test_formula_only_reads_active_components():
    values = {"centralhub": 0.5, "ecg": 0.5}
    assert eval_global_reliability(values, ["centralhub"]) == 0.5
    with pytest.raises(FormulaError):
        eval_global_reliability(values, ["centralhub", "abps"])


def test_weighted_formulas():
    rel = formula_for("reliability", {"ecg": 2.0})
    assert rel({"ecg": 0.9, "abps": 0.5}, ["ecg", "abps"]) == pytest.approx(0.81 * 0.5)
    cost = formula_for("cost", {"ecg": 3.0})
    assert cost({"ecg": 1.0, "abps": 1.0}, ["ecg", "abps"]) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        formula_for("latency")


unit = st.floats(0, 1)


@given(st.lists(unit, min_size=1, max_size=7), st.integers(0, 6), unit)
def test_reliability_monotone_and_bounded(values, idx, bump):
    ids = [f"c{i}" for i in range(len(values))]
    base = dict(zip(ids, values))
    i = ids[idx % len(ids)]
    higher = {**base, i: max(base[i], bump)}
    g = eval_global_reliability(base, ids)
    assert 0.0 <= g <= 1.0
    assert eval_global_reliability(higher, ids) >= g


@given(st.lists(st.floats(0, 100), min_size=2, max_size=7))
def test_cost_monotone_in_active_set(costs):
    ids = [f"c{i}" for i in range(len(costs))]
    values = dict(zip(ids, costs))
    assert eval_global_cost(values, ids[:-1]) <= eval_global_cost(values, ids)


@given(st.lists(st.floats(0, 100), min_size=1, max_size=6), st.floats(0.01, 100))
def test_dropping_a_costly_component_strictly_lowers_cost(costs, extra):
    ids = [f"c{i}" for i in range(len(costs))] + ["gone"]
    values = {**dict(zip(ids, costs)), "gone": extra}
    assert eval_global_cost(values, ids[:-1]) < eval_global_cost(values, ids)
