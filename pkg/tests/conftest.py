import pytest
from hypothesis import settings

from sabsn.config import load_config
from sabsn.messages import TOPICS
from sabsn.runtime import Engine

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


class Counter:
    def __init__(self, node_id):
        self.id = node_id
        self.times = []

    def step(self, now):
        self.times.append(now)


@pytest.fixture
def engine():
    return Engine(seed=7, topics=TOPICS)


@pytest.fixture
def counter():
    return Counter


@pytest.fixture
def default_config():
    return load_config()


@pytest.fixture(scope="session")
def scenario_runs(tmp_path_factory):
    """Finished 540 s simulations keyed by scenario tuple, run on first use."""
    from sabsn.simulation import Simulation

    root = tmp_path_factory.mktemp("runs")
    cache = {}

    def get(*scenarios, duration=540.0):
        key = (scenarios, duration)
        if key not in cache:
            cfg = load_config(scenarios=scenarios)
            sim = Simulation(cfg, out_dir=root, run_id="_".join(scenarios) or "base")
            sim.run(duration)
            cache[key] = sim
        return cache[key]

    return get


CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for an acceptance criterion based on the test outcome."""
    def declare(number: int, text: str):
        request.node._criterion = (number, text)
    yield declare
    number, text = getattr(request.node, "_criterion", (None, None))
    if number is None:
        return
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {text}"
    CRITERIA[number] = line
    print(line)


@pytest.hookimpl(hookwrapper=True, tryfirst=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
