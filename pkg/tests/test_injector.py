import random
import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sabsn.errors import ConfigError
from sabsn.injector import UncertaintyInjector, WaveformSpec, noise_at
from sabsn.messages import TOPICS
from sabsn.runtime import Engine


def test_step_edges():
    spec = WaveformSpec("ecg", "step", offset=0.0, amplitude=0.5, begin=10, duration=20)
    assert noise_at(5, spec) == 0.0
    assert noise_at(15, spec) == 0.5
    assert noise_at(31, spec) == 0.0


def test_ramp_midpoint():
    spec = WaveformSpec("ecg", "ramp", amplitude=1.0, begin=0, duration=10)
    assert noise_at(5, spec) == 0.5
    assert noise_at(10, spec) == 1.0


def test_zero_length_ramp_acts_as_step():
    spec = WaveformSpec("ecg", "ramp", amplitude=0.3, begin=4, duration=0)
    assert noise_at(4, spec) == 0.3


def test_random_mean_is_half_amplitude():
    spec = WaveformSpec("ecg", "random", amplitude=0.2, begin=0, duration=100)
    rng = random.Random(77)
    draws = [noise_at(1.0, spec, rng) for _ in range(10_000)]
    assert abs(statistics.fmean(draws) - 0.1) <= 0.005
    assert 0.0 <= min(draws) and max(draws) <= 0.2


def test_random_needs_rng():
    with pytest.raises(ValueError):
        noise_at(1.0, WaveformSpec("ecg", "random", begin=0))


@given(st.floats(-1, 1), st.floats(0, 1), st.floats(0, 50), st.floats(0, 50))
def test_step_is_piecewise_constant(offset, amplitude, begin, duration):
    spec = WaveformSpec("ecg", "step", offset, amplitude, 1.0, duration, begin)
    grid = [begin + duration * k / 20 for k in range(21)]
    assert {noise_at(t, spec) for t in grid} == {offset + amplitude}
    if begin > 0:
        assert noise_at(begin / 2, spec) == 0.0
    assert noise_at(begin + duration + 1, spec) == 0.0


@pytest.mark.parametrize("kwargs,path", [
    ({"kind": "square"}, "injector.waveforms.ecg.type"),
    ({"duration": -1}, "injector.waveforms.ecg.duration"),
    ({"frequency": 0}, "injector.waveforms.ecg.frequency"),
])
def test_spec_validation(kwargs, path):
    with pytest.raises(ConfigError) as exc:
        WaveformSpec("ecg", **kwargs)
    assert exc.value.path == path


def _injector(sensors, specs, freq=1.0):
    eng = Engine(seed=0, topics=TOPICS)
    seen = []
    eng.bus.subscribe("uncertainty", "probe", seen.append)
    inj = UncertaintyInjector(eng, freq, sensors, specs, eng.rng("injector"))
    eng.register(inj, "injector", freq)
    return eng, inj, seen


def test_empty_sensor_list_never_publishes():
    eng, _, seen = _injector([], {})
    eng.advance(1000)
    assert seen == []


def test_listed_sensor_without_waveform_is_rejected():
    with pytest.raises(ConfigError):
        _injector(["ecg"], {})


def test_only_configured_sensors_receive_noise():
    spec = WaveformSpec("ecg", "step", amplitude=0.2, begin=0, duration=100)
    eng, _, seen = _injector(["ecg"], {"ecg": spec, "abps": WaveformSpec("abps")})
    eng.advance(100)
    assert {m.sensor_id for m in seen} == {"ecg"}
    assert len(seen) == 10


def test_per_waveform_rate_capped_by_global_rate():
    slow = WaveformSpec("ecg", "step", frequency=0.5, begin=0, duration=100)
    fast = WaveformSpec("abps", "step", frequency=5.0, begin=0, duration=100)
    eng, _, seen = _injector(["ecg", "abps"], {"ecg": slow, "abps": fast}, freq=1.0)
    eng.advance(200)
    assert sum(m.sensor_id == "ecg" for m in seen) == 10
    assert sum(m.sensor_id == "abps" for m in seen) == 20
