import pytest

from twostream.schedule import PRESETS, StepSchedule, TrainingComplete, lr_at, preset


def test_presets_match_published_values():
    assert preset("temporal") == StepSchedule(0.005, 0.1, 10_000, 30_000)
    assert preset("spatial") == StepSchedule(0.001, 0.1, 4_000, 10_000)


@pytest.mark.parametrize("stream,expected", [
    ("temporal", {0: 0.005, 9_999: 0.005, 10_000: 0.0005, 20_000: 0.00005, 29_999: 0.00005}),
    ("spatial", {0: 0.001, 3_999: 0.001, 4_000: 0.0001, 8_000: 0.00001, 9_999: 0.00001}),
])
def test_boundaries(stream, expected):
    s = preset(stream)
    for it, lr in expected.items():
        assert lr_at(s, it) == pytest.approx(lr, rel=1e-12)


@pytest.mark.parametrize("stream", ["temporal", "spatial"])
def test_stop_signals_completion(stream):
    s = preset(stream)
    lr_at(s, s.stop_iter - 1)
    with pytest.raises(TrainingComplete):
        lr_at(s, s.stop_iter)
    with pytest.raises(TrainingComplete):
        lr_at(s, s.stop_iter + 5)


def test_three_distinct_rates_each():
    for s in PRESETS.values():
        assert len({lr_at(s, i) for i in range(0, s.stop_iter, 1000)}) == 3 == s.num_rates


def test_monotone_non_increasing():
    s = StepSchedule(0.1, 0.5, 7, 50)
    rates = [lr_at(s, i) for i in range(50)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))


@pytest.mark.parametrize("args", [(0, 0.1, 10, 10), (0.1, 1.0, 10, 10), (0.1, 0.1, 0, 10), (0.1, 0.1, 10, -1)])
def test_invalid_schedules(args):
    with pytest.raises(ValueError):
        StepSchedule(*args)


def test_unknown_stream():
    with pytest.raises(ValueError):
        preset("audio")
