import pytest

from microcarla.weather import (PRESETS, TEST_WEATHERS, TRAINING_WEATHERS,
                                WEATHER_NAMES, get_preset)


def test_fourteen_named_presets():
    assert len(WEATHER_NAMES) == 14
    assert len(set(WEATHER_NAMES)) == 14
    for name in WEATHER_NAMES:
        preset = get_preset(name)
        assert 0.0 < preset.friction <= 1.0
        assert preset.sensor_noise >= 0.0


def test_benchmark_weather_sets():
    assert TRAINING_WEATHERS == ["Clear Midday", "Clear Sunset",
                                 "Hard Rain Midday", "After Rain Noon"]
    assert TEST_WEATHERS == ["Cloudy Midday", "Soft Rain Sunset"]
    assert set(TRAINING_WEATHERS).isdisjoint(TEST_WEATHERS)
    assert set(TRAINING_WEATHERS + TEST_WEATHERS) <= set(WEATHER_NAMES)


def test_unknown_preset_raises():
    with pytest.raises(KeyError):
        get_preset("Plasma Storm")


def test_clear_is_dry_and_hard_rain_is_slick():
    assert PRESETS["Clear Midday"].friction == 1.0
    assert PRESETS["Clear Midday"].sensor_noise == 0.0
    assert PRESETS["Hard Rain Midday"].friction == pytest.approx(0.7)
    assert PRESETS["Hard Rain Midday"].sensor_noise == pytest.approx(0.1)
