"""Weather presets and the two benchmark weather sets.

Weather in a top-down world has no visuals to change, so each preset carries
two physical proxies instead: a road-friction multiplier applied to
longitudinal acceleration, and the standard deviation of additive sensor
noise. These proxies are a documented extension, not part of the original
measurement catalog.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class WeatherPreset:
    name: str
    friction: float  # multiplier in (0, 1]
    sensor_noise: float  # Gaussian sigma, metres on depth readings


_TIERS = {
    "dry": (1.0, 0.0),
    "wet": (0.9, 0.02),
    "rain": (0.8, 0.05),
    "hard_rain": (0.7, 0.1),
}

# name -> physical tier
_PRESET_TIERS = [
    ("Clear Midday", "dry"),
    ("Clear Sunset", "dry"),
    ("Cloudy Midday", "dry"),
    ("Cloudy Sunset", "dry"),
    ("Soft Rain Midday", "rain"),
    ("Soft Rain Sunset", "rain"),
    ("Medium Rain Midday", "rain"),
    ("Cloudy After Rain Midday", "wet"),
    ("Cloudy After Rain Sunset", "wet"),
    ("Medium Rain Sunset", "rain"),
    ("Hard Rain Midday", "hard_rain"),
    ("Hard Rain Sunset", "hard_rain"),
    ("After Rain Noon", "wet"),
    ("After Rain Sunset", "wet"),
]

PRESETS: dict[str, WeatherPreset] = {
    name: WeatherPreset(name, *_TIERS[tier]) for name, tier in _PRESET_TIERS
}

WEATHER_NAMES: list[str] = [name for name, _ in _PRESET_TIERS]

TRAINING_WEATHERS: list[str] = [
    "Clear Midday",
    "Clear Sunset",
    "Hard Rain Midday",
    "After Rain Noon",
]

TEST_WEATHERS: list[str] = [
    "Cloudy Midday",
    "Soft Rain Sunset",
]

WEATHER_SETS: dict[str, list[str]] = {
    "training": TRAINING_WEATHERS,
    "test": TEST_WEATHERS,
}


def get_preset(name: str) -> WeatherPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown weather preset: {name!r}") from None
