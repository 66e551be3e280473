"""Geometry configuration: axis ranges, speeds and stop constants."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

AXES = ("press", "arm1", "arm2", "robot", "table_rot", "table_elev", "crane_x", "crane_y")

# Stops whose names each axis must define.
AXIS_STOPS = {
    "press": ("bottom", "middle", "top"),
    "arm1": ("retracted", "table", "press"),
    "arm2": ("retracted", "press", "deposit"),
    "robot": ("table", "press", "deposit"),
    "table_rot": ("load", "transfer"),
    "table_elev": ("bottom", "top"),
    "crane_x": ("deposit", "feed"),
    "crane_y": ("pick", "travel"),
}

# Axes read through a real-valued sensor (s4, s5, s6, s11, s12).
REAL_SENSOR_AXES = ("arm1", "arm2", "robot", "crane_y", "table_elev")

MIN_STOP_GAP = 0.02


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    speed: float
    initial: float
    stops: dict[str, float] = field(default_factory=dict)

    def __getitem__(self, stop: str) -> float:
        return self.stops[stop]


@dataclass(frozen=True)
class Belt:
    length: float
    speed: float


@dataclass(frozen=True)
class GeometryConfig:
    axes: dict[str, Axis]
    belt1: Belt
    belt2: Belt
    blank_length: float
    blank_spacing: float
    blank_count: int

    def __getattr__(self, name: str) -> Axis:
        axes = self.__dict__.get("axes", {})
        if name in axes:
            return axes[name]
        raise AttributeError(name)

    def significant_values(self) -> set[float]:
        """Distinct stop values observable on the five real sensors."""
        return {v for a in REAL_SENSOR_AXES for v in self.axes[a].stops.values()}

    def validate(self) -> None:
        for a in self.axes.values():
            if not a.min <= a.initial <= a.max:
                raise ConfigError(f"{a.name}.initial outside range")
            if not 0 < a.speed <= MIN_STOP_GAP:
                raise ConfigError(f"{a.name}.speed must be in (0, {MIN_STOP_GAP}]")
            values = sorted(a.stops.values())
            for v in values:
                if not a.min < v < a.max:
                    raise ConfigError(f"{a.name} stop {v} outside ({a.min}, {a.max})")
            for lo, hi in zip(values, values[1:]):
                if hi - lo <= MIN_STOP_GAP:
                    raise ConfigError(f"{a.name} stops {lo} and {hi} closer than {MIN_STOP_GAP}")
        for b in (self.belt1, self.belt2):
            if b.speed >= self.blank_length:
                raise ConfigError("belt speed must be below the blank length")
        if self.blank_spacing <= self.blank_length:
            raise ConfigError("blank spacing must exceed blank length")


def parse_config(text: str) -> dict[str, float]:
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = number'")
        try:
            values[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: {value.strip()!r} is not a number") from None
    return values


def default_text() -> str:
    return resources.files("prodcell").joinpath("default_geometry.cfg").read_text()


def load_geometry(path: str | Path | None = None, overrides: dict[str, float] | None = None
                  ) -> GeometryConfig:
    """Load the shipped defaults, then a config file, then explicit overrides."""
    values = parse_config(default_text())
    if path is not None:
        values.update(parse_config(Path(path).read_text()))
    if overrides:
        values.update(overrides)
    return build_geometry(values)


def build_geometry(values: dict[str, float]) -> GeometryConfig:
    known = set()

    def get(key: str) -> float:
        known.add(key)
        try:
            return values[key]
        except KeyError:
            raise ConfigError(f"missing key {key}") from None

    axes = {}
    for name in AXES:
        stops = {s: get(f"{name}.{s}") for s in AXIS_STOPS[name]}
        axes[name] = Axis(name, get(f"{name}.min"), get(f"{name}.max"),
                          get(f"{name}.speed"), get(f"{name}.initial"), stops)
    geo = GeometryConfig(
        axes=axes,
        belt1=Belt(get("belt1.length"), get("belt1.speed")),
        belt2=Belt(get("belt2.length"), get("belt2.speed")),
        blank_length=get("blank.length"),
        blank_spacing=get("blank.spacing"),
        blank_count=int(get("blank.count")),
    )
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    geo.validate()
    return geo
