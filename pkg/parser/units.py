# parser/units.py
"""
Unit suffixes accepted in run configurations and their SI conversions.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional

from scipy import constants

# Rates quoted relative to the spontaneous decay rate (gamma3) or times in
# units of 1/gamma3 are converted once gamma3 itself is known.
GAMMA3_UNIT = "gamma3"
INV_GAMMA3_UNIT = "inv_gamma3"


class Dimension(Enum):
    RATE = "angular rate"
    LENGTH = "length"
    TEMPERATURE = "temperature"
    MASS = "mass"
    AREA = "area"
    DENSITY = "number density"
    PRESSURE = "pressure"
    SPEED = "speed"
    TIME = "time"
    COUNT = "count"
    NUMBER = "dimensionless number"


@dataclass(frozen=True)
class Unit:
    dimension: Dimension
    to_si: Callable[[float, float], float]   # (value, gamma3) -> SI value


def _scaled(dimension: Dimension, factor: float) -> Unit:
    return Unit(dimension, lambda v, g: v * factor)


UNITS: Dict[str, Unit] = {}


def _register(dimension: Dimension, table: Dict[str, float]) -> None:
    for suffix, factor in table.items():
        UNITS[suffix] = _scaled(dimension, factor)


_register(Dimension.RATE, {
    "rad_s": 1.0,
    "Hz_x2pi": 2 * math.pi,
    "kHz_x2pi": 2 * math.pi * 1e3,
    "MHz_x2pi": 2 * math.pi * 1e6,
    "GHz_x2pi": 2 * math.pi * 1e9,
})
UNITS[GAMMA3_UNIT] = Unit(Dimension.RATE, lambda v, g: v * g)
_register(Dimension.LENGTH, {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "nm": 1e-9})
_register(Dimension.MASS, {"kg": 1.0, "u": constants.atomic_mass})
_register(Dimension.AREA, {"m2": 1.0, "cm2": 1e-4})
_register(Dimension.DENSITY, {"m-3": 1.0, "cm-3": 1e6})
_register(Dimension.PRESSURE, {"Pa": 1.0, "Torr": constants.torr, "mbar": 100.0})
_register(Dimension.SPEED, {"m_s": 1.0})
_register(Dimension.TIME, {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9})
UNITS[INV_GAMMA3_UNIT] = Unit(Dimension.TIME, lambda v, g: v / g)
_register(Dimension.COUNT, {"nodes": 1.0, "points": 1.0})
UNITS["K"] = Unit(Dimension.TEMPERATURE, lambda v, g: v)
UNITS["C"] = Unit(Dimension.TEMPERATURE, lambda v, g: v + constants.zero_Celsius)

# Suffix written back when a resolved value is serialized
SI_SUFFIX = {
    Dimension.RATE: "rad_s",
    Dimension.LENGTH: "m",
    Dimension.TEMPERATURE: "K",
    Dimension.MASS: "kg",
    Dimension.AREA: "m2",
    Dimension.DENSITY: "m-3",
    Dimension.PRESSURE: "Pa",
    Dimension.SPEED: "m_s",
    Dimension.TIME: "s",
    Dimension.COUNT: None,
    Dimension.NUMBER: None,
}


def suffixes_for(dimension: Dimension) -> str:
    names = [name for name, unit in UNITS.items() if unit.dimension is dimension]
    return ", ".join(names) if names else "no suffix"


def unit_dimension(suffix: str) -> Optional[Dimension]:
    unit = UNITS.get(suffix)
    return unit.dimension if unit else None


def to_si(value: float, suffix: Optional[str], dimension: Dimension, gamma3: float) -> float:
    """
    Convert `value suffix` to SI for a quantity of `dimension`.

    Raises:
        ValueError naming the expected dimension when the suffix is missing,
        unknown, or of another dimension
    """
    if dimension in (Dimension.COUNT, Dimension.NUMBER) and suffix is None:
        return value
    if suffix is None:
        raise ValueError(f"a unit suffix is required ({suffixes_for(dimension)})")
    unit = UNITS.get(suffix)
    if unit is None:
        raise ValueError(f"unknown unit '{suffix}'; expected {dimension.value} "
                         f"({suffixes_for(dimension)})")
    if unit.dimension is not dimension:
        raise ValueError(f"unit '{suffix}' is a {unit.dimension.value}; expected "
                         f"{dimension.value} ({suffixes_for(dimension)})")
    return unit.to_si(value, gamma3)


def format_si(value: float, dimension: Dimension) -> str:
    """Render an SI value with the suffix `to_si` reads back exactly."""
    suffix = SI_SUFFIX[dimension]
    if dimension is Dimension.COUNT:
        return str(int(value))
    text = repr(float(value))
    return f"{text} {suffix}" if suffix else text
