# engine/rates.py
"""
Collisional transfer rates, wall relaxation and thermal speeds.

Inputs are SI (m, K, kg, m², m⁻³); rate outputs are angular rates in rad/s.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from engine.core import K_B, MASS_H2, MASS_RB85
from engine.errors import ParameterError

logger = logging.getLogger(__name__)

# Plausible magnitude of a collisional cross-section; values outside are
# usually cm² entered as m² (or the reverse).
SIGMA_BAND = (1e-22, 1e-17)

# Rb(5P1/2) -> Rb(5P3/2) transfer by H2: (sigma1, sigma2, T). The 1720 K row
# is a lower bound.
CROSS_SECTION_PRESETS: Dict[str, Tuple[float, float, float]] = {
    "h2_330K": (10.0e-20, 13.9e-20, 330.0),
    "h2_340K": (11.0e-20, 15.0e-20, 340.0),
    "h2_1720K": (50.0e-20, 30.0e-20, 1720.0),
}
DEFAULT_CROSS_SECTION = "h2_330K"

ATOMIC_DENSITY_PRESETS: Dict[str, float] = {
    "rb_150C": 3.5e19,
    "rb_250C": 3.05e20,
}


def _require_positive(field_name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ParameterError(field_name, "must be a finite number > 0", value)


def cross_section_in_band(sigma: float) -> bool:
    return SIGMA_BAND[0] <= sigma <= SIGMA_BAND[1]


@dataclass(frozen=True)
class BufferGasSpec:
    """Buffer gas transferring atoms between |3⟩ and |4⟩."""
    number_density: float
    sigma1: float                 # |3⟩ -> |4⟩, m²
    sigma2: float                 # |4⟩ -> |3⟩, m²
    molecule_mass: float = MASS_H2

    def __post_init__(self):
        for name in ("number_density", "sigma1", "sigma2", "molecule_mass"):
            _require_positive(name, getattr(self, name))
        for name in ("sigma1", "sigma2"):
            sigma = getattr(self, name)
            if not cross_section_in_band(sigma):
                logger.warning(f"{name} = {sigma:.3e} m² is outside the expected band "
                               f"[{SIGMA_BAND[0]:.0e}, {SIGMA_BAND[1]:.0e}] m²; "
                               f"was a value in cm² entered as m²?")

    @classmethod
    def from_preset(cls, number_density: float, name: str = DEFAULT_CROSS_SECTION,
                    molecule_mass: float = MASS_H2) -> "BufferGasSpec":
        sigma1, sigma2, _ = cross_section_preset(name)
        return cls(number_density, sigma1, sigma2, molecule_mass)


@dataclass(frozen=True)
class CellSpec:
    """Rectangular vapour cell; thickness is the short axis."""
    length: float
    width: float
    thickness: float
    temperature: float
    atom_mass: float = MASS_RB85

    def __post_init__(self):
        for name in ("length", "width", "thickness", "temperature", "atom_mass"):
            _require_positive(name, getattr(self, name))

    @property
    def surface(self) -> float:
        return 2 * (self.length * self.width + self.length * self.thickness
                    + self.width * self.thickness)

    @property
    def volume(self) -> float:
        return self.length * self.width * self.thickness


# === Kinematics ===

def reduced_mass(m_a: float, m_b: float) -> float:
    _require_positive("m_a", m_a)
    _require_positive("m_b", m_b)
    return m_a * m_b / (m_a + m_b)


def mean_relative_speed(temperature: float, mu: float) -> float:
    """Mean relative speed sqrt(8 k_B T / (π μ)) of a thermal pair."""
    _require_positive("temperature", temperature)
    _require_positive("mu", mu)
    return math.sqrt(8 * K_B * temperature / (math.pi * mu))


def mean_speed(temperature: float, mass: float) -> float:
    """Mean thermal speed v̄ of a single species."""
    return mean_relative_speed(temperature, mass)


def most_probable_speed(temperature: float, mass: float) -> float:
    """Most probable speed u = sqrt(2 k_B T / m) of the Maxwell distribution."""
    _require_positive("temperature", temperature)
    _require_positive("mass", mass)
    return math.sqrt(2 * K_B * temperature / mass)


def number_density_from_pressure(pressure: float, temperature: float) -> float:
    """Ideal gas n = P / (k_B T), in m⁻³."""
    _require_positive("pressure", pressure)
    _require_positive("temperature", temperature)
    return pressure / (K_B * temperature)


# === Rates ===

def collisional_transfer_rates(gas: BufferGasSpec, temperature: float,
                               atom_mass: float = MASS_RB85) -> Tuple[float, float]:
    """
    Transfer rates between the excited states:

        r34 = n·σ1·v_av,  r43 = n·σ2·v_av

    with v_av the mean relative speed of the atom–molecule pair.
    """
    mu = reduced_mass(atom_mass, gas.molecule_mass)
    v_av = mean_relative_speed(temperature, mu)
    return gas.number_density * gas.sigma1 * v_av, gas.number_density * gas.sigma2 * v_av


def wall_relaxation(cell: CellSpec, include_two_pi: bool = True) -> float:
    """
    Ground-state relaxation from ballistic wall collisions,
    W12 = 2π·v̄·S/(4V).

    Args:
        cell: cell geometry and temperature
        include_two_pi: keep the 2π factor converting 1/T1 to an angular rate

    Returns:
        W12 in rad/s
    """
    v_bar = mean_speed(cell.temperature, cell.atom_mass)
    rate = v_bar * cell.surface / (4 * cell.volume)
    return 2 * math.pi * rate if include_two_pi else rate


def cross_section_preset(name: str = DEFAULT_CROSS_SECTION) -> Tuple[float, float, float]:
    """(sigma1 m², sigma2 m², temperature K) of a tabulated H2 row."""
    if name not in CROSS_SECTION_PRESETS:
        raise ParameterError("cross_section", f"unknown preset '{name}'. "
                             f"Available: {', '.join(sorted(CROSS_SECTION_PRESETS))}", name)
    return CROSS_SECTION_PRESETS[name]


def atomic_density_preset(name: str) -> float:
    if name not in ATOMIC_DENSITY_PRESETS:
        raise ParameterError("number_density", f"unknown atomic density preset '{name}'. "
                             f"Available: {', '.join(sorted(ATOMIC_DENSITY_PRESETS))}", name)
    return ATOMIC_DENSITY_PRESETS[name]


@dataclass(frozen=True)
class RateSummary:
    """Every rate and speed derived from a cell and a buffer gas."""
    w12: Optional[float] = None
    r34: Optional[float] = None
    r43: Optional[float] = None
    u: Optional[float] = None
    v_bar: Optional[float] = None
    v_av: Optional[float] = None
    mu: Optional[float] = None

    def as_rows(self):
        """(label, value, unit) rows for display; unset entries skipped."""
        units = {"w12": "rad/s", "r34": "rad/s", "r43": "rad/s", "u": "m/s",
                 "v_bar": "m/s", "v_av": "m/s", "mu": "kg"}
        return [(name, getattr(self, name), unit) for name, unit in units.items()
                if getattr(self, name) is not None]

    def to_dict(self) -> Dict[str, float]:
        return {name: value for name, value, _ in self.as_rows()}


def resolve_rates(cell: Optional[CellSpec] = None, gas: Optional[BufferGasSpec] = None,
                  include_two_pi: bool = True,
                  gas_temperature: Optional[float] = None) -> RateSummary:
    """
    Derive W12 from the cell and r34, r43 from the buffer gas.

    The collision temperature is the cell temperature unless
    `gas_temperature` is given; without a cell it must be given.
    """
    values: Dict[str, float] = {}
    atom_mass = cell.atom_mass if cell is not None else MASS_RB85
    if cell is not None:
        values["w12"] = wall_relaxation(cell, include_two_pi)
        values["u"] = most_probable_speed(cell.temperature, cell.atom_mass)
        values["v_bar"] = mean_speed(cell.temperature, cell.atom_mass)
    if gas is not None:
        temperature = gas_temperature if gas_temperature is not None else (
            cell.temperature if cell is not None else None)
        if temperature is None:
            raise ParameterError("temperature", "buffer-gas rates need a temperature")
        mu = reduced_mass(atom_mass, gas.molecule_mass)
        values["mu"] = mu
        values["v_av"] = mean_relative_speed(temperature, mu)
        values["r34"], values["r43"] = collisional_transfer_rates(gas, temperature, atom_mass)
    summary = RateSummary(**values)
    logger.debug(f"resolved rates: {summary.to_dict()}")
    return summary
