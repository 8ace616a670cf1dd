# engine/core.py
"""
Physical parameter and density-matrix data model shared by every solver.

All rates, Rabi frequencies and detunings are angular rates (rad/s).
Values quoted as "2π·5.75 MHz" convert at the boundary with `two_pi_mhz`.
"""

import logging
import math
import numbers
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import constants

from engine.errors import ParameterError

logger = logging.getLogger(__name__)

# === Physical constants (SI) ===
K_B = constants.k
ATOMIC_MASS = constants.atomic_mass

MASS_RB85 = 84.911789738 * ATOMIC_MASS
MASS_RB87 = 86.909180527 * ATOMIC_MASS
MASS_H2 = 2.01588 * ATOMIC_MASS

LAMBDA_D1 = 794.979e-9   # 5S1/2 -> 5P1/2, probe
LAMBDA_D2 = 780.241e-9   # 5S1/2 -> 5P3/2, pump

GAMMA_D1 = 2 * math.pi * 5.75e6

N_LEVELS = 4

# Tolerances of the DensityMatrix invariants
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-9
POPULATION_TOL = 1e-9


def two_pi_mhz(value: float) -> float:
    """Convert a frequency in MHz to an angular rate in rad/s."""
    return 2 * math.pi * value * 1e6


# === Parameters ===

RATE_FIELDS = ("omega_pr", "omega_pu", "delta_hfs", "gamma3", "gamma4",
               "w12", "r34", "r43", "gamma_laser")


@dataclass(frozen=True)
class SystemParams:
    """One physical configuration of the four-level system."""
    omega_pr: float = 0.0
    omega_pu: float = 0.0
    delta_pr: float = 0.0
    delta_pu: float = 0.0
    delta_hfs: float = 0.0
    gamma3: float = GAMMA_D1
    gamma4: Optional[float] = None   # defaults to gamma3
    w12: float = 0.0
    r34: float = 0.0
    r43: float = 0.0
    lambda_pr: float = LAMBDA_D1
    lambda_pu: float = LAMBDA_D2
    u: float = 0.0
    gamma_laser: float = 0.0

    def __post_init__(self):
        if self.gamma4 is None:
            object.__setattr__(self, "gamma4", self.gamma3)

    @property
    def r_mean(self) -> float:
        """The single transfer rate R of the coherence equations."""
        return 0.5 * (self.r34 + self.r43)

    @property
    def k_pr(self) -> float:
        return 2 * math.pi / self.lambda_pr

    @property
    def k_pu(self) -> float:
        return 2 * math.pi / self.lambda_pu

    def replace(self, **changes: Any) -> "SystemParams":
        """Copy with changed fields; gamma4 follows gamma3 only if it did before."""
        if "gamma3" in changes and "gamma4" not in changes and self.gamma4 == self.gamma3:
            changes["gamma4"] = None
        return validate(replace(self, **changes))

    def to_dict(self) -> Dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> "SystemParams":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParameterError(unknown[0], "unknown SystemParams field")
        return validate(cls(**data))


def validate(params: SystemParams) -> SystemParams:
    """
    Check every SystemParams invariant and return the params unchanged.

    Raises:
        ParameterError naming the first violated field
    """
    for f in fields(params):
        value = getattr(params, f.name)
        if not isinstance(value, numbers.Real) or not math.isfinite(value):
            raise ParameterError(f.name, "must be a finite number", value)
        if f.name in RATE_FIELDS and value < 0:
            raise ParameterError(f.name, "must be >= 0", value)
        if f.name in ("lambda_pr", "lambda_pu") and value <= 0:
            raise ParameterError(f.name, "wavelength must be > 0", value)
        if f.name == "u" and value < 0:
            raise ParameterError(f.name, "most probable speed must be >= 0", value)
    return params


@dataclass(frozen=True)
class SpectrumParams:
    """Medium and grid parameters of a probe spectrum."""
    number_density: float
    path_length: float
    detuning_grid: Sequence[float]
    quadrature_nodes: int = 64
    literal_integral: bool = False

    def __post_init__(self):
        object.__setattr__(self, "detuning_grid", tuple(float(d) for d in self.detuning_grid))
        if not (math.isfinite(self.number_density) and self.number_density > 0):
            raise ParameterError("number_density", "must be > 0", self.number_density)
        if not (math.isfinite(self.path_length) and self.path_length > 0):
            raise ParameterError("path_length", "must be > 0", self.path_length)
        grid = np.asarray(self.detuning_grid)
        if grid.size == 0 or not np.all(np.isfinite(grid)):
            raise ParameterError("detuning_grid", "must be a non-empty list of finite detunings")
        if np.any(np.diff(grid) <= 0):
            raise ParameterError("detuning_grid", "must be strictly increasing")
        if int(self.quadrature_nodes) != self.quadrature_nodes or self.quadrature_nodes < 8:
            raise ParameterError("quadrature_nodes", "must be an integer >= 8", self.quadrature_nodes)

    @classmethod
    def uniform_grid(cls, number_density: float, path_length: float,
                     detuning_min: float, detuning_max: float, points: int,
                     quadrature_nodes: int = 64, **kwargs: Any) -> "SpectrumParams":
        if points < 1:
            raise ParameterError("points", "must be >= 1", points)
        grid = np.linspace(detuning_min, detuning_max, int(points)) if points > 1 else [detuning_min]
        return cls(number_density, path_length, tuple(grid), quadrature_nodes, **kwargs)

    @property
    def prefactor_scale(self) -> float:
        """N·L, the part of the susceptibility prefactor owned by the medium."""
        return self.number_density * self.path_length

    def with_medium(self, number_density: Optional[float] = None,
                    path_length: Optional[float] = None) -> "SpectrumParams":
        return replace(self,
                       number_density=self.number_density if number_density is None else number_density,
                       path_length=self.path_length if path_length is None else path_length)

    @property
    def is_uniform(self) -> bool:
        grid = np.asarray(self.detuning_grid)
        if grid.size < 3:
            return True
        even = np.linspace(grid[0], grid[-1], grid.size)
        return bool(np.allclose(grid, even, rtol=0.0, atol=1e-12 * (grid[-1] - grid[0])))

    def to_dict(self) -> Dict[str, Any]:
        """Snapshot for result metadata; a non-uniform grid is stored point by point."""
        snapshot = {
            "number_density": self.number_density,
            "path_length": self.path_length,
            "detuning_min": self.detuning_grid[0],
            "detuning_max": self.detuning_grid[-1],
            "points": len(self.detuning_grid),
            "quadrature_nodes": int(self.quadrature_nodes),
            "literal_integral": self.literal_integral,
        }
        if not self.is_uniform:
            snapshot["detuning_grid"] = list(self.detuning_grid)
        return snapshot


# === Density matrix ===

def check_density_matrix(rho: np.ndarray, hermitian_tol: float = HERMITIAN_TOL,
                         trace_tol: float = TRACE_TOL,
                         population_tol: float = POPULATION_TOL) -> List[str]:
    """
    Return every violated DensityMatrix invariant (empty when valid).
    Single pass over the 16 entries; never modifies `rho`.
    """
    problems: List[str] = []
    rho = np.asarray(rho)
    if rho.shape != (N_LEVELS, N_LEVELS):
        return [f"shape {rho.shape} is not (4, 4)"]
    trace = 0.0 + 0.0j
    for i in range(N_LEVELS):
        for j in range(N_LEVELS):
            value = rho[i, j]
            if not np.isfinite(value):
                problems.append(f"rho[{i + 1}{j + 1}] is not finite")
                continue
            if i == j:
                trace += value
                if abs(value.imag) > hermitian_tol:
                    problems.append(f"rho[{i + 1}{i + 1}] has imaginary part {value.imag:.3e}")
                if not -population_tol <= value.real <= 1 + population_tol:
                    problems.append(f"rho[{i + 1}{i + 1}] = {value.real:.6g} outside [0, 1]")
            elif j > i and abs(value - np.conj(rho[j, i])) > hermitian_tol:
                problems.append(f"rho[{i + 1}{j + 1}] != conj(rho[{j + 1}{i + 1}])")
    if abs(trace - 1) > trace_tol:
        problems.append(f"trace {trace.real:.12g} differs from 1")
    return problems


@dataclass(frozen=True)
class DensityMatrix:
    """4×4 Hermitian, unit-trace density matrix over |1⟩..|4⟩."""
    rho: np.ndarray = field(repr=False)

    def __post_init__(self):
        array = np.array(self.rho, dtype=complex)
        array.setflags(write=False)
        object.__setattr__(self, "rho", array)

    @classmethod
    def checked(cls, rho: np.ndarray, tolerance_scale: float = 1.0) -> "DensityMatrix":
        """Build and verify the invariants, raising ParameterError on failure."""
        problems = check_density_matrix(rho, HERMITIAN_TOL * tolerance_scale,
                                        TRACE_TOL * tolerance_scale,
                                        POPULATION_TOL * tolerance_scale)
        if problems:
            raise ParameterError("rho", "; ".join(problems))
        return cls(rho)

    @classmethod
    def thermal_ground(cls) -> "DensityMatrix":
        """diag(1/2, 1/2, 0, 0): ground states equally populated."""
        return cls(np.diag([0.5, 0.5, 0.0, 0.0]).astype(complex))

    @classmethod
    def pure_level(cls, level: int) -> "DensityMatrix":
        rho = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
        rho[level - 1, level - 1] = 1.0
        return cls(rho)

    def element(self, i: int, j: int) -> complex:
        """ρ_ij with 1-based level labels."""
        return complex(self.rho[i - 1, j - 1])

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.rho)).copy()

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)))

    @property
    def inversion_31(self) -> float:
        """ρ33 − ρ11, the probe-transition population difference."""
        return float(np.real(self.rho[2, 2] - self.rho[0, 0]))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def is_valid(self) -> bool:
        return not check_density_matrix(self.rho)

