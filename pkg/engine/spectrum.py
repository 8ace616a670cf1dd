# engine/spectrum.py
"""
Probe susceptibility, Doppler averaging and transmission spectra.

Sign convention: χ < 0 is absorption, χ > 0 is gain; T = exp(G).
Both beams copropagate, so an atom with velocity v sees
Δ_pr − k_pr·v and Δ_pu − k_pu·v.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import roots_hermite, roots_legendre

from engine.core import SpectrumParams, SystemParams, validate
from engine.errors import ParameterError, QuadratureError, SimulationError, SpectrumGridError
from engine.liouville import (GeneratorMode, build_liouvillian, coherence_eq4, shifted_generators,
                              steady_state, steady_state_batch)

logger = logging.getLogger(__name__)

CONVERGENCE_RTOL = 1e-6
# Round-off floor of the convergence test, as a precision on Im(ρ13)
IM_RHO13_FLOOR = 1e-15
MAX_NODES = 1024
# Narrowest velocity feature, in units of u, left to the Gauss–Hermite rule
HERMITE_MIN_WIDTH = 0.5
PANEL_ORDER = 10
PANEL_WIDTH = 1.0          # fine panels, in feature half-widths
COARSE_PANEL = 0.5         # widest panel, in units of u
VELOCITY_SPAN = 6.0        # exp(−36) ≈ 2e-16
RESONANCE_MARGIN = 10.0    # half-widths beyond the Rabi splitting kept on fine panels
MAX_REFINEMENTS = 3
BATCH_SIZE = 4096
TRAPEZOID_POINTS = 2001
TRAPEZOID_SPAN = 5.0


# === Susceptibility ===

def prefactor(params: SystemParams, sp: SpectrumParams) -> float:
    """3·λ_pr²·N·L·γ3 / (4π·Ω_pr), the factor in front of Im(ρ13)."""
    if not params.omega_pr > 0:
        raise ParameterError("omega_pr", "the probe Rabi frequency must be > 0 for a susceptibility",
                             params.omega_pr)
    return 3 * params.lambda_pr ** 2 * sp.prefactor_scale * params.gamma3 / (4 * math.pi * params.omega_pr)


def doppler_shifted(params: SystemParams, delta_pr: float, v: float) -> SystemParams:
    return params.replace(delta_pr=delta_pr - params.k_pr * v,
                          delta_pu=params.delta_pu - params.k_pu * v)


def susceptibility_at(params: SystemParams, sp: SpectrumParams, delta_pr: float, v: float) -> float:
    """χ for one velocity class, from the full steady state."""
    scale = prefactor(params, sp)
    rho = steady_state(build_liouvillian(doppler_shifted(params, delta_pr, v)))
    return scale * float(np.imag(rho.rho[0, 2]))


def susceptibility_batch(params: SystemParams, sp: SpectrumParams, delta_pr: float,
                         velocities: Sequence[float]) -> np.ndarray:
    """χ for many velocity classes with one stacked steady-state solve."""
    scale = prefactor(params, sp)
    velocities = np.asarray(velocities, dtype=float)
    chi = np.empty(len(velocities))
    for start in range(0, len(velocities), BATCH_SIZE):
        chunk = velocities[start:start + BATCH_SIZE]
        generators = shifted_generators(params,
                                        delta_pr - params.k_pr * chunk,
                                        params.delta_pu - params.k_pu * chunk)
        chi[start:start + BATCH_SIZE] = np.imag(steady_state_batch(generators)[:, 0, 2])
    return scale * chi


def closed_form_susceptibility(params: SystemParams, sp: SpectrumParams, delta_pr: float, v: float,
                               strict_literal: bool = False) -> float:
    """
    χ from the Lorentzian-weighted closed form, using the stationary
    ρ43, ρ33 and ρ11:

        Im ρ13 = Im[2i(Ω_pu·ρ43 + Ω_pr(ρ33 − ρ11)) / (D + 2iΔ)],
        D = R + W12 + γ3

    strict_literal=True replaces ρ43 by Re(ρ43) and evaluates
    2D/(D² + 4Δ²)·(Ω_pu·Re ρ43 + Ω_pr(ρ33 − ρ11)).
    """
    scale = prefactor(params, sp)
    shifted = doppler_shifted(params, delta_pr, v)
    rho = steady_state(build_liouvillian(shifted))
    if not strict_literal:
        return scale * coherence_eq4(rho, shifted).imag

    width = shifted.r_mean + shifted.w12 + shifted.gamma3 + 2 * shifted.gamma_laser
    lorentzian = 2 * width / (width ** 2 + (2 * shifted.delta_pr) ** 2)
    drive = (shifted.omega_pu * rho.rho[3, 2].real
             + shifted.omega_pr * (rho.rho[2, 2].real - rho.rho[0, 0].real))
    return scale * lorentzian * drive


# === Velocity averaging ===
#
# χ is averaged over exp(−x²)/√π with x = v/u. Gauss–Hermite handles
# distributions narrow against the optical linewidth; hot vapour goes to a
# composite Gauss–Legendre rule with narrow panels over the probe and pump
# resonances.

@lru_cache(maxsize=16)
def _hermite_rule(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = roots_hermite(nodes)
    return x, w / math.sqrt(math.pi)


@lru_cache(maxsize=4)
def _legendre_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    return roots_legendre(order)


@dataclass
class QuadratureEstimate:
    """Doppler-averaged gain at one detuning and how it was obtained."""
    value: float
    nodes: int
    converged: bool
    warning: Optional[str] = None
    rule: str = "hermite"


def coherence_half_width(params: SystemParams) -> float:
    """Narrowest optical-coherence half-width (rad/s); no velocity feature is sharper."""
    return 0.5 * (params.r_mean + params.w12 + min(params.gamma3, params.gamma4)) + params.gamma_laser


def feature_width(params: SystemParams) -> float:
    """coherence_half_width as a velocity width, in units of u."""
    return coherence_half_width(params) / (max(params.k_pr, params.k_pu) * params.u)


def panel_edges(params: SystemParams, delta_pr: float) -> np.ndarray:
    """
    Panel boundaries on |x| ≤ VELOCITY_SPAN.

    Around the probe resonance x = Δ_pr/(k_pr·u) and the pump resonance
    x = Δ_pu/(k_pu·u), out to twice the Rabi frequencies plus a margin,
    panels are PANEL_WIDTH feature half-widths wide. Outside those windows
    they double in width with every step until COARSE_PANEL.
    """
    u = params.u
    half_width = coherence_half_width(params)
    if not half_width > 0:
        raise QuadratureError("optical coherences are undamped: velocity features have zero width",
                              delta_pr=delta_pr)
    fine = min(PANEL_WIDTH * feature_width(params), COARSE_PANEL)
    reach = ((2 * (params.omega_pu + params.omega_pr) + RESONANCE_MARGIN * half_width)
             / (min(params.k_pr, params.k_pu) * u))
    steps = fine * 2.0 ** np.arange(int(math.ceil(math.log2(COARSE_PANEL / fine))) + 1)
    offsets = np.cumsum(steps)

    pieces = [np.linspace(-VELOCITY_SPAN, VELOCITY_SPAN, int(round(2 * VELOCITY_SPAN / COARSE_PANEL)) + 1)]
    for centre in (delta_pr / (params.k_pr * u), params.delta_pu / (params.k_pu * u)):
        low, high = max(centre - reach, -VELOCITY_SPAN), min(centre + reach, VELOCITY_SPAN)
        if high <= low:
            continue
        pieces += [np.linspace(low, high, int(math.ceil((high - low) / fine)) + 1),
                   low - offsets, high + offsets]
    edges = np.unique(np.concatenate(pieces))
    return edges[(edges >= -VELOCITY_SPAN) & (edges <= VELOCITY_SPAN)]


def split_panels(edges: np.ndarray) -> np.ndarray:
    """Halve every panel."""
    midpoints = 0.5 * (edges[1:] + edges[:-1])
    return np.sort(np.concatenate([edges, midpoints]))


def _panel_rule(edges: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    t, w = _legendre_rule(PANEL_ORDER)
    centres = 0.5 * (edges[1:] + edges[:-1])
    halves = 0.5 * np.diff(edges)
    x = (centres[:, None] + halves[:, None] * t[None, :]).ravel()
    weights = (halves[:, None] * w[None, :]).ravel() * np.exp(-x ** 2) / math.sqrt(math.pi)
    return x, weights


def _weighted_sum(params: SystemParams, sp: SpectrumParams, delta_pr: float,
                  x: np.ndarray, weights: np.ndarray) -> float:
    chi = susceptibility_batch(params, sp, delta_pr, params.u * x)
    value = float(np.dot(weights, chi))
    if not math.isfinite(value):
        raise QuadratureError(f"non-finite quadrature sum at Δ_pr = {delta_pr:.6e} rad/s "
                              f"with {len(x)} nodes", delta_pr=delta_pr, nodes=len(x))
    return value


def _agrees(current: float, refined: float, floor: float) -> bool:
    return abs(refined - current) <= CONVERGENCE_RTOL * abs(refined) + floor


def _hermite_estimate(params: SystemParams, sp: SpectrumParams, delta_pr: float,
                      floor: float) -> QuadratureEstimate:
    nodes = int(sp.quadrature_nodes)
    current = _weighted_sum(params, sp, delta_pr, *_hermite_rule(nodes))
    while 2 * nodes <= MAX_NODES:
        refined = _weighted_sum(params, sp, delta_pr, *_hermite_rule(2 * nodes))
        if _agrees(current, refined, floor):
            return QuadratureEstimate(current, nodes, True)
        logger.debug(f"Δ_pr = {delta_pr:.4e}: {nodes} -> {2 * nodes} Hermite nodes "
                     f"(change {abs(refined - current):.3e})")
        nodes, current = 2 * nodes, refined
    warning = f"quadrature not converged at Δ_pr = {delta_pr:.6e} rad/s after {nodes} nodes"
    return QuadratureEstimate(current, nodes, False, warning)


def _panel_estimate(params: SystemParams, sp: SpectrumParams, delta_pr: float,
                    floor: float) -> QuadratureEstimate:
    edges = panel_edges(params, delta_pr)
    current = _weighted_sum(params, sp, delta_pr, *_panel_rule(edges))
    for _ in range(MAX_REFINEMENTS):
        finer = split_panels(edges)
        refined = _weighted_sum(params, sp, delta_pr, *_panel_rule(finer))
        if _agrees(current, refined, floor):
            return QuadratureEstimate(current, (len(edges) - 1) * PANEL_ORDER, True, rule="panels")
        logger.debug(f"Δ_pr = {delta_pr:.4e}: {len(edges) - 1} -> {len(finer) - 1} panels "
                     f"(change {abs(refined - current):.3e})")
        edges, current = finer, refined
    nodes = (len(edges) - 1) * PANEL_ORDER
    warning = f"quadrature not converged at Δ_pr = {delta_pr:.6e} rad/s after {nodes} nodes"
    return QuadratureEstimate(current, nodes, False, warning, rule="panels")


def quadrature_estimate(params: SystemParams, sp: SpectrumParams, delta_pr: float) -> QuadratureEstimate:
    """
    Average of χ over the Maxwell distribution, checked by doubling the
    node count until two successive sums agree to 1e-6 relative.

    Gauss–Hermite with sp.quadrature_nodes nodes (doubling up to 1024) is
    used when the narrowest velocity feature is at least
    HERMITE_MIN_WIDTH·u wide; otherwise the composite panel rule, whose
    panels are halved up to MAX_REFINEMENTS times. Running out of
    refinements gives a warning, never an error.
    """
    params = validate(params)
    literal = math.sqrt(math.pi) * params.u if sp.literal_integral else 1.0
    if params.u == 0:
        value = susceptibility_at(params, sp, delta_pr, 0.0)
        return QuadratureEstimate(value * literal, 1, True)

    floor = IM_RHO13_FLOOR * abs(prefactor(params, sp))
    if feature_width(params) >= HERMITE_MIN_WIDTH:
        estimate = _hermite_estimate(params, sp, delta_pr, floor)
    else:
        estimate = _panel_estimate(params, sp, delta_pr, floor)
    if estimate.warning:
        logger.warning(estimate.warning)
    estimate.value *= literal
    return estimate


def doppler_average(params: SystemParams, sp: SpectrumParams, delta_pr: float) -> float:
    """Doppler-averaged gain G(Δ_pr), normalised so G is a weighted mean of χ."""
    return quadrature_estimate(params, sp, delta_pr).value


def trapezoid_average(params: SystemParams, sp: SpectrumParams, delta_pr: float,
                      points: int = TRAPEZOID_POINTS, span: float = TRAPEZOID_SPAN) -> float:
    """Same average by the trapezoid rule over |v| ≤ span·u."""
    if params.u == 0:
        return susceptibility_at(params, sp, delta_pr, 0.0)
    velocities = np.linspace(-span * params.u, span * params.u, points)
    weights = np.exp(-(velocities / params.u) ** 2) / (params.u * math.sqrt(math.pi))
    chi = susceptibility_batch(params, sp, delta_pr, velocities)
    value = float(trapezoid(weights * chi, velocities))
    return value * math.sqrt(math.pi) * params.u if sp.literal_integral else value


# === Spectra ===

@dataclass
class SpectrumResult:
    """Gain and transmission over the probe detuning grid."""
    detunings: np.ndarray
    gain: np.ndarray
    transmission: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.detunings = np.asarray(self.detunings, dtype=float)
        self.gain = np.asarray(self.gain, dtype=float)
        self.transmission = np.asarray(self.transmission, dtype=float)
        if not (len(self.detunings) == len(self.gain) == len(self.transmission)):
            raise ValueError("detunings, gain and transmission must have equal length")
        if not np.all(np.isfinite(self.gain)):
            raise ValueError("gain must be finite at every grid point")

    @classmethod
    def from_gain(cls, detunings, gain, metadata=None, warnings=None) -> "SpectrumResult":
        gain = np.asarray(gain, dtype=float)
        return cls(detunings, gain, np.exp(gain), metadata or {}, list(warnings or []))


def _grid_point(task: Tuple[int, SystemParams, SpectrumParams, float]):
    index, params, sp, delta_pr = task
    try:
        estimate = quadrature_estimate(params, sp, delta_pr)
        return index, estimate.value, estimate.warning, None
    except SimulationError as e:
        return index, float("nan"), None, e.message
    except (ValueError, np.linalg.LinAlgError) as e:
        return index, float("nan"), None, str(e)


def spectrum(params: SystemParams, sp: SpectrumParams,
             mode: "GeneratorMode | str" = GeneratorMode.TRACE_CONSERVING,
             jobs: int = 1) -> SpectrumResult:
    """
    Doppler-averaged gain at every grid detuning, then T = exp(G).

    Grid points are independent; with jobs > 1 they are spread over a
    process pool and reassembled by index.

    Raises:
        SpectrumGridError listing every failed grid index
    """
    params = validate(params)
    if GeneratorMode.parse(mode) is not GeneratorMode.TRACE_CONSERVING:
        raise ParameterError("mode", "spectra need the trace-conserving generator", str(mode))
    prefactor(params, sp)

    tasks = [(index, params, sp, delta) for index, delta in enumerate(sp.detuning_grid)]
    started = time.time()
    if jobs > 1 and len(tasks) > 1:
        with Pool(min(jobs, len(tasks))) as pool:
            outcomes = pool.map(_grid_point, tasks, chunksize=max(1, len(tasks) // (4 * jobs)))
    else:
        outcomes = [_grid_point(task) for task in tasks]
    logger.info(f"spectrum: {len(tasks)} points in {time.time() - started:.2f} s (jobs={jobs})")

    gain = np.empty(len(tasks))
    warnings: List[str] = []
    failures: List[Tuple[int, str]] = []
    for index, value, warning, error in sorted(outcomes, key=lambda outcome: outcome[0]):
        gain[index] = value
        if warning:
            warnings.append(f"[{index}] {warning}")
        if error:
            failures.append((index, error))
    if failures:
        raise SpectrumGridError(failures)

    metadata = {"system": params.to_dict(), "spectrum": sp.to_dict()}
    return SpectrumResult.from_gain(sp.detuning_grid, gain, metadata, warnings)


@dataclass(frozen=True)
class SpectrumSummary:
    """Figures of merit of a transmission spectrum."""
    peak_gain: float
    peak_detuning: float
    min_transmission: float
    max_transmission: float
    absorption_contrast: float   # 1 − min T
    gain_above_unity: float      # max T − 1

    @property
    def contrast_percent(self) -> float:
        return 100.0 * self.absorption_contrast

    @property
    def gain_percent(self) -> float:
        return 100.0 * self.gain_above_unity

    def to_dict(self) -> Dict[str, float]:
        return {
            "peak_gain": self.peak_gain,
            "peak_detuning_radps": self.peak_detuning,
            "min_transmission": self.min_transmission,
            "max_transmission": self.max_transmission,
            "absorption_contrast_percent": self.contrast_percent,
            "gain_above_unity_percent": self.gain_percent,
        }


def summarize(result: SpectrumResult) -> SpectrumSummary:
    peak = int(np.argmax(result.gain))
    t_min = float(np.min(result.transmission))
    t_max = float(np.max(result.transmission))
    return SpectrumSummary(
        peak_gain=float(result.gain[peak]),
        peak_detuning=float(result.detunings[peak]),
        min_transmission=t_min,
        max_transmission=t_max,
        absorption_contrast=1.0 - t_min,
        gain_above_unity=t_max - 1.0,
    )
