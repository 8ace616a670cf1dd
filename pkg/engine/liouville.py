# engine/liouville.py
"""
Master-equation generator of the four-level system, time integration and
steady-state solution.

The density matrix is vectorised by column stacking: ρ_ij (0-based) sits
at index i + 4·j. The coherent part follows the sign convention of the
rate equations used throughout this package, ∂_t ρ ∋ +i[H, ρ] with
H = diag(0, Δ_HFS, Δ_pr, Δ_pu) + Ω_pr(|1⟩⟨3| + h.c.) + Ω_pu(|1⟩⟨4| + h.c.).
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from engine.core import N_LEVELS, DensityMatrix, SystemParams, validate
from engine.errors import DegenerateParametersError, IntegrationError, SolverError

logger = logging.getLogger(__name__)

DIM = N_LEVELS * N_LEVELS
CONDITION_LIMIT = 1e14
STEADY_RESIDUAL_LIMIT = 1e-10
CONVERGENCE_FACTOR = 1e-6


class GeneratorMode(Enum):
    """Which population equations the generator carries."""
    LITERAL = "literal"              # ∂ρ22 without ground-state exchange
    TRACE_CONSERVING = "conserving"  # ∂ρ22 gains W12(ρ11 − ρ22)

    @classmethod
    def parse(cls, value: "str | GeneratorMode") -> "GeneratorMode":
        if isinstance(value, cls):
            return value
        lookup = {"literal": cls.LITERAL,
                  "conserving": cls.TRACE_CONSERVING, "traceconserving": cls.TRACE_CONSERVING}
        key = str(value).replace("_", "").lower()
        if key not in lookup:
            raise ValueError(f"Unknown generator mode '{value}'. Available: literal, conserving")
        return lookup[key]


def vec_index(i: int, j: int) -> int:
    """Column-stacked position of ρ_ij (0-based levels)."""
    return i + N_LEVELS * j


POPULATION_INDICES = tuple(vec_index(k, k) for k in range(N_LEVELS))


def to_vector(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=complex).reshape(DIM, order="F")


def to_matrix(vector: np.ndarray) -> np.ndarray:
    return np.asarray(vector).reshape(N_LEVELS, N_LEVELS, order="F")


@dataclass(frozen=True)
class Liouvillian:
    """16×16 generator acting on the column-stacked ρ (rad/s)."""
    matrix: np.ndarray = field(repr=False)
    mode: GeneratorMode
    params: SystemParams

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=complex)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def norm(self) -> float:
        """Infinity norm (maximum absolute row sum)."""
        return float(np.max(np.sum(np.abs(self.matrix), axis=1)))

    def population_row_sum(self) -> np.ndarray:
        return np.sum(self.matrix[list(POPULATION_INDICES), :], axis=0)


# === Generator construction ===

def hamiltonian(params: SystemParams) -> np.ndarray:
    """Rotating-frame Hamiltonian in units of ħ (rad/s)."""
    h = np.diag([0.0, params.delta_hfs, params.delta_pr, params.delta_pu]).astype(complex)
    h[0, 2] = h[2, 0] = params.omega_pr
    h[0, 3] = h[3, 0] = params.omega_pu
    return h


def coherence_damping(params: SystemParams) -> np.ndarray:
    """Symmetric table of the damping rate of every ρ_ij, i ≠ j."""
    w, r = params.w12, params.r_mean
    g3, g4, gl = params.gamma3, params.gamma4, params.gamma_laser
    damping = np.zeros((N_LEVELS, N_LEVELS))
    damping[0, 1] = w
    damping[0, 2] = 0.5 * (r + w + g3) + gl
    damping[0, 3] = 0.5 * (r + w + g4) + gl
    damping[1, 2] = 0.5 * (r + w + g3)
    damping[1, 3] = 0.5 * (r + w + g4)
    damping[2, 3] = 0.5 * (2 * r + g3 + g4)
    return damping + damping.T


def population_rates(params: SystemParams, mode: GeneratorMode) -> np.ndarray:
    """Incoherent rate matrix M with d(ρ_kk)/dt ∋ Σ M[k, l] ρ_ll."""
    w, g3, g4 = params.w12, params.gamma3, params.gamma4
    rates = np.array([
        [-w, w, 0.5 * g3, 0.5 * g4],
        [0.0, 0.0, 0.5 * g3, 0.5 * g4],
        [0.0, 0.0, -(params.r34 + g3), params.r43],
        [0.0, 0.0, params.r34, -(params.r43 + g4)],
    ])
    if mode is GeneratorMode.TRACE_CONSERVING:
        rates[1, 0] += w
        rates[1, 1] -= w
    return rates


def _assemble(params: SystemParams, mode: GeneratorMode) -> np.ndarray:
    identity = np.eye(N_LEVELS)
    h = hamiltonian(params)
    matrix = 1j * (np.kron(identity, h) - np.kron(h.T, identity))

    damping = coherence_damping(params)
    for i in range(N_LEVELS):
        for j in range(N_LEVELS):
            if i != j:
                matrix[vec_index(i, j), vec_index(i, j)] -= damping[i, j]

    rates = population_rates(params, mode)
    for k in range(N_LEVELS):
        for l in range(N_LEVELS):
            matrix[vec_index(k, k), vec_index(l, l)] += rates[k, l]
    return matrix


def build_liouvillian(params: SystemParams,
                      mode: "GeneratorMode | str" = GeneratorMode.TRACE_CONSERVING) -> Liouvillian:
    """
    Build the generator of the sixteen density-matrix equations.

    The single transfer rate R of the coherence equations is (r34 + r43)/2;
    the population equations use the directional rates. gamma_laser damps
    ρ13, ρ31, ρ14 and ρ41 only.
    """
    params = validate(params)
    mode = GeneratorMode.parse(mode)
    return Liouvillian(_assemble(params, mode), mode, params)


def detuning_derivatives(params: SystemParams,
                         mode: "GeneratorMode | str" = GeneratorMode.TRACE_CONSERVING
                         ) -> Tuple[np.ndarray, np.ndarray]:
    """
    (∂L/∂Δ_pr, ∂L/∂Δ_pu). Detunings enter the generator linearly, so
    L(Δ_pr, Δ_pu) = L(0, 0) + Δ_pr·D_pr + Δ_pu·D_pu exactly.
    """
    mode = GeneratorMode.parse(mode)
    base = _assemble(params.replace(delta_pr=0.0, delta_pu=0.0), mode)
    d_pr = _assemble(params.replace(delta_pr=1.0, delta_pu=0.0), mode) - base
    d_pu = _assemble(params.replace(delta_pr=0.0, delta_pu=1.0), mode) - base
    return d_pr, d_pu


def shifted_generators(params: SystemParams, delta_pr: np.ndarray, delta_pu: np.ndarray,
                       mode: "GeneratorMode | str" = GeneratorMode.TRACE_CONSERVING) -> np.ndarray:
    """Stack of generators, one per (Δ_pr, Δ_pu) pair; shape (n, 16, 16)."""
    mode = GeneratorMode.parse(mode)
    base = _assemble(params.replace(delta_pr=0.0, delta_pu=0.0), mode)
    d_pr, d_pu = detuning_derivatives(params, mode)
    delta_pr = np.asarray(delta_pr, dtype=float)[:, None, None]
    delta_pu = np.asarray(delta_pu, dtype=float)[:, None, None]
    return base[None, :, :] + delta_pr * d_pr[None] + delta_pu * d_pu[None]


# === Right-hand side ===

def rhs(rho: "DensityMatrix | np.ndarray", liouvillian: Liouvillian) -> np.ndarray:
    """dρ/dt as a 4×4 matrix, from the matrix form of the generator."""
    array = rho.rho if isinstance(rho, DensityMatrix) else rho
    return to_matrix(liouvillian.matrix @ to_vector(array))


def rhs_explicit(rho: "DensityMatrix | np.ndarray", params: SystemParams,
                 mode: "GeneratorMode | str" = GeneratorMode.TRACE_CONSERVING) -> np.ndarray:
    """
    dρ/dt from the sixteen equations written out one by one.
    Independent of the superoperator assembly; used as its oracle.
    """
    mode = GeneratorMode.parse(mode)
    r = np.asarray(rho.rho if isinstance(rho, DensityMatrix) else rho, dtype=complex)
    (p11, p12, p13, p14), (p21, p22, p23, p24), (p31, p32, p33, p34), (p41, p42, p43, p44) = r

    w, big_r = params.w12, params.r_mean
    g3, g4, gl = params.gamma3, params.gamma4, params.gamma_laser
    opr, opu = params.omega_pr, params.omega_pu
    dpr, dpu, dh = params.delta_pr, params.delta_pu, params.delta_hfs
    i = 1j

    d = np.empty((N_LEVELS, N_LEVELS), dtype=complex)
    d[0, 0] = 0.5 * (2 * w * (-p11 + p22) + g3 * p33 + g4 * p44
                     - 2 * i * ((p13 - p31) * opr + (p14 - p41) * opu))
    d[0, 1] = -(w + i * dh) * p12 + i * (p32 * opr + p42 * opu)
    d[0, 2] = (-0.5 * (big_r + w + g3 + 2 * i * dpr) - gl) * p13 \
        - i * (p11 - p33) * opr + i * p43 * opu
    d[0, 3] = (-0.5 * (big_r + w + g4 + 2 * i * dpu) - gl) * p14 \
        + i * (p34 * opr + (-p11 + p44) * opu)

    d[1, 0] = -(w - i * dh) * p21 - i * (p23 * opr + p24 * opu)
    d[1, 1] = 0.5 * (g3 * p33 + g4 * p44)
    if mode is GeneratorMode.TRACE_CONSERVING:
        d[1, 1] += w * (p11 - p22)
    d[1, 2] = -0.5 * (big_r + w + g3 - 2 * i * dh + 2 * i * dpr) * p23 - i * p21 * opr
    d[1, 3] = -0.5 * (big_r + w + g4 - 2 * i * dh + 2 * i * dpu) * p24 - i * p21 * opu

    d[2, 0] = (-0.5 * (big_r + w + g3 - 2 * i * dpr) - gl) * p31 \
        + i * ((p11 - p33) * opr - p34 * opu)
    d[2, 1] = -0.5 * (big_r + w + g3 + 2 * i * dh - 2 * i * dpr) * p32 + i * p12 * opr
    d[2, 2] = -(params.r34 + g3) * p33 + params.r43 * p44 + i * (p13 - p31) * opr
    d[2, 3] = -0.5 * (2 * big_r + g3 + g4 - 2 * i * dpr + 2 * i * dpu) * p34 \
        + i * (p14 * opr - p31 * opu)

    d[3, 0] = (-0.5 * (big_r + w + g4 - 2 * i * dpu) - gl) * p41 \
        - i * (p43 * opr + (-p11 + p44) * opu)
    d[3, 1] = -0.5 * (big_r + w + g4 + 2 * i * dh - 2 * i * dpu) * p42 + i * p12 * opu
    d[3, 2] = -0.5 * (2 * big_r + g3 + g4 + 2 * i * dpr - 2 * i * dpu) * p43 \
        + i * (-p41 * opr + p13 * opu)
    d[3, 3] = params.r34 * p33 - (params.r43 + g4) * p44 + i * (p14 - p41) * opu
    return d


def trace_drift_rate(rho: "DensityMatrix | np.ndarray", liouvillian: Liouvillian) -> float:
    """d(Tr ρ)/dt; zero for the trace-conserving generator."""
    return float(np.real(np.trace(rhs(rho, liouvillian))))


# === Time evolution ===

@dataclass(frozen=True)
class EvolveControls:
    """Integrator settings for `evolve`."""
    rel_tol: float = 1e-8
    abs_tol: float = 1e-11
    max_step: Optional[float] = None
    method: str = "RK45"
    samples: int = 401


@dataclass
class Trajectory:
    """Sampled solution of the master equation."""
    times: np.ndarray
    states: List[DensityMatrix]
    converged: bool
    final_residual: float
    mode: GeneratorMode = GeneratorMode.TRACE_CONSERVING

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have the same length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def final_state(self) -> DensityMatrix:
        return self.states[-1]

    def series(self, i: int, j: int) -> np.ndarray:
        """Time series of ρ_ij (1-based level labels)."""
        return np.array([state.rho[i - 1, j - 1] for state in self.states])

    def populations(self) -> np.ndarray:
        return np.array([state.populations for state in self.states])


def derivative_norm(rho: "DensityMatrix | np.ndarray", liouvillian: Liouvillian) -> float:
    return float(np.max(np.abs(rhs(rho, liouvillian))))


def _integrate(matrix: np.ndarray, y0: np.ndarray, t_end: float, t_eval: np.ndarray,
               controls: EvolveControls, max_step: float):
    return solve_ivp(lambda t, y: matrix @ y, (0.0, t_end), y0,
                     method=controls.method, t_eval=t_eval,
                     rtol=controls.rel_tol, atol=controls.abs_tol,
                     max_step=max_step, jac=matrix if controls.method in ("BDF", "Radau") else None)


def evolve(rho0: DensityMatrix, liouvillian: Liouvillian, t_end: float,
           controls: Optional[EvolveControls] = None) -> Trajectory:
    """
    Integrate the master equation from ρ(0) = rho0 to t_end with an
    adaptive Runge–Kutta stepper.

    If the first attempt fails, it is retried once with max_step limited
    to 1/(50·Ω_pu) (or 1/(50·‖L‖) without pump) before reporting the
    time of failure.
    """
    controls = controls or EvolveControls()
    if not t_end > 0:
        raise SolverError(f"t_end must be > 0 (got {t_end})")
    DensityMatrix.checked(rho0.rho)

    t_eval = np.linspace(0.0, t_end, max(int(controls.samples), 2))
    y0 = to_vector(rho0.rho)
    matrix = np.asarray(liouvillian.matrix)
    first_step = controls.max_step if controls.max_step is not None else np.inf

    started = time.time()
    solution = _integrate(matrix, y0, t_end, t_eval, controls, first_step)
    if solution.status != 0:
        fastest = liouvillian.params.omega_pu or liouvillian.norm or 1.0
        guarded = min(first_step, 1.0 / (50.0 * fastest))
        logger.warning(f"Integration stopped at t={solution.t[-1]:.6e} s ({solution.message}); "
                       f"retrying with max_step={guarded:.3e} s")
        solution = _integrate(matrix, y0, t_end, t_eval, controls, guarded)
        if solution.status != 0:
            failed_at = float(solution.t[-1]) if len(solution.t) else 0.0
            raise IntegrationError(f"Integration failed at t={failed_at:.6e} s: {solution.message}",
                                   time_of_failure=failed_at)
    logger.debug(f"evolve: {solution.nfev} rhs evaluations in {time.time() - started:.3f} s")

    states = [DensityMatrix(to_matrix(column)) for column in solution.y.T]
    residual = derivative_norm(states[-1], liouvillian)
    threshold = CONVERGENCE_FACTOR * max(liouvillian.params.gamma3, 1.0)
    converged = residual < threshold
    if not converged:
        logger.info(f"evolve: ‖dρ/dt‖∞ = {residual:.3e} rad/s at t_end is above {threshold:.3e}")
    return Trajectory(np.asarray(solution.t), states, converged, residual, liouvillian.mode)


# === Steady state ===

def _constrained_system(matrices: np.ndarray) -> np.ndarray:
    """Scale each generator to unit norm and swap the ρ11 row for Σρ_kk = 1."""
    norms = np.max(np.sum(np.abs(matrices), axis=2), axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    system = matrices / safe[:, None, None]
    trace_row = np.zeros(DIM, dtype=complex)
    trace_row[list(POPULATION_INDICES)] = 1.0
    system[:, POPULATION_INDICES[0], :] = trace_row
    return system


def _one_norms(matrices: np.ndarray) -> np.ndarray:
    return np.max(np.sum(np.abs(matrices), axis=1), axis=1)


def steady_state_batch(matrices: np.ndarray) -> np.ndarray:
    """
    Stationary states of a stack of trace-conserving generators.

    The constrained system has e_11 as its right-hand side, so each
    solution is one column of the inverse; the same inverse gives the
    1-norm condition estimate ‖A‖₁·‖A⁻¹‖₁.

    Args:
        matrices: array of shape (n, 16, 16)

    Returns:
        array of shape (n, 4, 4)

    Raises:
        DegenerateParametersError if any constrained system is singular or
        has a condition estimate above 1e14
    """
    matrices = np.asarray(matrices, dtype=complex)
    system = _constrained_system(matrices)
    try:
        inverse = np.linalg.inv(system)
    except np.linalg.LinAlgError:
        raise DegenerateParametersError(
            "No unique stationary state: the constrained system is singular",
            condition_estimate=float("inf"))
    with np.errstate(over="ignore", invalid="ignore"):
        condition = _one_norms(system) * _one_norms(inverse)
    bad = ~np.isfinite(condition) | (condition > CONDITION_LIMIT)
    if np.any(bad):
        worst = float(np.max(np.where(np.isfinite(condition), condition, np.inf)))
        raise DegenerateParametersError(
            f"No unique stationary state: condition estimate {worst:.3e} exceeds "
            f"{CONDITION_LIMIT:.0e} for {int(np.sum(bad))} generator(s)",
            condition_estimate=worst)
    vectors = inverse[:, :, POPULATION_INDICES[0]]
    states = vectors.reshape(-1, N_LEVELS, N_LEVELS).transpose(0, 2, 1)
    return 0.5 * (states + np.conj(states.transpose(0, 2, 1)))


def steady_state(liouvillian: Liouvillian) -> DensityMatrix:
    """
    Solve L·x = 0 with the ρ11 row replaced by the trace constraint.
    """
    if liouvillian.mode is not GeneratorMode.TRACE_CONSERVING:
        raise SolverError("steady_state requires the trace-conserving generator; "
                          "the literal equations leak trace at rate W12(ρ22 − ρ11)")
    rho = steady_state_batch(liouvillian.matrix[None])[0]
    residual = float(np.max(np.abs(liouvillian.matrix @ to_vector(rho))))
    scale = liouvillian.norm
    if residual > STEADY_RESIDUAL_LIMIT * scale:
        logger.warning(f"steady_state residual {residual:.3e} exceeds "
                       f"{STEADY_RESIDUAL_LIMIT:.0e}·‖L‖∞ = {STEADY_RESIDUAL_LIMIT * scale:.3e}")
    else:
        logger.debug(f"steady_state residual {residual:.3e} rad/s")
    return DensityMatrix(rho)


def coherence_eq4(rho_ss: DensityMatrix, params: SystemParams) -> complex:
    """
    ρ13 from the stationary ∂ρ13 equation:

        ρ13 = [2iΩ_pr(ρ33 − ρ11) + 2iΩ_pu·ρ43] / (R + W12 + γ3 + 2iΔ_pr)

    with R = (r34 + r43)/2. gamma_laser, when set, adds 2·gamma_laser to
    the denominator.
    """
    rho = rho_ss.rho
    numerator = 2j * params.omega_pr * (rho[2, 2] - rho[0, 0]) + 2j * params.omega_pu * rho[3, 2]
    denominator = (params.r_mean + params.w12 + params.gamma3 + 2 * params.gamma_laser
                   + 2j * params.delta_pr)
    return complex(numerator / denominator)
