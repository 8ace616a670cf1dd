#!/usr/bin/env python3
"""
Master-equation tests: generator construction, the explicit-equation
oracle, time evolution and the stationary state.
"""

import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from engine.core import DensityMatrix, SystemParams, two_pi_mhz
from engine.errors import DegenerateParametersError, IntegrationError, SolverError
from engine.liouville import (POPULATION_INDICES, EvolveControls, GeneratorMode, build_liouvillian,
                              coherence_eq4, detuning_derivatives, evolve, rhs, rhs_explicit,
                              shifted_generators, steady_state, steady_state_batch,
                              trace_drift_rate, vec_index)

GAMMA3 = two_pi_mhz(5.75)


def caption_params(**changes) -> SystemParams:
    base = SystemParams(gamma3=GAMMA3, omega_pr=0.05 * GAMMA3, omega_pu=60 * GAMMA3,
                        w12=0.5 * GAMMA3, r34=2 * GAMMA3, r43=2 * GAMMA3)
    return base.replace(**changes) if changes else base


def random_params(rng, gamma3=1.0, detuned=True) -> SystemParams:
    return SystemParams(
        gamma3=gamma3,
        gamma4=gamma3 * rng.uniform(0.5, 1.5),
        omega_pr=gamma3 * rng.uniform(0, 100),
        omega_pu=gamma3 * rng.uniform(0, 100),
        delta_pr=gamma3 * rng.uniform(-50, 50) if detuned else 0.0,
        delta_pu=gamma3 * rng.uniform(-50, 50) if detuned else 0.0,
        delta_hfs=gamma3 * rng.uniform(0, 20) if detuned else 0.0,
        w12=gamma3 * rng.uniform(0, 10),
        r34=gamma3 * rng.uniform(0, 10),
        r43=gamma3 * rng.uniform(0, 10),
        gamma_laser=gamma3 * rng.uniform(0, 5),
    )


def random_state(rng) -> np.ndarray:
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


class TestGenerator:
    """Structure of the 16×16 generator"""

    def test_all_zero_gives_zero_matrix(self):
        liouvillian = build_liouvillian(SystemParams(gamma3=0.0))
        assert np.count_nonzero(liouvillian.matrix) == 0

    def test_excited_decay_column(self):
        gamma = 3.0
        matrix = build_liouvillian(SystemParams(gamma3=gamma)).matrix
        column = matrix[:, vec_index(3, 3)]
        assert column[vec_index(3, 3)] == -gamma
        assert column[vec_index(0, 0)] == gamma / 2
        assert column[vec_index(1, 1)] == gamma / 2
        others = [k for k in range(16) if k not in POPULATION_INDICES[:2] + (vec_index(3, 3),)]
        assert np.all(column[others] == 0)

    def test_population_rows_sum_to_zero(self, rng):
        for _ in range(10):
            liouvillian = build_liouvillian(random_params(rng))
            assert np.max(np.abs(liouvillian.population_row_sum())) <= 1e-12 * liouvillian.norm

    def test_caption_population_rows_applied(self, rng):
        liouvillian = build_liouvillian(caption_params())
        for _ in range(20):
            derivative = rhs(random_state(rng), liouvillian)
            assert abs(np.trace(derivative)) <= 1e-12 * liouvillian.norm

    def test_hermitian_derivative(self, rng):
        for mode in GeneratorMode:
            liouvillian = build_liouvillian(random_params(rng), mode)
            derivative = rhs(random_state(rng), liouvillian)
            assert np.max(np.abs(derivative - derivative.conj().T)) <= 1e-12 * liouvillian.norm

    def test_detunings_enter_linearly(self, rng):
        params = random_params(rng)
        d_pr, d_pu = detuning_derivatives(params)
        base = build_liouvillian(params.replace(delta_pr=0.0, delta_pu=0.0)).matrix
        expected = base + params.delta_pr * d_pr + params.delta_pu * d_pu
        assert np.allclose(build_liouvillian(params).matrix, expected, rtol=0, atol=1e-9)

    def test_shifted_generators_stack(self, rng):
        params = random_params(rng)
        stack = shifted_generators(params, np.array([1.0, -2.0]), np.array([0.5, 3.0]))
        single = build_liouvillian(params.replace(delta_pr=-2.0, delta_pu=3.0)).matrix
        assert stack.shape == (2, 16, 16)
        assert np.allclose(stack[1], single, rtol=0, atol=1e-9)

    def test_mode_parsing(self):
        assert GeneratorMode.parse("literal") is GeneratorMode.LITERAL
        assert GeneratorMode.parse("TraceConserving") is GeneratorMode.TRACE_CONSERVING
        with pytest.raises(ValueError):
            GeneratorMode.parse("lossy")


class TestRightHandSide:
    """Matrix path against the sixteen written-out equations"""

    def test_matrix_matches_explicit_equations(self, rng):
        for _ in range(20):
            params = random_params(rng, gamma3=GAMMA3)
            for mode in GeneratorMode:
                liouvillian = build_liouvillian(params, mode)
                scale = liouvillian.norm
                for _ in range(1000):
                    rho = random_state(rng)
                    difference = rhs(rho, liouvillian) - rhs_explicit(rho, params, mode)
                    assert np.max(np.abs(difference)) <= 1e-12 * scale

    def test_balanced_ground_states_are_stationary(self):
        params = SystemParams(w12=2.0)
        for mode in GeneratorMode:
            derivative = rhs(DensityMatrix.thermal_ground(), build_liouvillian(params, mode))
            assert np.all(derivative == 0)

    def test_pump_drives_ground_optical_coherence(self):
        omega = 5.0
        params = SystemParams(omega_pu=omega)
        derivative = rhs(DensityMatrix.pure_level(1), build_liouvillian(params))
        assert derivative[3, 0] == pytest.approx(1j * omega)
        assert derivative[0, 3] == pytest.approx(-1j * omega)
        assert np.count_nonzero(np.abs(derivative) > 1e-12) == 2

    def test_literal_trace_drift(self, rng):
        for _ in range(20):
            params = random_params(rng)
            liouvillian = build_liouvillian(params, GeneratorMode.LITERAL)
            rho = random_state(rng)
            expected = params.w12 * (rho[1, 1].real - rho[0, 0].real)
            assert trace_drift_rate(rho, liouvillian) == pytest.approx(expected, abs=1e-10)

    def test_conserving_trace_drift_is_zero(self, rng):
        liouvillian = build_liouvillian(random_params(rng))
        assert trace_drift_rate(random_state(rng), liouvillian) == pytest.approx(0.0, abs=1e-10)


class TestEvolve:
    """Adaptive time integration"""

    def test_spontaneous_decay(self):
        gamma = 1.0
        liouvillian = build_liouvillian(SystemParams(gamma3=gamma))
        trajectory = evolve(DensityMatrix.pure_level(3), liouvillian, 40.0,
                            EvolveControls(rel_tol=1e-10, abs_tol=1e-13, samples=81))
        rho33 = trajectory.series(3, 3).real
        resolved = rho33 > 1e-6
        assert np.all(np.diff(rho33[resolved]) < 0)
        assert np.allclose(rho33, np.exp(-gamma * trajectory.times), atol=1e-8)
        final = trajectory.final_state.populations
        assert final[0] == pytest.approx(0.5, abs=1e-9)
        assert final[1] == pytest.approx(0.5, abs=1e-9)
        assert trajectory.converged

    def test_first_sample_is_initial_state(self):
        rho0 = DensityMatrix.thermal_ground()
        trajectory = evolve(rho0, build_liouvillian(caption_params()), 5.0 / GAMMA3)
        assert trajectory.times[0] == 0.0
        assert np.array_equal(trajectory.states[0].rho, rho0.rho)
        assert np.all(np.diff(trajectory.times) > 0)
        assert len(trajectory.times) == len(trajectory.states)

    def test_conservation_over_long_horizon(self, rng):
        for _ in range(3):
            params = random_params(rng, detuned=False).replace(omega_pr=rng.uniform(0, 5),
                                                            omega_pu=rng.uniform(0, 5))
            trajectory = evolve(DensityMatrix.thermal_ground(), build_liouvillian(params), 1e3,
                                EvolveControls(samples=201))
            for state in trajectory.states:
                assert abs(state.trace - 1) <= 1e-9
                assert state.hermiticity_error() <= 1e-9

    def test_rejects_invalid_initial_state(self):
        from engine.errors import ParameterError
        with pytest.raises(ParameterError):
            evolve(DensityMatrix(np.zeros((4, 4))), build_liouvillian(caption_params()), 1.0)

    def test_rejects_non_positive_horizon(self):
        with pytest.raises(SolverError):
            evolve(DensityMatrix.thermal_ground(), build_liouvillian(caption_params()), 0.0)

    def test_step_failure_reports_time(self, monkeypatch):
        import engine.liouville as liouville

        class Failed:
            status = -1
            message = "Required step size is less than spacing between numbers."
            t = np.array([0.0, 2.5e-7])

        monkeypatch.setattr(liouville, "_integrate", lambda *args, **kwargs: Failed())
        with pytest.raises(IntegrationError) as info:
            evolve(DensityMatrix.thermal_ground(), build_liouvillian(caption_params()), 1e-6)
        assert info.value.time_of_failure == 2.5e-7


class TestSteadyState:
    """Constrained null-space solve"""

    def test_field_free_equilibrium(self):
        rho = steady_state(build_liouvillian(SystemParams(gamma3=1.0, w12=0.3)))
        assert np.allclose(rho.rho, np.diag([0.5, 0.5, 0, 0]), atol=1e-12)

    def test_residual_and_invariants(self, rng):
        for _ in range(10):
            liouvillian = build_liouvillian(random_params(rng, gamma3=GAMMA3).replace(w12=GAMMA3))
            rho = steady_state(liouvillian)
            residual = np.max(np.abs(rhs(rho, liouvillian)))
            assert residual <= 1e-10 * liouvillian.norm
            assert rho.is_valid()

    def test_agrees_with_long_time_evolution(self, rng):
        for _ in range(30):
            # wall relaxation keeps the stationary state unique
            params = SystemParams(
                gamma3=1.0,
                omega_pr=rng.uniform(0, 100), omega_pu=rng.uniform(0, 100),
                delta_pr=rng.uniform(-5, 5), delta_pu=rng.uniform(-5, 5),
                w12=rng.uniform(0.5, 10), r34=rng.uniform(0, 10), r43=rng.uniform(0, 10),
            )
            liouvillian = build_liouvillian(params)
            decay = np.sort(-np.real(np.linalg.eigvals(liouvillian.matrix)))
            horizon = min(40.0 / decay[1], 400.0)
            trajectory = evolve(DensityMatrix.thermal_ground(), liouvillian, horizon,
                                EvolveControls(rel_tol=1e-10, abs_tol=1e-12, method="DOP853", samples=2))
            difference = trajectory.final_state.rho - steady_state(liouvillian).rho
            assert np.max(np.abs(difference)) <= 1e-6

    def test_batch_matches_single(self, rng):
        params = [random_params(rng).replace(w12=1.0) for _ in range(4)]
        matrices = np.stack([build_liouvillian(p).matrix for p in params])
        batch = steady_state_batch(matrices)
        for state, p in zip(batch, params):
            assert np.allclose(state, steady_state(build_liouvillian(p)).rho, atol=1e-12)

    def test_degenerate_parameters(self):
        with pytest.raises(DegenerateParametersError) as info:
            steady_state(build_liouvillian(SystemParams(gamma3=0.0)))
        assert info.value.exit_code == 2

    def test_literal_mode_rejected(self):
        with pytest.raises(SolverError):
            steady_state(build_liouvillian(caption_params(), GeneratorMode.LITERAL))

    def test_pump_off_never_amplifies(self, rng):
        for _ in range(30):
            params = random_params(rng).replace(omega_pu=0.0, omega_pr=0.05)
            rho = steady_state(build_liouvillian(params.replace(w12=params.w12 + 0.1)))
            assert rho.element(1, 3).imag <= 1e-15


class TestCaptionScenarios:
    """Stationary states of the single-velocity-class scenarios"""

    def test_walls_keep_excited_coherence(self):
        walls = steady_state(build_liouvillian(caption_params()))
        no_walls = steady_state(build_liouvillian(caption_params(w12=0.0)))
        assert walls.inversion_31 < 0
        assert abs(no_walls.element(4, 3)) < 1e-3 * abs(walls.element(4, 3))

    def test_no_walls_trap_ground_state(self):
        rho = steady_state(build_liouvillian(caption_params(w12=0.0)))
        assert rho.populations[1] > 0.9
        assert abs(rho.element(1, 3).imag) <= 1e-10

    def test_gain_without_inversion(self):
        rho = steady_state(build_liouvillian(caption_params(r43=2.78 * GAMMA3)))
        assert rho.element(1, 3).imag > 0
        assert rho.inversion_31 < 0

    def test_gain_needs_ground_relaxation(self):
        rho = steady_state(build_liouvillian(caption_params(r43=2.78 * GAMMA3, w12=0.0)))
        assert abs(rho.element(1, 3).imag) <= 1e-10


class TestCoherenceEq4:
    """Closed form of the stationary probe coherence"""

    def test_direct_substitution(self):
        params = SystemParams(gamma3=1.0, omega_pr=0.1, w12=0.5, r34=1.0, r43=3.0)
        rho = DensityMatrix.pure_level(1)
        expected = -2j * 0.1 / (2.0 + 0.5 + 1.0)
        assert coherence_eq4(rho, params) == pytest.approx(expected)

    def test_coherence_transfer_term(self):
        params = SystemParams(gamma3=1.0, omega_pu=2.0, delta_pr=0.7, w12=0.5, r34=1.0, r43=1.0)
        rho = np.diag([0.4, 0.3, 0.2, 0.1]).astype(complex)
        rho[3, 2], rho[2, 3] = 0.01 + 0.02j, 0.01 - 0.02j
        expected = 2j * 2.0 * rho[3, 2] / (1.0 + 0.5 + 1.0 + 2j * 0.7)
        assert coherence_eq4(DensityMatrix(rho), params) == pytest.approx(expected)

    @pytest.mark.parametrize("changes", [{}, {"r43": 2.78 * GAMMA3}, {"delta_pr": 3 * GAMMA3},
                                         {"gamma_laser": 10 * GAMMA3}])
    def test_reproduces_full_solution(self, changes):
        params = caption_params(**changes)
        rho = steady_state(build_liouvillian(params))
        closed = coherence_eq4(rho, params)
        # relative to the probe-drive term, which Im(rho13) nearly cancels
        drive = abs(2 * params.omega_pr * rho.inversion_31) / (params.r_mean + params.w12 + params.gamma3)
        assert abs(closed - rho.element(1, 3)) <= 1e-8 * max(abs(rho.element(1, 3)), drive)
