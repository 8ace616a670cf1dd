#!/usr/bin/env python3
"""
Core data model tests: SystemParams validation, SpectrumParams and the
density-matrix invariants.
"""

import math
import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from engine.core import (GAMMA_D1, DensityMatrix, SpectrumParams, SystemParams,
                         check_density_matrix, two_pi_mhz, validate)
from engine.errors import EXIT_CONFIG, ParameterError


class TestSystemParams:
    """Validation of physical parameters"""

    def test_all_zero_rates_are_valid(self):
        params = SystemParams(gamma3=0.0, lambda_pr=795e-9)
        assert validate(params) is params

    def test_negative_gamma3_names_field(self):
        with pytest.raises(ParameterError) as info:
            validate(SystemParams(gamma3=-1.0))
        assert info.value.field_name == "gamma3"
        assert info.value.exit_code == EXIT_CONFIG

    def test_caption_pump_is_valid(self):
        gamma3 = two_pi_mhz(5.75)
        params = validate(SystemParams(gamma3=gamma3, omega_pu=60 * gamma3))
        assert params.omega_pu == pytest.approx(60 * 2 * math.pi * 5.75e6)

    @pytest.mark.parametrize("field_name, value", [
        ("lambda_pr", 0.0),
        ("lambda_pu", -780e-9),
        ("w12", -0.1),
        ("omega_pr", float("nan")),
        ("delta_pr", float("inf")),
        ("u", -1.0),
    ])
    def test_first_violation_is_reported(self, field_name, value):
        with pytest.raises(ParameterError) as info:
            validate(SystemParams(**{field_name: value}))
        assert info.value.field_name == field_name

    def test_negative_detuning_is_allowed(self):
        validate(SystemParams(delta_pr=-1e9, delta_pu=-5e8))

    def test_validation_is_idempotent(self):
        params = SystemParams(omega_pr=1.0, w12=2.0, r34=3.0)
        assert validate(validate(params)) == validate(params)

    def test_gamma4_defaults_to_gamma3(self):
        params = SystemParams(gamma3=7.0)
        assert params.gamma4 == 7.0
        assert params.replace(gamma3=9.0).gamma4 == 9.0
        assert SystemParams(gamma3=7.0, gamma4=3.0).replace(gamma3=9.0).gamma4 == 3.0

    def test_replace_validates(self):
        with pytest.raises(ParameterError):
            SystemParams().replace(r43=-1.0)

    def test_dict_round_trip(self):
        params = SystemParams(omega_pr=1.5, omega_pu=2.5, delta_pr=-3.0, u=300.0)
        assert SystemParams.from_dict(params.to_dict()) == params

    def test_from_dict_rejects_unknown_fields(self):
        with pytest.raises(ParameterError) as info:
            SystemParams.from_dict({"omega_probe": 1.0})
        assert info.value.field_name == "omega_probe"

    def test_mean_transfer_rate(self):
        assert SystemParams(r34=2.0, r43=4.0).r_mean == 3.0

    def test_default_decay_rate(self):
        assert SystemParams().gamma3 == GAMMA_D1

    def test_numpy_scalars_are_numbers(self):
        params = SystemParams(omega_pr=np.int64(1), w12=np.float32(0.5), u=np.float64(3.0))
        assert validate(params) is params
        assert params.to_dict()["omega_pr"] == 1.0

    def test_strings_are_not_numbers(self):
        with pytest.raises(ParameterError) as info:
            validate(SystemParams(r34="2"))
        assert info.value.field_name == "r34"


class TestSpectrumParams:
    """Medium and detuning grid"""

    def test_uniform_grid(self):
        sp = SpectrumParams.uniform_grid(3.5e19, 30e-6, -1.0, 1.0, 5)
        assert sp.detuning_grid == (-1.0, -0.5, 0.0, 0.5, 1.0)
        assert sp.prefactor_scale == pytest.approx(3.5e19 * 30e-6)

    @pytest.mark.parametrize("kwargs, field_name", [
        ({"number_density": 0.0}, "number_density"),
        ({"path_length": -1.0}, "path_length"),
        ({"detuning_grid": [0.0, 0.0]}, "detuning_grid"),
        ({"detuning_grid": [1.0, 0.0]}, "detuning_grid"),
        ({"detuning_grid": []}, "detuning_grid"),
        ({"quadrature_nodes": 4}, "quadrature_nodes"),
    ])
    def test_invariants(self, kwargs, field_name):
        base = {"number_density": 1e19, "path_length": 1e-5, "detuning_grid": [0.0, 1.0]}
        base.update(kwargs)
        with pytest.raises(ParameterError) as info:
            SpectrumParams(**base)
        assert info.value.field_name == field_name

    def test_with_medium_keeps_grid(self):
        sp = SpectrumParams(1e19, 1e-5, [0.0, 1.0])
        doubled = sp.with_medium(number_density=2e19)
        assert doubled.number_density == 2e19
        assert doubled.detuning_grid == sp.detuning_grid

    def test_uniform_snapshot_is_compact(self):
        snapshot = SpectrumParams.uniform_grid(3.5e19, 30e-6, -2.0, 2.0, 201).to_dict()
        assert snapshot["points"] == 201
        assert "detuning_grid" not in snapshot

    def test_non_uniform_snapshot_keeps_every_point(self):
        grid = [-3.0, -1.0, 0.0, 0.5, 4.0]
        sp = SpectrumParams(1e19, 1e-5, grid)
        assert not sp.is_uniform
        snapshot = sp.to_dict()
        assert snapshot["detuning_grid"] == grid
        assert (snapshot["detuning_min"], snapshot["detuning_max"], snapshot["points"]) == (-3.0, 4.0, 5)


class TestDensityMatrix:
    """Hermiticity, trace and population checks"""

    def test_thermal_ground_is_valid(self):
        rho = DensityMatrix.thermal_ground()
        assert rho.is_valid()
        assert rho.trace == 1.0
        assert np.allclose(rho.populations, [0.5, 0.5, 0.0, 0.0])
        assert rho.inversion_31 == -0.5

    def test_random_pure_state_is_valid(self):
        rng = np.random.default_rng(7)
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        psi /= np.linalg.norm(psi)
        assert check_density_matrix(np.outer(psi, psi.conj())) == []

    def test_non_hermitian_detected(self):
        rho = np.diag([1.0, 0, 0, 0]).astype(complex)
        rho[0, 2] = 0.1
        problems = check_density_matrix(rho)
        assert any("conj" in p for p in problems)

    def test_trace_detected(self):
        problems = check_density_matrix(np.diag([0.5, 0.4, 0.0, 0.0]))
        assert any("trace" in p for p in problems)

    def test_population_range_detected(self):
        problems = check_density_matrix(np.diag([1.5, -0.5, 0.0, 0.0]))
        assert len([p for p in problems if "outside" in p]) == 2

    def test_checker_does_not_mutate(self):
        rho = np.diag([0.5, 0.6, 0.0, 0.0]).astype(complex)
        before = rho.copy()
        check_density_matrix(rho)
        assert np.array_equal(rho, before)

    def test_checked_raises(self):
        with pytest.raises(ParameterError):
            DensityMatrix.checked(np.zeros((4, 4)))

    def test_plain_construction_holds_drifted_trace(self):
        # literal-mode trajectories leak trace; only `checked` enforces the invariants
        drifted = np.diag([0.55, 0.5, 0.0, 0.0])
        rho = DensityMatrix(drifted)
        assert rho.trace == pytest.approx(1.05)
        assert not rho.is_valid()
        with pytest.raises(ParameterError, match="trace"):
            DensityMatrix.checked(drifted)

    def test_checked_accepts_scaled_tolerance(self):
        rho = np.diag([0.5, 0.5 + 5e-9, 0.0, 0.0])
        with pytest.raises(ParameterError):
            DensityMatrix.checked(rho)
        assert DensityMatrix.checked(rho, tolerance_scale=10.0).is_valid() is False

    def test_storage_is_read_only(self):
        rho = DensityMatrix.pure_level(3)
        assert rho.element(3, 3) == 1.0
        with pytest.raises(ValueError):
            rho.rho[0, 0] = 1.0

    def test_wrong_shape(self):
        assert check_density_matrix(np.eye(3)) == ["shape (3, 3) is not (4, 4)"]
