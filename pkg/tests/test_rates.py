#!/usr/bin/env python3
"""
Rate model tests: kinematics, wall relaxation and buffer-gas transfer.
"""

import logging
import math
import os
import sys

import pytest

# Add project root to path
sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from engine.core import ATOMIC_MASS, GAMMA_D1, K_B, MASS_H2, MASS_RB85
from engine.errors import ParameterError
from engine.rates import (ATOMIC_DENSITY_PRESETS, BufferGasSpec, CellSpec, atomic_density_preset,
                          collisional_transfer_rates, cross_section_preset, mean_relative_speed,
                          mean_speed, most_probable_speed, number_density_from_pressure,
                          reduced_mass, resolve_rates, wall_relaxation)


class TestKinematics:
    """Thermal speeds and reduced masses"""

    def test_reduced_mass(self):
        assert reduced_mass(2.0, 2.0) == 1.0
        assert reduced_mass(MASS_RB85, MASS_H2) == pytest.approx(
            84.911789738 * 2.01588 / (84.911789738 + 2.01588) * ATOMIC_MASS)

    def test_rb_h2_relative_speed_at_330K(self):
        v_av = mean_relative_speed(330.0, reduced_mass(MASS_RB85, MASS_H2))
        assert v_av == pytest.approx(1.88e3, rel=0.01)

    def test_most_probable_speed_of_hot_rb85(self):
        assert most_probable_speed(473.0, MASS_RB85) == pytest.approx(304.0, rel=0.01)

    def test_speed_ratio(self):
        # u / v̄ = sqrt(π) / 2 for any temperature and mass
        for temperature in (300.0, 473.0, 1720.0):
            ratio = most_probable_speed(temperature, MASS_RB85) / mean_speed(temperature, MASS_RB85)
            assert ratio == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-12)

    def test_ideal_gas_density(self):
        assert number_density_from_pressure(K_B * 300.0, 300.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("temperature", [0.0, -10.0, float("nan")])
    def test_rejects_non_positive_temperature(self, temperature):
        with pytest.raises(ParameterError) as info:
            most_probable_speed(temperature, MASS_RB85)
        assert info.value.field_name == "temperature"


class TestWallRelaxation:
    """Ballistic ground-state relaxation"""

    def test_cube(self):
        side, temperature = 1e-3, 400.0
        cell = CellSpec(side, side, side, temperature)
        expected = 2 * math.pi * mean_speed(temperature, MASS_RB85) * 1.5 / side
        assert wall_relaxation(cell) == pytest.approx(expected, rel=1e-12)

    def test_two_pi_factor_is_optional(self):
        cell = CellSpec(2e-3, 2e-3, 30e-6, 523.15)
        assert wall_relaxation(cell) == pytest.approx(2 * math.pi * wall_relaxation(cell, include_two_pi=False))

    def test_thin_slab_is_set_by_thickness(self):
        thin = wall_relaxation(CellSpec(2e-3, 2e-3, 30e-6, 523.15))
        thinner = wall_relaxation(CellSpec(2e-3, 2e-3, 15e-6, 523.15))
        assert thinner / thin == pytest.approx(2.0, rel=0.02)

    def test_micro_cell_rate_is_comparable_to_decay(self):
        ratio = wall_relaxation(CellSpec(2e-3, 2e-3, 30e-6, 523.15)) / GAMMA_D1
        assert 0.3 <= ratio <= 3.0

    def test_rejects_zero_dimension(self):
        with pytest.raises(ParameterError) as info:
            CellSpec(2e-3, 0.0, 30e-6, 523.15)
        assert info.value.field_name == "width"


class TestBufferGas:
    """Collisional transfer between the excited states"""

    def test_rates_scale_with_cross_sections(self):
        gas = BufferGasSpec.from_preset(1e23, "h2_330K")
        r34, r43 = collisional_transfer_rates(gas, 330.0)
        assert r43 / r34 == pytest.approx(1.39, rel=1e-12)

    def test_rates_are_linear_in_density(self):
        one = collisional_transfer_rates(BufferGasSpec(1e23, 1e-19, 1e-19), 330.0)
        two = collisional_transfer_rates(BufferGasSpec(2e23, 1e-19, 1e-19), 330.0)
        assert two[0] == pytest.approx(2 * one[0])
        assert two[1] == pytest.approx(2 * one[1])

    def test_rate_formula(self):
        gas = BufferGasSpec(1e23, 1e-19, 2e-19)
        v_av = mean_relative_speed(330.0, reduced_mass(MASS_RB85, MASS_H2))
        r34, r43 = collisional_transfer_rates(gas, 330.0)
        assert r34 == pytest.approx(1e23 * 1e-19 * v_av)
        assert r43 == pytest.approx(1e23 * 2e-19 * v_av)

    def test_cross_section_in_cm2_warns(self, caplog):
        with caplog.at_level(logging.WARNING, logger="engine.rates"):
            BufferGasSpec(1e23, 10e-16, 13.9e-16)
        assert "outside the expected band" in caplog.text

    def test_plausible_cross_section_is_quiet(self, caplog):
        with caplog.at_level(logging.WARNING, logger="engine.rates"):
            BufferGasSpec.from_preset(1e23)
        assert caplog.text == ""

    def test_rejects_zero_density(self):
        with pytest.raises(ParameterError) as info:
            BufferGasSpec(0.0, 1e-19, 1e-19)
        assert info.value.field_name == "number_density"


class TestPresets:
    """Tabulated cross-sections and atomic densities"""

    def test_cross_section_rows(self):
        assert cross_section_preset("h2_330K") == (10.0e-20, 13.9e-20, 330.0)
        assert cross_section_preset("h2_1720K")[2] == 1720.0

    def test_unknown_cross_section(self):
        with pytest.raises(ParameterError) as info:
            cross_section_preset("n2_300K")
        assert "h2_330K" in info.value.message

    def test_atomic_density(self):
        assert atomic_density_preset("rb_150C") == 3.5e19
        assert set(ATOMIC_DENSITY_PRESETS) == {"rb_150C", "rb_250C"}
        with pytest.raises(ParameterError):
            atomic_density_preset("rb_20C")


class TestResolveRates:
    """Rates derived from a cell and a buffer gas"""

    def test_empty(self):
        assert resolve_rates().to_dict() == {}

    def test_cell_only(self):
        cell = CellSpec(2e-3, 2e-3, 30e-6, 523.15)
        summary = resolve_rates(cell)
        assert summary.w12 == wall_relaxation(cell)
        assert summary.u == most_probable_speed(523.15, MASS_RB85)
        assert summary.r34 is None

    def test_cell_and_gas(self):
        cell = CellSpec(2e-3, 2e-3, 30e-6, 523.15)
        gas = BufferGasSpec.from_preset(number_density_from_pressure(1066.0, 523.15))
        summary = resolve_rates(cell, gas)
        assert (summary.r34, summary.r43) == collisional_transfer_rates(gas, 523.15)
        assert summary.v_av == mean_relative_speed(523.15, summary.mu)
        assert [name for name, _, _ in summary.as_rows()] == ["w12", "r34", "r43", "u", "v_bar", "v_av", "mu"]

    def test_gas_temperature_overrides_cell(self):
        cell = CellSpec(2e-3, 2e-3, 30e-6, 523.15)
        gas = BufferGasSpec.from_preset(1e23)
        summary = resolve_rates(cell, gas, gas_temperature=330.0)
        assert summary.r34 == collisional_transfer_rates(gas, 330.0)[0]

    def test_gas_needs_a_temperature(self):
        with pytest.raises(ParameterError) as info:
            resolve_rates(gas=BufferGasSpec.from_preset(1e23))
        assert info.value.field_name == "temperature"
