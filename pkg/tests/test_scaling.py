"""Scaling-module tests.

Expected numbers were frozen from an independent 50-digit evaluation of the
defining formulas (mpmath), using the same CODATA constants scipy ships.
"""

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leanpet.scaling import (
    PhysicalCellParams,
    compute_groups,
    current_scale_apm2,
    effective_conductivity,
    impedance_scale_ohm_m2,
)

from conftest import make_baseline_cell

# Frozen oracle values for the baseline cell, t_process = 3600 s, j_ref = 5 A/m^2.
ORACLE_THERMAL_VOLTAGE_V = 0.025692579121085849
ORACLE_AREA_DENSITY_1PM = 2.07e6
ORACLE_KAPPA_EFF_SPM = 0.35355339059327376
ORACLE_D_EFF_M2PS = 7.0710678118654752e-11
ORACLE_DA_ELECTROLYTE = 9.4055834498762206
ORACLE_DA_PROCESS = 22.61295197729929
ORACLE_DA_WIRING_ELECTRONIC = 40.28400555359495
ORACLE_DA_WIRING_IONIC = 23.056960877967925
ORACLE_DA_WIRING = 63.340966431562876
ORACLE_DA_CAPACITIVE = 3502957.0046604305
ORACLE_TAU_ELECTROLYTE = 0.019641855032959653
ORACLE_SIGMA_EFF_SPM = 0.063598659482279993
ORACLE_CURRENT_SCALE_1C_APM2 = 45.770229425995186

REL = 1e-12


def rel_err(got, want):
    return abs(got - want) / abs(want)


def baseline_groups():
    return compute_groups(make_baseline_cell(), t_process_s=3600.0, j_ref_apm2=5.0)


class TestDerivedCellQuantities:
    def test_surface_area_density(self):
        cell = make_baseline_cell()
        assert rel_err(cell.surface_area_density_1pm, ORACLE_AREA_DENSITY_1PM) < REL

    def test_active_volume_fraction(self):
        assert rel_err(make_baseline_cell().active_volume_fraction, 0.345) < REL

    def test_thermal_voltage(self):
        cell = make_baseline_cell()
        assert rel_err(cell.thermal_voltage_v, ORACLE_THERMAL_VOLTAGE_V) < REL

    def test_bruggeman_corrections(self):
        cell = make_baseline_cell()
        assert rel_err(cell.effective_conductivity_spm(1000.0), ORACLE_KAPPA_EFF_SPM) < REL
        assert rel_err(cell.effective_diffusivity_m2ps(1000.0), ORACLE_D_EFF_M2PS) < REL

    def test_callable_transport_properties(self):
        cell = make_baseline_cell(
            kappa_l_spm=lambda c: 1.0e-3 * c, d_l_m2ps=lambda c: 2.0e-13 * c
        )
        assert cell.conductivity_spm(500.0) == pytest.approx(0.5)
        assert cell.diffusivity_m2ps(500.0) == pytest.approx(1.0e-10)


class TestBaselineGroups:
    def test_frozen_values(self):
        g = baseline_groups()
        assert rel_err(g.da_electrolyte, ORACLE_DA_ELECTROLYTE) < REL
        assert rel_err(g.da_process, ORACLE_DA_PROCESS) < REL
        assert rel_err(g.da_wiring_electronic, ORACLE_DA_WIRING_ELECTRONIC) < REL
        assert rel_err(g.da_wiring_ionic, ORACLE_DA_WIRING_IONIC) < REL
        assert rel_err(g.da_wiring, ORACLE_DA_WIRING) < REL
        assert rel_err(g.da_capacitive, ORACLE_DA_CAPACITIVE) < REL
        assert rel_err(g.tau_electrolyte, ORACLE_TAU_ELECTROLYTE) < REL

    def test_three_significant_figures_consistency(self):
        # coarse cross-check against independently rounded hand values
        g = baseline_groups()
        assert g.da_process == pytest.approx(22.6, rel=1e-3)
        assert g.da_wiring_electronic == pytest.approx(40.3, rel=1e-3)

    def test_wiring_split_identity(self):
        g = baseline_groups()
        assert g.da_wiring == g.da_wiring_electronic + g.da_wiring_ionic

    def test_effective_conductivity_matches_groups(self):
        cell = make_baseline_cell()
        sigma_eff = effective_conductivity(cell, 5.0)
        assert rel_err(sigma_eff, ORACLE_SIGMA_EFF_SPM) < REL
        # da_wiring computed from sigma_eff must match the three-term sum
        g = baseline_groups()
        reaction = (
            cell.thickness_m**2 * 5.0 * cell.surface_area_density_1pm
        )
        da_w_from_sigma = reaction / (cell.thermal_voltage_v * sigma_eff)
        assert rel_err(da_w_from_sigma, g.da_wiring) < 1e-10

    def test_current_scale(self):
        cell = make_baseline_cell()
        assert (
            rel_err(current_scale_apm2(cell, 3600.0), ORACLE_CURRENT_SCALE_1C_APM2)
            < REL
        )

    def test_impedance_scale_is_thickness_over_sigma_eff(self):
        cell = make_baseline_cell()
        g = baseline_groups()
        want = cell.thickness_m / effective_conductivity(cell, 5.0)
        assert rel_err(impedance_scale_ohm_m2(cell, g), want) < 1e-12

    def test_without_polarization_resistance(self):
        g = baseline_groups()
        hf = g.without_polarization_resistance()
        assert hf.da_polarization == 0.0
        assert hf.da_wiring == pytest.approx(
            g.da_wiring_electronic + (g.da_wiring_ionic - g.da_polarization), rel=1e-14
        )
        assert hf.da_wiring == hf.da_wiring_electronic + hf.da_wiring_ionic
        # untouched groups unchanged
        assert hf.da_process == g.da_process
        assert hf.da_electrolyte == g.da_electrolyte

    def test_rescaled_process_time(self):
        g = baseline_groups()
        r = g.rescaled(1.0)
        assert rel_err(r.da_process, g.da_process / 3600.0) < 1e-14
        assert rel_err(r.da_capacitive, g.da_capacitive / 3600.0) < 1e-14
        assert rel_err(r.tau_electrolyte, g.tau_electrolyte * 3600.0) < 1e-14
        assert r.da_wiring == g.da_wiring
        assert r.da_electrolyte == g.da_electrolyte
        assert r.t_process_s == 1.0

    def test_asdict_roundtrip(self):
        g = baseline_groups()
        d = g.asdict()
        assert d["da_wiring"] == g.da_wiring
        assert set(d) == {f.name for f in dataclasses.fields(g)}


positive_cells = st.builds(
    make_baseline_cell,
    porosity=st.floats(0.1, 0.9),
    active_loading=st.floats(0.2, 1.0),
    sigma_s_spm=st.floats(1e-3, 1e2),
    kappa_l_spm=st.floats(1e-2, 1e1),
    d_l_m2ps=st.floats(1e-11, 1e-9),
    c_l_ref_molpm3=st.floats(100.0, 5000.0),
    transference=st.floats(0.05, 0.95),
)


class TestGroupProperties:
    @settings(max_examples=60, deadline=None)
    @given(cell=positive_cells, j_ref=st.floats(0.1, 50.0), scale=st.floats(1.5, 20.0))
    def test_groups_linear_in_reference_current(self, cell, j_ref, scale):
        g1 = compute_groups(cell, 3600.0, j_ref)
        g2 = compute_groups(cell, 3600.0, j_ref * scale)
        for name in (
            "da_electrolyte",
            "da_process",
            "da_wiring",
            "da_wiring_electronic",
            "da_wiring_ionic",
            "da_capacitive",
        ):
            assert rel_err(getattr(g2, name), scale * getattr(g1, name)) < 1e-12
        assert g2.tau_electrolyte == g1.tau_electrolyte

    @settings(max_examples=60, deadline=None)
    @given(cell=positive_cells, j_ref=st.floats(0.1, 50.0))
    def test_all_groups_positive_and_split_exact(self, cell, j_ref):
        g = compute_groups(cell, 3600.0, j_ref)
        for name, value in g.asdict().items():
            assert value > 0.0, name
        assert g.da_wiring == g.da_wiring_electronic + g.da_wiring_ionic

    @settings(max_examples=60, deadline=None)
    @given(cell=positive_cells)
    def test_effective_conductivity_bounded_by_both_phases(self, cell):
        sigma_eff = effective_conductivity(cell, 5.0)
        kappa_eff = cell.effective_conductivity_spm(cell.c_l_ref_molpm3)
        assert 0.0 < sigma_eff <= min(cell.sigma_s_spm, kappa_eff)


class TestValidation:
    @pytest.mark.parametrize(
        "field,value",
        [
            ("thickness_m", 0.0),
            ("thickness_m", -1e-4),
            ("porosity", 0.0),
            ("porosity", 1.0),
            ("active_loading", 0.0),
            ("active_loading", 1.2),
            ("particle_radius_m", -5e-7),
            ("sigma_s_spm", 0.0),
            ("c_s_max_molpm3", 0.0),
            ("c_l_ref_molpm3", -1.0),
            ("transference", 0.0),
            ("transference", 1.0),
            ("temperature_k", 0.0),
            ("c_dl_fpm2", -0.1),
            ("kappa_l_spm", 0.0),
            ("d_l_m2ps", -2e-10),
            ("bruggeman_exponent", 1.5),
        ],
    )
    def test_rejects_bad_field(self, field, value):
        with pytest.raises(ValueError, match=field):
            make_baseline_cell(**{field: value})

    def test_rejects_bad_process_time(self):
        with pytest.raises(ValueError, match="t_process_s"):
            compute_groups(make_baseline_cell(), 0.0, 5.0)

    def test_rejects_bad_reference_current(self):
        with pytest.raises(ValueError, match="j_ref_apm2"):
            compute_groups(make_baseline_cell(), 3600.0, -5.0)
