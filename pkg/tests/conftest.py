import pytest

from leanpet.kinetics import KineticsSpec, load_default_ocp
from leanpet.scaling import PhysicalCellParams


def make_baseline_cell(**overrides) -> PhysicalCellParams:
    params = dict(
        thickness_m=1.0e-4,
        separator_thickness_m=5.0e-6,
        porosity=0.5,
        active_loading=0.69,
        particle_radius_m=5.0e-7,
        sigma_s_spm=0.1,
        c_s_max_molpm3=4.95e4,
        c_l_ref_molpm3=1000.0,
        transference=0.38,
        bruggeman_exponent=-0.5,
        temperature_k=298.15,
        c_dl_fpm2=0.2,
        kappa_l_spm=1.0,
        d_l_m2ps=2.0e-10,
    )
    params.update(overrides)
    return PhysicalCellParams(**params)


def make_baseline_kinetics(**overrides) -> KineticsSpec:
    params = dict(
        variant="ecit",
        j0_apm2=5.0,
        alpha=0.5,
        lambda_ev=0.11,
        w_ads_ev=0.025,
        a_plus=1.9,
        temperature_k=298.15,
    )
    params.update(overrides)
    return KineticsSpec(**params)


@pytest.fixture
def baseline_cell() -> PhysicalCellParams:
    return make_baseline_cell()


@pytest.fixture
def baseline_kinetics() -> KineticsSpec:
    return make_baseline_kinetics()


@pytest.fixture(scope="session")
def default_ocp():
    return load_default_ocp()
