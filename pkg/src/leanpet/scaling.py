"""Cell parameters and the dimensionless groups that control electrode behavior.

The model reduces a porous intercalation electrode to a handful of dimensionless
groups built from a reference current density ``j_ref`` and a process time
``t_process``.  Each group compares the interfacial reaction rate against one
transport or storage process:

``da_electrolyte``
    reaction rate vs. salt diffusion through the pore network,
``da_process``
    process duration vs. the time needed to fill the active material,
``da_wiring``
    reaction rate vs. charge delivery through the combined electronic and
    ionic wiring (including the steady diffusion-polarization penalty),
``da_capacitive``
    faradaic vs. double-layer charging currents,
``tau_electrolyte``
    salt-diffusion time relative to the process time.

All formulas treat the electrode as a uniform slab of thickness ``thickness_m``
filled with spherical active particles.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Union

from scipy import constants

FARADAY_CPMOL = constants.physical_constants["Faraday constant"][0]
GAS_CONSTANT_JPMOLK = constants.R

TransportProperty = Union[float, Callable[[float], float]]


def _as_property_fn(value: TransportProperty, name: str) -> Callable[[float], float]:
    """Normalize a constant or callable transport property to a callable."""
    if callable(value):
        return value
    value = float(value)
    if not value > 0.0:
        raise ValueError(f"{name} must be > 0; got {value}")
    return lambda c_molpm3, _v=value: _v


@dataclass
class PhysicalCellParams:
    """Dimensional description of a porous intercalation electrode half cell.

    Parameters
    ----------
    thickness_m : float
        Electrode coating thickness.
    separator_thickness_m : float
        Separator thickness (lumped as an ohmic layer by the reference solver).
    porosity : float
        Electrolyte volume fraction of the coating, in (0, 1).
    active_loading : float
        Fraction of the solid phase that is active material, in (0, 1].
    particle_radius_m : float
        Radius of the (assumed spherical) active particles.
    sigma_s_spm : float
        Effective electronic conductivity of the porous matrix, S/m.  Used
        as-is; no porosity correction is applied to the solid phase.
    c_s_max_molpm3 : float
        Maximum lithium concentration in the active material.
    c_l_ref_molpm3 : float
        Reference salt concentration of the electrolyte.
    transference : float
        Cation transference number, in (0, 1).
    bruggeman_exponent : float
        Tortuosity exponent; electrolyte transport properties are multiplied
        by ``porosity ** (1 - bruggeman_exponent)`` (so -0.5 gives the
        classical porosity^1.5 correction).
    temperature_k : float
        Cell temperature.
    c_dl_fpm2 : float
        Double-layer capacitance per interfacial area.
    kappa_l_spm : float or callable
        Bulk ionic conductivity of the electrolyte, or a function of salt
        concentration in mol/m^3 returning S/m.
    d_l_m2ps : float or callable
        Bulk salt diffusivity, or a function of concentration returning m^2/s.
    """

    thickness_m: float
    separator_thickness_m: float
    porosity: float
    active_loading: float
    particle_radius_m: float
    sigma_s_spm: float
    c_s_max_molpm3: float
    c_l_ref_molpm3: float
    transference: float = 0.38
    bruggeman_exponent: float = -0.5
    temperature_k: float = 298.15
    c_dl_fpm2: float = 0.2
    kappa_l_spm: TransportProperty = 1.0
    d_l_m2ps: TransportProperty = 2.0e-10

    def __post_init__(self) -> None:
        positive = (
            "thickness_m",
            "separator_thickness_m",
            "particle_radius_m",
            "sigma_s_spm",
            "c_s_max_molpm3",
            "c_l_ref_molpm3",
            "temperature_k",
        )
        for name in positive:
            value = float(getattr(self, name))
            if not value > 0.0:
                raise ValueError(f"{name} must be > 0; got {value}")
            setattr(self, name, value)
        if not 0.0 < self.porosity < 1.0:
            raise ValueError(f"porosity must be in (0, 1); got {self.porosity}")
        if not 0.0 < self.active_loading <= 1.0:
            raise ValueError(
                f"active_loading must be in (0, 1]; got {self.active_loading}"
            )
        if not 0.0 < self.transference < 1.0:
            raise ValueError(
                f"transference must be in (0, 1); got {self.transference}"
            )
        if self.c_dl_fpm2 < 0.0:
            raise ValueError(f"c_dl_fpm2 must be >= 0; got {self.c_dl_fpm2}")
        if self.bruggeman_exponent >= 1.0:
            raise ValueError(
                "bruggeman_exponent must be < 1; got "
                f"{self.bruggeman_exponent}"
            )
        self._kappa_l = _as_property_fn(self.kappa_l_spm, "kappa_l_spm")
        self._d_l = _as_property_fn(self.d_l_m2ps, "d_l_m2ps")

    # -- derived geometry / reference quantities ---------------------------

    @property
    def active_volume_fraction(self) -> float:
        """Volume fraction of active material in the coating."""
        return (1.0 - self.porosity) * self.active_loading

    @property
    def surface_area_density_1pm(self) -> float:
        """Interfacial area per coating volume for spherical particles."""
        return 3.0 * self.active_volume_fraction / self.particle_radius_m

    @property
    def thermal_voltage_v(self) -> float:
        return GAS_CONSTANT_JPMOLK * self.temperature_k / FARADAY_CPMOL

    @property
    def porosity_factor(self) -> float:
        """Bruggeman correction applied to electrolyte transport properties."""
        return self.porosity ** (1.0 - self.bruggeman_exponent)

    # -- transport properties ----------------------------------------------

    def conductivity_spm(self, c_molpm3: float) -> float:
        """Bulk electrolyte conductivity at the given salt concentration."""
        return float(self._kappa_l(c_molpm3))

    def diffusivity_m2ps(self, c_molpm3: float) -> float:
        """Bulk salt diffusivity at the given salt concentration."""
        return float(self._d_l(c_molpm3))

    def effective_conductivity_spm(self, c_molpm3: float) -> float:
        """Porosity-corrected electrolyte conductivity inside the coating."""
        return self.conductivity_spm(c_molpm3) * self.porosity_factor

    def effective_diffusivity_m2ps(self, c_molpm3: float) -> float:
        """Porosity-corrected salt diffusivity inside the coating."""
        return self.diffusivity_m2ps(c_molpm3) * self.porosity_factor


@dataclass(frozen=True)
class DimensionlessGroups:
    """The dimensionless groups for one (cell, process time, current) triple.

    ``da_wiring`` always satisfies
    ``da_wiring == da_wiring_electronic + da_wiring_ionic`` and
    ``da_wiring_ionic`` includes ``da_polarization``, the steady
    diffusion-polarization contribution ``2 (1 - t+) da_electrolyte``.
    """

    da_electrolyte: float
    da_process: float
    da_wiring: float
    da_wiring_electronic: float
    da_wiring_ionic: float
    da_capacitive: float
    tau_electrolyte: float
    da_polarization: float
    t_process_s: float
    j_ref_apm2: float

    def asdict(self) -> dict:
        return dataclasses.asdict(self)

    def rescaled(self, t_process_s: float) -> "DimensionlessGroups":
        """Same cell and current viewed on a different process time."""
        if not t_process_s > 0.0:
            raise ValueError(f"t_process_s must be > 0; got {t_process_s}")
        ratio = t_process_s / self.t_process_s
        return dataclasses.replace(
            self,
            da_process=self.da_process * ratio,
            da_capacitive=self.da_capacitive * ratio,
            tau_electrolyte=self.tau_electrolyte / ratio,
            t_process_s=t_process_s,
        )

    def without_polarization_resistance(self) -> "DimensionlessGroups":
        """Drop the steady diffusion-polarization term from the wiring group.

        That term is a DC effect; small-signal impedance paths should not
        carry it at frequencies above the salt-diffusion rolloff.
        """
        return dataclasses.replace(
            self,
            da_wiring=self.da_wiring - self.da_polarization,
            da_wiring_ionic=self.da_wiring_ionic - self.da_polarization,
            da_polarization=0.0,
        )

    def electronic_fraction(self) -> float:
        """Share of the wiring resistance carried by the solid matrix."""
        if self.da_wiring == 0.0:
            return 0.5
        return self.da_wiring_electronic / self.da_wiring


def current_scale_apm2(cell: PhysicalCellParams, t_process_s: float) -> float:
    """Current density that fills the electrode in exactly ``t_process_s``."""
    if not t_process_s > 0.0:
        raise ValueError(f"t_process_s must be > 0; got {t_process_s}")
    return (
        cell.thickness_m
        * cell.active_volume_fraction
        * FARADAY_CPMOL
        * cell.c_s_max_molpm3
        / t_process_s
    )


def effective_conductivity(cell: PhysicalCellParams, j_ref_apm2: float) -> float:
    """Series-harmonic wiring conductivity: electronic, ionic, polarization.

    The third resistivity term, ``2 R T (1-t+)^2 / (F^2 D_eff c_ref)``, is the
    steady-state diffusion-polarization penalty of the binary electrolyte; it
    is independent of ``j_ref_apm2`` (the argument only fixes the group the
    caller divides by).
    """
    kappa_eff = cell.effective_conductivity_spm(cell.c_l_ref_molpm3)
    d_eff = cell.effective_diffusivity_m2ps(cell.c_l_ref_molpm3)
    rt = GAS_CONSTANT_JPMOLK * cell.temperature_k
    rho_polarization = (
        2.0
        * rt
        * (1.0 - cell.transference) ** 2
        / (FARADAY_CPMOL**2 * d_eff * cell.c_l_ref_molpm3)
    )
    return 1.0 / (1.0 / cell.sigma_s_spm + 1.0 / kappa_eff + rho_polarization)


def compute_groups(
    cell: PhysicalCellParams,
    t_process_s: float,
    j_ref_apm2: float,
) -> DimensionlessGroups:
    """Evaluate every dimensionless group at the reference state.

    Transport properties are frozen at ``c_l_ref_molpm3``; concentration
    dependence only enters through the reference solver.
    """
    if not t_process_s > 0.0:
        raise ValueError(f"t_process_s must be > 0; got {t_process_s}")
    if not j_ref_apm2 > 0.0:
        raise ValueError(f"j_ref_apm2 must be > 0; got {j_ref_apm2}")

    length = cell.thickness_m
    area_density = cell.surface_area_density_1pm
    rt = GAS_CONSTANT_JPMOLK * cell.temperature_k
    kappa_eff = cell.effective_conductivity_spm(cell.c_l_ref_molpm3)
    d_eff = cell.effective_diffusivity_m2ps(cell.c_l_ref_molpm3)
    reaction_rate = length**2 * j_ref_apm2 * area_density

    da_electrolyte = (
        reaction_rate
        * (1.0 - cell.transference)
        / (FARADAY_CPMOL * d_eff * cell.c_l_ref_molpm3)
    )
    da_process = (
        t_process_s
        * j_ref_apm2
        * area_density
        / (cell.active_volume_fraction * FARADAY_CPMOL * cell.c_s_max_molpm3)
    )
    da_wiring_electronic = FARADAY_CPMOL * reaction_rate / (rt * cell.sigma_s_spm)
    da_wiring_ionic_ohmic = FARADAY_CPMOL * reaction_rate / (rt * kappa_eff)
    da_polarization = 2.0 * (1.0 - cell.transference) * da_electrolyte
    da_capacitive = FARADAY_CPMOL * j_ref_apm2 * t_process_s / (rt * cell.c_dl_fpm2)
    tau_electrolyte = cell.porosity * length**2 / (d_eff * t_process_s)
    da_wiring_ionic = da_wiring_ionic_ohmic + da_polarization

    return DimensionlessGroups(
        da_electrolyte=da_electrolyte,
        da_process=da_process,
        da_wiring=da_wiring_electronic + da_wiring_ionic,
        da_wiring_electronic=da_wiring_electronic,
        da_wiring_ionic=da_wiring_ionic,
        da_capacitive=da_capacitive,
        tau_electrolyte=tau_electrolyte,
        da_polarization=da_polarization,
        t_process_s=t_process_s,
        j_ref_apm2=j_ref_apm2,
    )


def impedance_scale_ohm_m2(
    cell: PhysicalCellParams, groups: DimensionlessGroups
) -> float:
    """Area-specific resistance scale of the wiring seen by the cell voltage.

    Equals ``thickness / sigma_eff`` when ``groups`` carries the full wiring
    group, and the polarization-free analog after
    ``without_polarization_resistance()``.
    """
    i_scale = current_scale_apm2(cell, groups.t_process_s)
    return (
        groups.da_wiring / groups.da_process * cell.thermal_voltage_v / i_scale
    )
