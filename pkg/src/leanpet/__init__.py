"""leanpet: reduced-order porous-electrode battery models.

Closed-form galvanostatic, voltage-pulse, and impedance responses of a
reaction-limited porous intercalation electrode, the dimensionless groups
that organize them, finite-volume reference solvers for validation, and
ensemble MCMC identification of the groups from discharge data.
"""

__version__ = "0.1.0"

from .scaling import (
    DimensionlessGroups,
    PhysicalCellParams,
    compute_groups,
    current_scale_apm2,
    effective_conductivity,
    impedance_scale_ohm_m2,
)
from .kinetics import (
    KineticsSpec,
    OcpCurve,
    adsorbed_fraction,
    filling_sensitivity,
    linearize,
    load_default_ocp,
    rate,
    rate_partials,
    zero_bias_filling,
)
from .analytic import (
    DischargeCurve,
    ImpedanceResult,
    OverpotentialProfile,
    PolarizationCorrection,
    PulseResponse,
    cell_voltage,
    coarse_wiring_ok,
    electrolyte_sensitivity,
    hierarchical_wiring,
    impedance,
    impedance_spectrum,
    overpotential_profile,
    polarization_correction,
    pulse_current,
    rest_shift_slope_v,
    rest_shift_v,
    rest_voltage_v,
    simulate_discharge,
    validity_bound,
)

from .refsolver import (
    ElectrodeState,
    Grid1D,
    LeanResult,
    NonlinearResult,
    Protocol,
    SolverError,
    equilibrium_overpotential,
    extract_impedance,
    fit_sinusoid,
    open_circuit_voltage_v,
    rmse,
    separator_resistance_ohm_m2,
    solve_lean,
    solve_nonlinear,
)

from .inference import (
    ChiSquareLandscape,
    FitProblem,
    Observations,
    PosteriorSample,
    SamplerStuckError,
    chi_square_landscape,
    count_histogram_modes,
    ensemble_mcmc,
    integrated_autocorrelation_time,
    modified_groups,
    run_stretch_sampler,
    synthesize_data,
)

__all__ = [
    "DimensionlessGroups",
    "PhysicalCellParams",
    "compute_groups",
    "current_scale_apm2",
    "effective_conductivity",
    "impedance_scale_ohm_m2",
    "KineticsSpec",
    "OcpCurve",
    "adsorbed_fraction",
    "filling_sensitivity",
    "linearize",
    "load_default_ocp",
    "rate",
    "rate_partials",
    "zero_bias_filling",
    "DischargeCurve",
    "ImpedanceResult",
    "OverpotentialProfile",
    "PolarizationCorrection",
    "PulseResponse",
    "cell_voltage",
    "coarse_wiring_ok",
    "electrolyte_sensitivity",
    "hierarchical_wiring",
    "impedance",
    "impedance_spectrum",
    "overpotential_profile",
    "polarization_correction",
    "pulse_current",
    "rest_shift_slope_v",
    "rest_shift_v",
    "rest_voltage_v",
    "simulate_discharge",
    "validity_bound",
    "ElectrodeState",
    "Grid1D",
    "LeanResult",
    "NonlinearResult",
    "Protocol",
    "SolverError",
    "equilibrium_overpotential",
    "extract_impedance",
    "fit_sinusoid",
    "open_circuit_voltage_v",
    "rmse",
    "separator_resistance_ohm_m2",
    "solve_lean",
    "solve_nonlinear",
    "ChiSquareLandscape",
    "FitProblem",
    "Observations",
    "PosteriorSample",
    "SamplerStuckError",
    "chi_square_landscape",
    "count_histogram_modes",
    "ensemble_mcmc",
    "integrated_autocorrelation_time",
    "modified_groups",
    "run_stretch_sampler",
    "synthesize_data",
    "__version__",
]
