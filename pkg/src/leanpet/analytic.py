"""Closed-form responses of a reaction-limited porous electrode.

The reduced model treats the electrode as a slab with uniform particle
filling, linearized interfacial kinetics with slope ``f`` (per unit
dimensionless overpotential), and charge delivered through two resistive
channels: the electronic matrix (entering at the collector side, x = 1) and
the ionic pore network (entering at the separator side, x = 0).  With
``modulus = sqrt(da_wiring * f)`` the steady overpotential profile is a pair
of exponential boundary layers; everything else in this module (cell voltage,
galvanostatic discharge, voltage-step transients, small-signal impedance, the
electrolyte-polarization correction, and the agglomerate wiring correction)
is built from that closed form.

Sign conventions: positive current discharges (lithiates) the electrode, so
operating overpotentials are negative and the cell voltage sits below the
open-circuit potential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .kinetics import (
    KineticsSpec,
    OcpCurve,
    adsorbed_fraction,
    linearize,
    rate,
    rate_partials,
)
from .scaling import (
    DimensionlessGroups,
    PhysicalCellParams,
    compute_groups,
    current_scale_apm2,
    impedance_scale_ohm_m2,
)

_SERIES_CUTOFF = 1e-3


def _shape_factor(u, modulus):
    """S(u) = modulus * cosh(modulus*u) / sinh(modulus), overflow-free.

    Integrates to 1 over u in [-1, 0] or [0, 1] and tends to 1 as the modulus
    vanishes.  Stable for any modulus >= 0 and u within (a small margin of)
    the unit interval.
    """
    u = np.asarray(u, dtype=float)
    m = float(modulus)
    if m < _SERIES_CUTOFF:
        u2 = np.square(u)
        correction = u2 / 2.0 - 1.0 / 6.0
        quartic = np.square(u2) / 24.0 - u2 / 12.0 + 7.0 / 360.0
        return 1.0 + m * m * (correction + m * m * quartic)
    decay = np.exp(-2.0 * m)
    return m * (np.exp(m * (u - 1.0)) + np.exp(-m * (u + 1.0))) / (1.0 - decay)


def _shape_slope(u, modulus):
    """Derivative of the shape factor: modulus^2 * sinh(m*u)/sinh(m)."""
    u = np.asarray(u, dtype=float)
    m = float(modulus)
    if m < _SERIES_CUTOFF:
        return m * m * (u + m * m * (u**3 / 6.0 - u / 6.0))
    decay = np.exp(-2.0 * m)
    return (
        m * m * (np.exp(m * (u - 1.0)) - np.exp(-m * (u + 1.0))) / (1.0 - decay)
    )


@dataclass(frozen=True)
class OverpotentialProfile:
    """Steady dimensionless overpotential across the electrode at fixed current.

    ``amplitude = current / (da_process * kinetic_slope)`` carries the scale;
    the two weights split the wiring between the ionic entry at x = 0 and the
    electronic entry at x = 1.
    """

    amplitude: float
    modulus: float
    weight_ionic: float
    weight_electronic: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = -self.amplitude * (
            self.weight_ionic * _shape_factor(x - 1.0, self.modulus)
            + self.weight_electronic * _shape_factor(x, self.modulus)
        )
        if out.ndim == 0:
            return float(out)
        return out

    def slope(self, x):
        x = np.asarray(x, dtype=float)
        out = -self.amplitude * (
            self.weight_ionic * _shape_slope(x - 1.0, self.modulus)
            + self.weight_electronic * _shape_slope(x, self.modulus)
        )
        if out.ndim == 0:
            return float(out)
        return out

    @property
    def mean(self) -> float:
        """Exact spatial mean; equals -current/(da_process * kinetic_slope)."""
        return -self.amplitude * (self.weight_ionic + self.weight_electronic)

    def voltage_terms(self) -> tuple[float, float, float]:
        """(eta(0), eta(1), eta'(0)) as needed by the cell-voltage formula."""
        m2 = self.modulus**2
        return (
            self(0.0),
            self(1.0),
            self.amplitude * self.weight_ionic * m2,
        )


def overpotential_profile(
    groups: DimensionlessGroups, kinetic_slope: float, current: float = 1.0
) -> OverpotentialProfile:
    """Closed-form profile for a given current multiple of the process scale."""
    if not kinetic_slope > 0.0:
        raise ValueError(f"kinetic_slope must be > 0; got {kinetic_slope}")
    w_sigma = groups.electronic_fraction()
    return OverpotentialProfile(
        amplitude=current / (groups.da_process * kinetic_slope),
        modulus=math.sqrt(groups.da_wiring * kinetic_slope),
        weight_ionic=1.0 - w_sigma,
        weight_electronic=w_sigma,
    )


def rest_shift_v(kin: KineticsSpec, filling, electrolyte=1.0):
    """Zero-current voltage offset of the tangent linear rate model.

    The linearization is taken at zero bias; when the rate does not vanish
    there (asymmetric adsorption-limited kinetics away from the zero-bias
    filling) the linear model rests at ``rate/slope`` thermal voltages above
    the tabulated open-circuit value.  Zero for the symmetric variants.
    """
    if kin.variant != "ecit":
        return 0.0 if np.ndim(filling) == 0 else np.zeros(np.shape(filling))
    f = linearize(kin, filling, electrolyte)
    return kin.thermal_voltage_v * rate(kin, filling, electrolyte, 0.0) / f


def rest_shift_slope_v(kin: KineticsSpec, filling, electrolyte=1.0):
    """Filling derivative of ``rest_shift_v``."""
    if kin.variant != "ecit":
        return 0.0 if np.ndim(filling) == 0 else np.zeros(np.shape(filling))
    c_ads = adsorbed_fraction(kin, electrolyte)
    return (
        -4.0
        * kin.thermal_voltage_v
        * c_ads
        / np.square(c_ads + np.asarray(filling, dtype=float))
    )


def rest_voltage_v(kin: KineticsSpec, ocv: OcpCurve, filling, electrolyte=1.0):
    """Open-circuit terminal voltage of the linearized model."""
    return ocv.value(filling) + rest_shift_v(kin, filling, electrolyte)


def cell_voltage(
    groups: DimensionlessGroups,
    kinetic_slope: float,
    ocv_volts: float,
    thermal_voltage_v: float,
    current: float = 1.0,
    profile=None,
) -> float:
    """Terminal voltage: open-circuit value plus the wiring/kinetic penalty.

    The bracket interpolates between the separator-side interfacial drop and
    the collector-side one according to the electronic share of the wiring;
    it vanishes at zero current, so the open-circuit limit is exact.
    """
    if profile is None:
        profile = overpotential_profile(groups, kinetic_slope, current)
    eta0, eta1, deta0 = profile.voltage_terms()
    w_sigma = groups.electronic_fraction()
    bracket = eta0 + w_sigma * (eta1 - eta0 - deta0)
    return thermal_voltage_v * bracket + ocv_volts


# ---------------------------------------------------------------------------
# Galvanostatic discharge
# ---------------------------------------------------------------------------


@dataclass
class DischargeCurve:
    """Voltage transient of a constant-current (dis)charge."""

    t_s: np.ndarray
    voltage_v: np.ndarray
    mean_filling: np.ndarray
    current_apm2: float
    c_rate: float
    groups: DimensionlessGroups
    hit_cutoff: bool
    validity_ratio_max: float
    corrected: bool
    polarization_flagged: bool = False


def _discharge_voltage_batch(cell, kin, ocv, groups, filling, corrected):
    """Voltage at each mean filling for unit dimensionless current."""
    vt = cell.thermal_voltage_v
    voltages = np.empty_like(filling)
    flagged = False
    for i, c in enumerate(filling):
        f = linearize(kin, c, 1.0)
        u = ocv.value(c) + rest_shift_v(kin, c, 1.0)
        if corrected:
            correction = polarization_correction(
                groups, f, electrolyte_sensitivity(kin, c, 1.0)
            )
            flagged = flagged or correction.strong
            voltages[i] = correction.voltage_v(u, vt)
        else:
            voltages[i] = cell_voltage(groups, f, u, vt)
    return voltages, flagged


def simulate_discharge(
    cell: PhysicalCellParams,
    kin: KineticsSpec,
    ocv: OcpCurve,
    *,
    c_rate: float = 1.0,
    start_filling: float = 0.40,
    cutoff_v: Optional[float] = 3.0,
    n_points: int = 400,
    corrected: bool = False,
) -> DischargeCurve:
    """Constant-current discharge until the voltage cutoff or the table edge.

    The mean filling advances linearly in time (exact for this model); the
    cutoff crossing is located by bisection and the returned grid is uniform
    with the final sample exactly on the cutoff (when one is hit).
    """
    if not c_rate > 0.0:
        raise ValueError(f"c_rate must be > 0; got {c_rate}")
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2; got {n_points}")
    t_process_s = 3600.0 / c_rate
    groups = compute_groups(cell, t_process_s, kin.j0_apm2)
    if not ocv.filling_min <= start_filling < ocv.filling_max:
        raise ValueError(
            f"start_filling {start_filling} outside table "
            f"[{ocv.filling_min}, {ocv.filling_max})"
        )

    span = ocv.filling_max - start_filling

    def voltage_at(dt):
        c = start_filling + dt
        v, _ = _discharge_voltage_batch(
            cell, kin, ocv, groups, np.array([c]), corrected
        )
        return float(v[0])

    hit_cutoff = False
    t_stop = span
    if cutoff_v is not None:
        if voltage_at(0.0) <= cutoff_v:
            raise ValueError(
                f"voltage already at or below cutoff {cutoff_v} V at start"
            )
        # scan for the first crossing, then refine
        probe = np.linspace(0.0, span, 201)
        values = np.array([voltage_at(p) for p in probe])
        below = np.nonzero(values <= cutoff_v)[0]
        if below.size:
            k = below[0]
            t_stop = brentq(
                lambda dt: voltage_at(dt) - cutoff_v,
                probe[k - 1],
                probe[k],
                xtol=1e-12,
            )
            hit_cutoff = True

    tt = np.linspace(0.0, t_stop, n_points)
    filling = start_filling + tt
    voltage, flagged = _discharge_voltage_batch(
        cell, kin, ocv, groups, filling, corrected
    )
    ratio = max(
        validity_bound(groups, kin, ocv, c) for c in (filling[0], filling[-1], 0.5 * (filling[0] + filling[-1]))
    )
    return DischargeCurve(
        t_s=tt * t_process_s,
        voltage_v=voltage,
        mean_filling=filling,
        current_apm2=current_scale_apm2(cell, t_process_s),
        c_rate=c_rate,
        groups=groups,
        hit_cutoff=hit_cutoff,
        validity_ratio_max=float(ratio),
        corrected=corrected,
        polarization_flagged=flagged,
    )


# ---------------------------------------------------------------------------
# Voltage-step (pulse) response
# ---------------------------------------------------------------------------


@dataclass
class PulseResponse:
    """Current transient after a voltage step at fixed applied potential."""

    t_s: np.ndarray
    current_apm2: np.ndarray
    mean_filling: np.ndarray
    current_ode_apm2: Optional[np.ndarray]
    equilibrium_filling: float
    rate_constant_1ps: float
    step_v: float
    relative_gap: Optional[float]


def _voltage_bracket_batch(da_wiring, da_process, w_sigma, slopes):
    """d(voltage)/d(current) in thermal-voltage units, broadcasting.

    Same arithmetic as the profile path, written so the wiring groups and
    the kinetic slopes may be arrays (the identification loops evaluate
    thousands of (groups, slope) pairs per second).  ``s_end`` and ``s_mid``
    are the end-face and far-face shape factors.
    """
    slopes = np.asarray(slopes, dtype=float)
    amp = 1.0 / (da_process * slopes)
    m = np.sqrt(da_wiring * slopes)
    m2 = np.square(m)
    series_end = 1.0 + m2 * (1.0 / 3.0 + m2 * (-1.0 / 45.0))
    series_mid = 1.0 + m2 * (-1.0 / 6.0 + m2 * (7.0 / 360.0))
    m_safe = np.maximum(m, _SERIES_CUTOFF)
    decay = np.exp(-2.0 * m_safe)
    exp_end = m_safe * (1.0 + decay) / (1.0 - decay)
    exp_mid = 2.0 * m_safe * np.exp(-m_safe) / (1.0 - decay)
    small = m < _SERIES_CUTOFF
    s_end = np.where(small, series_end, exp_end)
    s_mid = np.where(small, series_mid, exp_mid)
    w_kappa = 1.0 - w_sigma
    eta0 = -amp * (w_kappa * s_end + w_sigma * s_mid)
    eta1 = -amp * (w_kappa * s_mid + w_sigma * s_end)
    deta0 = amp * w_kappa * m2
    return eta0 + w_sigma * (eta1 - eta0 - deta0)


def _voltage_bracket_per_current(groups, kinetic_slope) -> float:
    """d(voltage)/d(current) in thermal-voltage units; negative."""
    return float(
        _voltage_bracket_batch(
            groups.da_wiring,
            groups.da_process,
            groups.electronic_fraction(),
            kinetic_slope,
        )
    )


def pulse_current(
    cell: PhysicalCellParams,
    kin: KineticsSpec,
    ocv: OcpCurve,
    *,
    start_filling: float,
    step_v: float,
    t_end_s: Optional[float] = None,
    n_points: int = 400,
    method: str = "both",
) -> PulseResponse:
    """Relaxation current after stepping the terminal voltage by ``step_v``.

    A negative step discharges the electrode.  The default output is the
    exact linearization of the response around the new equilibrium filling
    (a single decaying exponential); ``method="ode"`` integrates the full
    nonlinear mean-filling balance instead and ``"both"`` returns the two
    together with their relative root-mean-square gap.
    """
    if method not in ("linearized", "ode", "both"):
        raise ValueError(f"method must be linearized|ode|both; got {method!r}")
    if step_v == 0.0:
        raise ValueError("step_v must be nonzero")
    t_process_s = 3600.0
    groups = compute_groups(cell, t_process_s, kin.j0_apm2)
    vt = cell.thermal_voltage_v
    v_app = rest_voltage_v(kin, ocv, start_filling) + step_v
    lo, hi = ocv.filling_min, ocv.filling_max
    v_top = rest_voltage_v(kin, ocv, lo)
    v_bot = rest_voltage_v(kin, ocv, hi)
    if not v_bot <= v_app <= v_top:
        raise ValueError(
            f"stepped voltage {v_app} outside rest-curve range [{v_bot}, {v_top}]"
        )
    c_eq = float(
        brentq(
            lambda c: rest_voltage_v(kin, ocv, c) - v_app, lo, hi, xtol=1e-12
        )
    )

    def mean_current(c):
        bracket = _voltage_bracket_per_current(groups, linearize(kin, c, 1.0))
        return (v_app - rest_voltage_v(kin, ocv, c)) / (vt * bracket)

    b_eq = _voltage_bracket_per_current(groups, linearize(kin, c_eq, 1.0))
    rest_slope = ocv.slope(c_eq) + rest_shift_slope_v(kin, c_eq)
    k_tilde = rest_slope / (vt * b_eq)  # both factors negative
    if not k_tilde > 0.0:
        raise ValueError("relaxation rate must be positive; check the curve")

    t_end = (t_end_s / t_process_s) if t_end_s is not None else 4.0 / k_tilde
    tt = np.linspace(0.0, t_end, n_points)
    decay = np.exp(-k_tilde * tt)
    current_lin = k_tilde * (c_eq - start_filling) * decay
    filling_lin = c_eq + (start_filling - c_eq) * decay

    current_ode = None
    gap = None
    if method in ("ode", "both"):
        sol = solve_ivp(
            lambda _t, c: mean_current(c[0]),
            (0.0, t_end),
            [start_filling],
            t_eval=tt,
            rtol=1e-10,
            atol=1e-12,
            method="RK45",
        )
        if not sol.success:
            raise RuntimeError(f"pulse ODE integration failed: {sol.message}")
        current_ode = np.array([mean_current(c) for c in sol.y[0]])
        norm = math.sqrt(float(np.mean(np.square(current_ode))))
        gap = math.sqrt(float(np.mean(np.square(current_lin - current_ode)))) / norm

    i_scale = current_scale_apm2(cell, t_process_s)
    return PulseResponse(
        t_s=tt * t_process_s,
        current_apm2=(current_ode if method == "ode" else current_lin) * i_scale,
        mean_filling=filling_lin,
        current_ode_apm2=None if current_ode is None else current_ode * i_scale,
        equilibrium_filling=c_eq,
        rate_constant_1ps=k_tilde / t_process_s,
        step_v=step_v,
        relative_gap=gap,
    )


# ---------------------------------------------------------------------------
# Small-signal impedance
# ---------------------------------------------------------------------------


def impedance(
    groups: DimensionlessGroups,
    kinetic_slope: float,
    ocv_slope_scaled: float,
    freq_hz,
    z_ref_ohm_m2: float = 1.0,
):
    """Complex area-specific impedance of the electrode.

    ``ocv_slope_scaled`` is the open-circuit slope over the thermal voltage
    (nonpositive); it produces the low-frequency capacitive tail through the
    blocking factor.  Frequencies are in hertz and converted with the process
    time carried by ``groups``; zero frequency is only admissible on a flat
    open-circuit curve.
    """
    if not kinetic_slope > 0.0:
        raise ValueError(f"kinetic_slope must be > 0; got {kinetic_slope}")
    if ocv_slope_scaled > 0.0:
        raise ValueError(
            f"ocv_slope_scaled must be <= 0; got {ocv_slope_scaled}"
        )
    scalar = np.ndim(freq_hz) == 0
    freq = np.atleast_1d(np.asarray(freq_hz, dtype=float))
    omega = 2.0 * np.pi * freq * groups.t_process_s
    f = kinetic_slope
    s = ocv_slope_scaled
    if s == 0.0:
        blocking = np.ones_like(omega, dtype=complex)
    else:
        if np.any(omega == 0.0):
            raise ValueError("zero frequency diverges on a sloped curve")
        blocking = 1.0 - s * groups.da_process * f / (1j * omega)
    omega_sq = (groups.da_wiring / blocking) * (
        f
        + 1j * omega / groups.da_capacitive
        - groups.da_process * f * s / groups.da_capacitive
    )
    mod = np.sqrt(omega_sq)

    w_sigma = groups.electronic_fraction()
    w_kappa = 1.0 - w_sigma
    q = np.empty_like(mod)
    small = np.abs(mod) < _SERIES_CUTOFF
    if np.any(small):
        m2 = omega_sq[small]
        q[small] = (
            1.0 / m2
            + 1.0 / 3.0
            + m2 * (7.0 * w_kappa * w_sigma / 180.0 - (w_sigma**2 + w_kappa**2) / 45.0)
        )
    if np.any(~small):
        m = mod[~small]
        decay = np.exp(-2.0 * m)
        coth = (1.0 + decay) / (1.0 - decay)
        inv_msinh = 2.0 * np.exp(-m) / (m * (1.0 - decay))
        q[~small] = w_kappa * w_sigma * (1.0 + 2.0 * inv_msinh) + (
            w_sigma**2 + w_kappa**2
        ) * coth / m
    out = z_ref_ohm_m2 * q
    if scalar:
        return complex(out[0])
    return out


@dataclass
class ImpedanceResult:
    freq_hz: np.ndarray
    z_ohm_m2: np.ndarray
    z_ref_ohm_m2: float
    kinetic_slope: float
    ocv_slope_scaled: float
    filling: float
    groups: DimensionlessGroups


def impedance_spectrum(
    cell: PhysicalCellParams,
    kin: KineticsSpec,
    ocv: OcpCurve,
    freq_hz,
    filling: Optional[float] = None,
    include_polarization: bool = False,
) -> ImpedanceResult:
    """Impedance of the cell at a rest state, dimensional and ready to plot.

    By default the steady diffusion-polarization term is removed from the
    wiring group: it is a DC penalty that small-signal cycling above the
    salt-diffusion rolloff never develops.
    """
    from .kinetics import zero_bias_filling

    if filling is None:
        filling = zero_bias_filling(kin)
    groups = compute_groups(cell, 1.0, kin.j0_apm2)
    if not include_polarization:
        groups = groups.without_polarization_resistance()
    f = linearize(kin, filling, 1.0)
    # blocking factor uses the full small-signal rest-curve slope
    slope = (
        ocv.slope(filling) + rest_shift_slope_v(kin, filling)
    ) / cell.thermal_voltage_v
    z_ref = impedance_scale_ohm_m2(cell, groups)
    freq = np.atleast_1d(np.asarray(freq_hz, dtype=float))
    z = impedance(groups, f, slope, freq, z_ref)
    return ImpedanceResult(
        freq_hz=freq,
        z_ohm_m2=np.atleast_1d(z),
        z_ref_ohm_m2=z_ref,
        kinetic_slope=f,
        ocv_slope_scaled=slope,
        filling=filling,
        groups=groups,
    )


# ---------------------------------------------------------------------------
# Validity bound
# ---------------------------------------------------------------------------


def validity_bound(
    groups: DimensionlessGroups,
    kin: KineticsSpec,
    ocv: OcpCurve,
    filling: float,
    electrolyte: float = 1.0,
) -> float:
    """Ratio comparing wiring stiffness against state-stiffness; < 1 is valid.

    The denominator collects how fast the operating point restiffens with
    filling: through the kinetic slope and through the open-circuit slope.
    Large wiring groups are only admissible when that restoring term is
    larger still.
    """
    from .kinetics import filling_sensitivity

    f = linearize(kin, filling, electrolyte)
    slope_scaled = ocv.slope(filling) / kin.thermal_voltage_v
    restoring = filling_sensitivity(kin, filling, electrolyte) / f**2 + (
        groups.da_process * slope_scaled
    )
    return abs(groups.da_wiring / restoring)


def coarse_wiring_ok(groups: DimensionlessGroups) -> bool:
    """Rule-of-thumb counterpart of the validity bound."""
    return groups.da_wiring <= 100.0 * groups.da_process


# ---------------------------------------------------------------------------
# Electrolyte-polarization correction
# ---------------------------------------------------------------------------


def electrolyte_sensitivity(
    kin: KineticsSpec, filling: float, electrolyte: float = 1.0
) -> float:
    """Relative sensitivity of the rate to the local salt concentration."""
    f = linearize(kin, filling, electrolyte)
    _, dj_dcl = rate_partials(kin, filling, electrolyte, 0.0)
    return dj_dcl / f


@dataclass(frozen=True)
class PolarizationCorrection:
    """First-order electrolyte-depletion correction to the steady profile.

    Solves the coupled overpotential/salt problem with linear kinetics; the
    salt perturbation has zero mean (influx through the separator face
    exactly balances consumption) and zero slope at the collector face.
    """

    groups: DimensionlessGroups
    kinetic_slope: float
    sensitivity: float
    current: float
    b_modulus: float = field(init=False)
    _p_ionic: float = field(init=False)
    _p_electronic: float = field(init=False)
    _m_lin: float = field(init=False)
    _q_lin: float = field(init=False)

    def __post_init__(self):
        g = self.groups
        f = self.kinetic_slope
        alpha = self.sensitivity
        b_sq = (g.da_wiring + alpha * g.da_electrolyte) * f
        p_ionic = (
            (g.da_wiring_ionic + alpha * g.da_electrolyte)
            * self.current
            / g.da_process
        )
        p_electronic = g.da_wiring_electronic * self.current / g.da_process
        ratio = g.da_electrolyte * f / b_sq
        m_lin = -ratio * p_electronic
        mean_combo = -(p_ionic + p_electronic) / b_sq
        q_lin = ratio * mean_combo - m_lin / 2.0
        object.__setattr__(self, "b_modulus", math.sqrt(b_sq))
        object.__setattr__(self, "_p_ionic", p_ionic)
        object.__setattr__(self, "_p_electronic", p_electronic)
        object.__setattr__(self, "_m_lin", m_lin)
        object.__setattr__(self, "_q_lin", q_lin)

    @property
    def strong(self) -> bool:
        """Perturbation theory is suspect once salt diffusion dominates wiring."""
        return self.groups.da_electrolyte > self.groups.da_wiring

    def _combo(self, x):
        b_sq = self.b_modulus**2
        out = -(
            self._p_ionic * _shape_factor(np.asarray(x, float) - 1.0, self.b_modulus)
            + self._p_electronic * _shape_factor(x, self.b_modulus)
        ) / b_sq
        if out.ndim == 0:
            return float(out)
        return out

    def delta_electrolyte(self, x):
        """Salt-concentration perturbation relative to the reference value."""
        ratio = self.groups.da_electrolyte * self.kinetic_slope / self.b_modulus**2
        out = -ratio * self._combo(x) + self._m_lin * np.asarray(x, float) + self._q_lin
        if out.ndim == 0:
            return float(out)
        return out

    def eta(self, x):
        """Corrected overpotential profile."""
        out = self._combo(x) + self.sensitivity * self.delta_electrolyte(x)
        if np.ndim(out) == 0:
            return float(out)
        return out

    @property
    def mean(self) -> float:
        """Mean corrected overpotential; the salt term integrates away."""
        return -(self._p_ionic + self._p_electronic) / self.b_modulus**2

    def voltage_v(self, ocv_volts: float, thermal_voltage_v: float) -> float:
        g = self.groups
        f = self.kinetic_slope
        b_sq = self.b_modulus**2
        psi0 = self._combo(0.0)
        psi1 = self._combo(1.0)
        bracket = self.eta(0.0) + g.da_wiring_electronic * f / b_sq * (
            psi1 - psi0 - self._p_ionic
        )
        return thermal_voltage_v * bracket + ocv_volts


def polarization_correction(
    groups: DimensionlessGroups,
    kinetic_slope: float,
    sensitivity: float,
    current: float = 1.0,
) -> PolarizationCorrection:
    """Build the electrolyte-polarization correction at the given state."""
    if not kinetic_slope > 0.0:
        raise ValueError(f"kinetic_slope must be > 0; got {kinetic_slope}")
    if sensitivity < 0.0:
        raise ValueError(f"sensitivity must be >= 0; got {sensitivity}")
    return PolarizationCorrection(
        groups=groups,
        kinetic_slope=kinetic_slope,
        sensitivity=sensitivity,
        current=current,
    )


# ---------------------------------------------------------------------------
# Hierarchical (agglomerate) wiring
# ---------------------------------------------------------------------------


def hierarchical_wiring(
    da_wiring: float, da_wiring_secondary: float, kinetic_slope: float
) -> float:
    """Electrode-scale wiring group corrected for intra-agglomerate wiring.

    Secondary particles with internal wiring group ``da_wiring_secondary``
    utilize their interior less as ``da_wiring_secondary * kinetic_slope``
    grows; the correction leaves ``da_wiring`` untouched in the
    well-wired limit and scales it by ``3/u`` (minus the surface term) when
    the interior is screened.
    """
    if not kinetic_slope > 0.0:
        raise ValueError(f"kinetic_slope must be > 0; got {kinetic_slope}")
    if da_wiring_secondary < 0.0 or da_wiring < 0.0:
        raise ValueError("wiring groups must be >= 0")
    u_sq = da_wiring_secondary * kinetic_slope
    if u_sq < 1e-2:
        # series of 3*(u*coth(u) - 1)/u^2
        factor = (
            1.0
            - u_sq / 15.0
            + 2.0 * u_sq**2 / 315.0
            - u_sq**3 / 1575.0
            + 2.0 * u_sq**4 / 31185.0
        )
    else:
        u = math.sqrt(u_sq)
        decay = math.exp(-2.0 * u)
        coth = (1.0 + decay) / (1.0 - decay)
        factor = 3.0 * (u * coth - 1.0) / u_sq
    return da_wiring * factor
