"""Interfacial rate laws and the open-circuit-potential curve.

All rates are dimensionless: ``rate`` returns the interfacial current divided
by the exchange-current scale ``j0_apm2``, positive for reduction
(lithiation).  Inputs are the particle filling fraction ``filling`` (0..1),
the local salt concentration ``electrolyte`` relative to its reference value,
and the dimensionless overpotential ``overpotential`` (volts divided by the
thermal voltage), defined as the interfacial voltage minus its equilibrium
value at the current filling.

Three variants are provided:

``"bv"``
    classical Butler-Volmer with concentration-dependent prefactor,
``"icet"``
    ion-coupled electron transfer: Butler-Volmer exponentials with a
    site-blocking prefactor,
``"ecit"``
    electron-coupled ion transfer: the transition is rate-limited by a
    solvent-reorganization cap (closed-form Marcus-Hush-Chidsey factor) and
    the cation supply is the fraction adsorbed in the inner layer, set by the
    local electrolyte activity and an adsorption energy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq
from scipy.special import erfc, expit

from .scaling import FARADAY_CPMOL, GAS_CONSTANT_JPMOLK

_VARIANTS = ("ecit", "bv", "icet")
_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)


@dataclass(frozen=True)
class KineticsSpec:
    """Parameters of one interfacial rate law.

    ``lambda_ev`` (solvent reorganization energy), ``w_ads_ev`` (adsorption
    energy) and ``a_plus`` (electrolyte activity coefficient) only matter for
    the ``"ecit"`` variant; ``alpha`` only for ``"bv"`` and ``"icet"``.
    ``temperature_k`` must match the cell this rate law is used with.
    """

    variant: str = "ecit"
    j0_apm2: float = 5.0
    alpha: float = 0.5
    lambda_ev: float = 0.11
    w_ads_ev: float = 0.025
    a_plus: float = 1.9
    temperature_k: float = 298.15

    def __post_init__(self) -> None:
        if self.variant not in _VARIANTS:
            raise ValueError(
                f"variant must be one of {_VARIANTS}; got {self.variant!r}"
            )
        if not self.j0_apm2 > 0.0:
            raise ValueError(f"j0_apm2 must be > 0; got {self.j0_apm2}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1); got {self.alpha}")
        if not self.temperature_k > 0.0:
            raise ValueError(f"temperature_k must be > 0; got {self.temperature_k}")
        if self.variant == "ecit":
            if not self.lambda_ev > 0.0:
                raise ValueError(f"lambda_ev must be > 0; got {self.lambda_ev}")
            if not self.a_plus > 0.0:
                raise ValueError(f"a_plus must be > 0; got {self.a_plus}")

    @property
    def thermal_voltage_v(self) -> float:
        return GAS_CONSTANT_JPMOLK * self.temperature_k / FARADAY_CPMOL

    @property
    def reorganization(self) -> float:
        """Reorganization energy over the thermal energy."""
        return self.lambda_ev * FARADAY_CPMOL / (
            GAS_CONSTANT_JPMOLK * self.temperature_k
        )

    @property
    def adsorption_energy(self) -> float:
        """Adsorption energy over the thermal energy."""
        return self.w_ads_ev * FARADAY_CPMOL / (
            GAS_CONSTANT_JPMOLK * self.temperature_k
        )


def adsorbed_fraction(spec: KineticsSpec, electrolyte=1.0):
    """Inner-layer cation coverage set by the local electrolyte activity."""
    activity = spec.a_plus * np.asarray(electrolyte, dtype=float)
    scaled = activity * np.exp(-spec.adsorption_energy)
    return scaled / (1.0 + scaled)


def zero_bias_filling(spec: KineticsSpec, electrolyte: float = 1.0) -> float:
    """Filling at which the forward and backward terms cancel at zero bias.

    Only meaningful for the ``"ecit"`` variant, whose rate does not vanish at
    zero overpotential unless the filling equals the adsorbed fraction; the
    other variants are in equilibrium at zero bias for any filling.
    """
    return float(adsorbed_fraction(spec, electrolyte))


def _mhc_cap(spec: KineticsSpec, overpotential):
    lam = spec.reorganization
    root = np.sqrt(1.0 + np.sqrt(lam) + np.square(overpotential))
    return erfc((lam - root) / (2.0 * np.sqrt(lam)))


def rate(spec: KineticsSpec, filling, electrolyte, overpotential):
    """Dimensionless interfacial current, positive for reduction."""
    cs = np.asarray(filling, dtype=float)
    cl = np.asarray(electrolyte, dtype=float)
    eta = np.asarray(overpotential, dtype=float)
    if spec.variant == "ecit":
        c_ads = adsorbed_fraction(spec, cl)
        bracket = c_ads * expit(-eta) - cs * expit(eta)
        out = (1.0 - cs) * bracket * _mhc_cap(spec, eta)
    else:
        a = spec.alpha
        with np.errstate(over="ignore"):
            drive = np.exp(-a * eta) - np.exp((1.0 - a) * eta)
        if spec.variant == "bv":
            pref = cl ** (1.0 - a) * (1.0 - cs) ** (1.0 - a) * cs**a
        else:  # icet
            pref = (1.0 - cs) * cl ** (1.0 - a) * cs**a
        out = pref * drive
    if out.ndim == 0:
        return float(out)
    return out


def linearize(spec: KineticsSpec, filling, electrolyte=1.0):
    """Small-signal kinetic slope ``f = -d(rate)/d(overpotential)`` at zero bias.

    Nonnegative for admissible states.  For the ``"ecit"`` variant the slope
    is exact even when the rate itself does not vanish at zero bias (the
    reorganization cap has zero derivative there).
    """
    cs = np.asarray(filling, dtype=float)
    cl = np.asarray(electrolyte, dtype=float)
    if spec.variant == "ecit":
        c_ads = adsorbed_fraction(spec, cl)
        out = (1.0 - cs) * (cs + c_ads) / 4.0 * _mhc_cap(spec, 0.0)
    elif spec.variant == "bv":
        a = spec.alpha
        out = cl ** (1.0 - a) * (1.0 - cs) ** (1.0 - a) * cs**a
    else:
        a = spec.alpha
        out = (1.0 - cs) * cl ** (1.0 - a) * cs**a
    if out.ndim == 0:
        return float(out)
    return out


def filling_sensitivity(spec: KineticsSpec, filling, electrolyte=1.0):
    """Derivative of the small-signal slope with respect to filling."""
    cs = np.asarray(filling, dtype=float)
    cl = np.asarray(electrolyte, dtype=float)
    if spec.variant == "ecit":
        c_ads = adsorbed_fraction(spec, cl)
        out = (1.0 - 2.0 * cs - c_ads) / 4.0 * _mhc_cap(spec, 0.0)
    elif spec.variant == "bv":
        a = spec.alpha
        f = cl ** (1.0 - a) * (1.0 - cs) ** (1.0 - a) * cs**a
        out = f * (a / cs - (1.0 - a) / (1.0 - cs))
    else:
        a = spec.alpha
        f = (1.0 - cs) * cl ** (1.0 - a) * cs**a
        out = f * (a / cs - 1.0 / (1.0 - cs))
    if out.ndim == 0:
        return float(out)
    return out


def rate_partials(spec: KineticsSpec, filling, electrolyte, overpotential):
    """Partial derivatives of ``rate`` w.r.t. overpotential and electrolyte.

    Returns ``(d_rate/d_overpotential, d_rate/d_electrolyte)``; used by the
    lean reference solver to assemble its analytic Jacobian.
    """
    cs = np.asarray(filling, dtype=float)
    cl = np.asarray(electrolyte, dtype=float)
    eta = np.asarray(overpotential, dtype=float)
    if spec.variant == "ecit":
        lam = spec.reorganization
        c_ads = adsorbed_fraction(spec, cl)
        cap = _mhc_cap(spec, eta)
        bracket = c_ads * expit(-eta) - cs * expit(eta)
        logistic = expit(eta) * expit(-eta)
        root = np.sqrt(1.0 + np.sqrt(lam) + np.square(eta))
        g = (lam - root) / (2.0 * np.sqrt(lam))
        dcap = 2.0 * _INV_SQRT_PI * np.exp(-np.square(g)) * eta / (
            2.0 * np.sqrt(lam) * root
        )
        dj_deta = (1.0 - cs) * (-(c_ads + cs) * logistic * cap + bracket * dcap)
        dc_ads = c_ads * (1.0 - c_ads) / cl
        dj_dcl = (1.0 - cs) * expit(-eta) * dc_ads * cap
    else:
        a = spec.alpha
        with np.errstate(over="ignore"):
            fwd = np.exp(-a * eta)
            bwd = np.exp((1.0 - a) * eta)
        if spec.variant == "bv":
            pref = cl ** (1.0 - a) * (1.0 - cs) ** (1.0 - a) * cs**a
        else:
            pref = (1.0 - cs) * cl ** (1.0 - a) * cs**a
        dj_deta = pref * (-a * fwd - (1.0 - a) * bwd)
        dj_dcl = (1.0 - a) * pref * (fwd - bwd) / cl
    if dj_deta.ndim == 0:
        return float(dj_deta), float(dj_dcl)
    return dj_deta, dj_dcl


# ---------------------------------------------------------------------------
# Open-circuit potential
# ---------------------------------------------------------------------------


class OcpCurve:
    """Monotone open-circuit-potential interpolant over filling fraction.

    Built from tabulated (filling, voltage) knots with a shape-preserving
    monotone cubic; the table must be strictly decreasing in voltage.
    """

    def __init__(self, filling, voltage_v):
        x = np.asarray(filling, dtype=float)
        v = np.asarray(voltage_v, dtype=float)
        if x.ndim != 1 or x.shape != v.shape:
            raise ValueError("filling and voltage_v must be 1-D arrays of equal size")
        if x.size < 4:
            raise ValueError(f"need at least 4 knots; got {x.size}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("knots must be finite")
        if np.any(np.diff(x) <= 0.0):
            raise ValueError("filling knots must be strictly increasing")
        if np.any(np.diff(v) >= 0.0):
            raise ValueError("voltage knots must be strictly decreasing")
        self.filling = x
        self.voltage_v = v
        self._interp = PchipInterpolator(x, v, extrapolate=False)
        self._dinterp = self._interp.derivative()

    @property
    def filling_min(self) -> float:
        return float(self.filling[0])

    @property
    def filling_max(self) -> float:
        return float(self.filling[-1])

    def _check_range(self, x) -> None:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.filling_min - 1e-12) or np.any(
            x > self.filling_max + 1e-12
        ):
            raise ValueError(
                f"filling outside table range [{self.filling_min}, "
                f"{self.filling_max}]"
            )

    def value(self, x):
        """Open-circuit potential in volts at the given filling."""
        self._check_range(x)
        clipped = np.clip(x, self.filling_min, self.filling_max)
        out = self._interp(clipped)
        if out.ndim == 0:
            return float(out)
        return out

    def slope(self, x):
        """d(voltage)/d(filling); strictly negative inside the table."""
        self._check_range(x)
        clipped = np.clip(x, self.filling_min, self.filling_max)
        out = self._dinterp(clipped)
        if out.ndim == 0:
            return float(out)
        return out

    def inverse(self, voltage_v: float) -> float:
        """Filling at which the curve crosses the given voltage."""
        v_hi = self.value(self.filling_min)
        v_lo = self.value(self.filling_max)
        if not v_lo <= voltage_v <= v_hi:
            raise ValueError(
                f"voltage {voltage_v} outside curve range [{v_lo}, {v_hi}]"
            )
        return float(
            brentq(
                lambda x: self.value(x) - voltage_v,
                self.filling_min,
                self.filling_max,
                xtol=1e-12,
                rtol=8.9e-16,
            )
        )

    @classmethod
    def from_csv(cls, path) -> "OcpCurve":
        """Load knots from a two-column CSV with header ``x,ocv_volts``."""
        path = Path(path)
        with path.open(newline="") as handle:
            rows = [
                row
                for row in csv.reader(handle)
                if row and not row[0].lstrip().startswith("#")
            ]
        if not rows or [c.strip() for c in rows[0]] != ["x", "ocv_volts"]:
            raise ValueError(f"{path}: expected header 'x,ocv_volts'")
        try:
            data = np.array([[float(c) for c in row] for row in rows[1:]])
        except ValueError as exc:
            raise ValueError(f"{path}: non-numeric entry in table") from exc
        if data.ndim != 2 or data.shape[1] != 2:
            raise ValueError(f"{path}: expected two columns")
        return cls(data[:, 0], data[:, 1])


def load_default_ocp() -> OcpCurve:
    """Bundled synthetic layered-oxide-like curve (strictly decreasing)."""
    source = resources.files("leanpet.data").joinpath("nmc532_ocp.csv")
    with resources.as_file(source) as path:
        return OcpCurve.from_csv(path)
