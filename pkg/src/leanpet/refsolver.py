"""Finite-volume reference solvers for the reduced and full electrode models.

Two implicit-Euler solvers share a uniform one-dimensional grid across the
electrode thickness.  ``solve_lean`` integrates the reduced linear-kinetics
system in dimensionless form; its continuum limit is exactly the closed-form
model in ``analytic``, so the gap between the two is discretization error
plus whichever transient terms are switched on.  ``solve_nonlinear``
integrates the full nonlinear porous-electrode system in dimensional form
and is the accuracy yardstick for everything else in the package.

All solves are single threaded and deterministic for fixed inputs.
Independent solves may safely run in separate processes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import sparse
from scipy.linalg import solve_banded
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from .scaling import (
    FARADAY_CPMOL,
    DimensionlessGroups,
    PhysicalCellParams,
)
from .kinetics import KineticsSpec, OcpCurve, linearize, rate
from .analytic import (
    electrolyte_sensitivity,
    rest_shift_slope_v,
    rest_voltage_v,
)

__all__ = [
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
]

Target = Union[float, Callable[[float], float]]


class SolverError(RuntimeError):
    """Raised when a nonlinear solve cannot be advanced.

    ``diagnostics`` carries the time, step size and a copy of the last
    accepted state so a failed run can be inspected or restarted.
    """

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class Grid1D:
    """Uniform cell-centered grid on the scaled thickness [0, 1]."""

    n_cells: int

    def __post_init__(self) -> None:
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ValueError(f"n_cells must be an integer >= 8; got {self.n_cells}")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def spacing(self) -> float:
        return 1.0 / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.spacing


@dataclass(frozen=True)
class Protocol:
    """Operating protocol for a solve.

    ``kind`` is ``"current"`` (galvanostatic) or ``"voltage"``
    (potentiostatic, including small-signal sinusoids via a callable
    target).  Units are contextual: the lean solver reads ``duration`` in
    process-time units and current targets as multiples of the process
    current, while the nonlinear solver reads seconds and A/m^2.  Voltage
    targets are terminal volts in both.
    """

    kind: str
    target: Target
    duration: float
    cutoff_v: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in ("current", "voltage"):
            raise ValueError(f"kind must be 'current' or 'voltage'; got {self.kind!r}")
        if not self.duration > 0.0:
            raise ValueError(f"duration must be > 0; got {self.duration}")
        if self.cutoff_v is not None and self.kind != "current":
            raise ValueError("cutoff_v only applies to current protocols")

    def target_at(self, t: float) -> float:
        if callable(self.target):
            return float(self.target(t))
        return float(self.target)


@dataclass
class ElectrodeState:
    """Per-cell snapshot of the electrode fields.

    ``filling`` is the intercalation fraction, ``electrolyte`` the salt
    concentration over its reference, ``overpotential`` the interfacial
    driving force in thermal-voltage units.
    """

    time: float
    filling: np.ndarray
    electrolyte: np.ndarray
    overpotential: np.ndarray

    def __post_init__(self) -> None:
        self.filling = np.asarray(self.filling, dtype=float)
        self.electrolyte = np.asarray(self.electrolyte, dtype=float)
        self.overpotential = np.asarray(self.overpotential, dtype=float)
        if not (self.filling.shape == self.electrolyte.shape == self.overpotential.shape):
            raise ValueError("field arrays must share one shape")
        if np.any(self.filling < -1e-12) or np.any(self.filling > 1.0 + 1e-12):
            raise ValueError("filling outside [0, 1]")
        if np.any(self.electrolyte <= 0.0):
            raise ValueError("electrolyte concentration must stay positive")


# ---------------------------------------------------------------------------
# equilibrium helpers


def equilibrium_overpotential(
    spec: KineticsSpec, filling: float, electrolyte: float = 1.0
) -> float:
    """Overpotential (thermal-voltage units) at which the net rate vanishes."""
    at_zero = float(rate(spec, filling, electrolyte, 0.0))
    if at_zero == 0.0:
        return 0.0
    return brentq(
        lambda eta: float(rate(spec, filling, electrolyte, eta)),
        -40.0,
        40.0,
        xtol=1e-14,
        rtol=8.9e-16,
    )


def open_circuit_voltage_v(
    spec: KineticsSpec, ocp: OcpCurve, filling: float, electrolyte: float = 1.0
) -> float:
    """True rest voltage: tabulated OCP plus the exact kinetic equilibrium.

    Unlike ``analytic.rest_voltage_v`` this solves the equilibrium exactly
    rather than using the tangent-model shift; the two agree to second order
    in the distance from the zero-bias filling.
    """
    eta_eq = equilibrium_overpotential(spec, filling, electrolyte)
    return float(ocp.value(filling)) + spec.thermal_voltage_v * eta_eq


# ---------------------------------------------------------------------------
# generic bordered banded Newton solve


def _bordered_solve(ab, l_and_u, residual, border_cols, border_rows, border_d, border_res):
    """Solve the bordered system [J B; C D] [dz; db] = -[R; r].

    ``ab`` is the banded core Jacobian, ``border_cols`` an (n, k) matrix of
    border columns, ``border_rows`` (k, n), ``border_d`` (k, k).
    """
    n = residual.size
    k = border_res.size
    rhs = np.empty((n, 1 + k))
    rhs[:, 0] = -residual
    if k:
        rhs[:, 1:] = border_cols
    sol = solve_banded(l_and_u, ab, rhs)
    dz0 = sol[:, 0]
    if not k:
        return dz0, np.zeros(0)
    xb = sol[:, 1:]
    schur = border_d - border_rows @ xb
    db = np.linalg.solve(schur, -(border_res + border_rows @ dz0))
    dz = dz0 - xb @ db
    return dz, db


# ---------------------------------------------------------------------------
# lean (reduced) solver


@dataclass
class LeanResult:
    """Time series from a lean solve, in dimensionless process units."""

    t: np.ndarray
    voltage_v: np.ndarray
    current: np.ndarray
    mean_filling: np.ndarray
    conservation_max: float
    hit_cutoff: bool
    final_state: ElectrodeState
    states: Optional[list] = None
    n_cells: int = 0
    dt: float = 0.0


def _normalize_grid(grid) -> Grid1D:
    if grid is None:
        return Grid1D(200)
    if isinstance(grid, Grid1D):
        return grid
    return Grid1D(int(grid))


def solve_lean(
    groups: DimensionlessGroups,
    spec: KineticsSpec,
    ocp: OcpCurve,
    protocol: Protocol,
    grid=None,
    dt: Optional[float] = None,
    *,
    start_filling: float = 0.40,
    use_salt_transient: bool = True,
    use_capacitance: bool = True,
    electrolyte_feedback: bool = False,
    store_states: bool = False,
    newton_tol: float = 1e-11,
) -> LeanResult:
    """March the reduced linear-kinetics system with implicit Euler.

    Fields are the overpotential measured from the local rest state and the
    scaled salt concentration; the mean filling is spatially uniform by
    construction.  With both transient terms switched off every step is the
    quasi-static profile, which is what the closed forms in ``analytic``
    evaluate, so the remaining gap is spatial discretization only.
    ``electrolyte_feedback`` couples the salt deviation back into the rate
    law, reproducing the polarization-corrected profile instead.
    """
    g = _normalize_grid(grid)
    n = g.n_cells
    dx = g.spacing
    if dt is None:
        dt = protocol.duration / 400.0
    if not dt > 0.0:
        raise ValueError(f"dt must be > 0; got {dt}")
    n_steps = max(1, int(round(protocol.duration / dt)))
    dt = protocol.duration / n_steps

    vt = spec.thermal_voltage_v
    da_w = groups.da_wiring
    da_p = groups.da_process
    da_e = groups.da_electrolyte
    w_sigma = groups.electronic_fraction()
    tau = groups.tau_electrolyte if use_salt_transient else 0.0
    invdac = 1.0 / groups.da_capacitive if use_capacitance else 0.0
    quasi_static = (tau == 0.0) and (invdac == 0.0)
    use_mu = tau == 0.0
    cv_mode = protocol.kind == "voltage"

    cs_lo = ocp.filling_min + 1e-9
    cs_hi = ocp.filling_max - 1e-9

    def system(z, cs, cur, eta_old, conc_old, dt_step):
        """Residual, terminal voltage and current balance at one time level."""
        eta = z[0::2]
        conc = z[1::2]
        f = linearize(spec, cs)
        g_cl = f * electrolyte_sensitivity(spec, cs) if electrolyte_feedback else 0.0
        s_rest = (ocp.slope(cs) + rest_shift_slope_v(spec, cs)) / vt
        bc0 = (groups.da_wiring_ionic / da_p) * cur
        bc1 = -(groups.da_wiring_electronic / da_p) * cur
        cbc0 = -(da_e / da_p) * cur

        j_tot = -f * eta + g_cl * (conc - 1.0)
        if invdac:
            j_tot = j_tot - invdac * ((eta - eta_old) / dt_step + s_rest * cur)

        r = np.empty(2 * n)
        lap = np.empty(n)
        lap[1:-1] = (eta[:-2] - 2.0 * eta[1:-1] + eta[2:]) / dx**2
        lap[0] = ((eta[1] - eta[0]) / dx - bc0) / dx
        lap[-1] = (bc1 - (eta[-1] - eta[-2]) / dx) / dx
        r[0::2] = lap + da_w * j_tot

        lap_c = np.empty(n)
        lap_c[1:-1] = (conc[:-2] - 2.0 * conc[1:-1] + conc[2:]) / dx**2
        lap_c[0] = ((conc[1] - conc[0]) / dx - cbc0) / dx
        lap_c[-1] = (0.0 - (conc[-1] - conc[-2]) / dx) / dx
        r[1::2] = tau * (conc - conc_old) / dt_step - lap_c + da_e * j_tot

        dj_deta = -f - invdac / dt_step
        eta_f0 = eta[0] - 0.5 * dx * bc0 + 0.125 * dx**2 * da_w * j_tot[0]
        eta_f1 = eta[-1] + 0.5 * dx * bc1 + 0.125 * dx**2 * da_w * j_tot[-1]
        bracket = eta_f0 + w_sigma * (
            eta_f1 - eta_f0 - (groups.da_wiring_ionic / da_p) * cur
        )
        voltage = rest_voltage_v(spec, ocp, cs) + vt * bracket
        balance = da_p * float(np.mean(j_tot)) - cur
        return r, voltage, balance, dj_deta, g_cl

    def banded_jacobian(dj_deta, g_cl, dt_step):
        ab = np.zeros((5, 2 * n))
        lap_diag = np.full(n, -2.0 / dx**2)
        lap_diag[0] = lap_diag[-1] = -1.0 / dx**2
        ab[2, 0::2] = lap_diag + da_w * dj_deta
        ab[2, 1::2] = tau / dt_step - lap_diag + da_e * g_cl
        ab[1, 1::2] = da_w * g_cl          # d(charge eq)/d(conc), same cell
        ab[3, 0::2] = da_e * dj_deta       # d(salt eq)/d(eta), same cell
        ab[0, 2::2] = 1.0 / dx**2          # eta neighbor couplings
        ab[0, 3::2] = -1.0 / dx**2
        ab[4, 0:-2:2] = 1.0 / dx**2
        ab[4, 1:-2:2] = -1.0 / dx**2
        return ab

    def voltage_row(dj_deta, g_cl):
        row = np.zeros(2 * n)
        face_gain = 0.125 * dx**2 * da_w
        row[0] = vt * (1.0 - w_sigma) * (1.0 + face_gain * dj_deta)
        row[1] = vt * (1.0 - w_sigma) * face_gain * g_cl
        row[-2] = vt * w_sigma * (1.0 + face_gain * dj_deta)
        row[-1] = vt * w_sigma * face_gain * g_cl
        return row

    eta = np.zeros(n)
    conc = np.ones(n)
    cs = float(start_filling)
    if not cs_lo <= cs <= cs_hi:
        raise ValueError(f"start_filling {cs} outside the OCP table")
    cur = 0.0

    t_out = [0.0]
    cur_out = [0.0]
    cs_out = [cs]
    states = [] if store_states else None
    conservation_max = 0.0
    hit_cutoff = False

    def newton_step(cs_new, t_new, eta_old, conc_old, cur_guess, dt_step):
        """One implicit-Euler level; returns converged fields and voltage."""
        nonlocal conservation_max
        z = np.empty(2 * n)
        z[0::2] = eta
        z[1::2] = conc
        cur_loc = cur_guess
        for iteration in range(20):
            if cv_mode:
                cs_step = cs + dt_step * cur_loc
                cs_step = min(max(cs_step, cs_lo), cs_hi)
            else:
                cs_step = cs_new
            r, voltage, balance, dj_deta, g_cl = system(
                z, cs_step, cur_loc, eta_old, conc_old, dt_step
            )
            ab = banded_jacobian(dj_deta, g_cl, dt_step)

            cols, rows, res_extra, labels = [], [], [], []
            if da_w == 0.0:
                # uniform-overpotential mode is otherwise unconstrained; pin
                # it with the current balance
                col = np.zeros(2 * n)
                col[0::2] = 1.0
                row = np.zeros(2 * n)
                row[0::2] = da_p * dj_deta / n
                row[1::2] = da_p * g_cl / n
                cols.append(col)
                rows.append(row)
                res_extra.append(balance)
                labels.append("nu")
            if use_mu:
                col = np.zeros(2 * n)
                col[1::2] = 1.0
                row = np.zeros(2 * n)
                row[1::2] = dx
                cols.append(col)
                rows.append(row)
                res_extra.append(float(np.sum(z[1::2]) * dx - 1.0))
                labels.append("mu")
            if cv_mode:
                h = 1e-7 * max(1.0, abs(cur_loc))
                r_h, v_h, _, _, _ = system(
                    z, min(max(cs + dt_step * (cur_loc + h), cs_lo), cs_hi),
                    cur_loc + h, eta_old, conc_old, dt_step,
                )
                cols.append((r_h - r) / h)
                rows.append(voltage_row(dj_deta, g_cl))
                res_extra.append(voltage - protocol.target_at(t_new))
                labels.append("cur")

            k = len(cols)
            core = sparse.diags(
                [ab[2], ab[1, 1:], ab[0, 2:], ab[3, :-1], ab[4, :-2]],
                offsets=[0, 1, 2, -1, -2],
                format="csc",
            )
            if k:
                border_cols = sparse.csc_matrix(np.column_stack(cols))
                border_rows = sparse.csc_matrix(np.vstack(rows))
                border_d = np.zeros((k, k))
                if cv_mode:
                    i_cur = labels.index("cur")
                    border_d[i_cur, i_cur] = (v_h - voltage) / h
                full = sparse.bmat(
                    [[core, border_cols], [border_rows, sparse.csc_matrix(border_d)]],
                    format="csc",
                )
                rhs = -np.concatenate([r, np.array(res_extra)])
            else:
                full = core
                rhs = -r
            sol = spsolve(full, rhs)
            dz = sol[: 2 * n]
            db = sol[2 * n :]
            z = z + dz
            step = float(np.max(np.abs(dz))) if dz.size else 0.0
            if cv_mode:
                d_cur = float(db[labels.index("cur")])
                cur_loc += d_cur
                step = max(step, abs(d_cur) / max(1.0, abs(cur_loc)))
            for name in ("nu", "mu"):
                if name in labels:
                    step = max(step, abs(float(db[labels.index(name)])))
            if step < newton_tol:
                conservation_max = max(conservation_max, abs(balance))
                return z[0::2], z[1::2], cur_loc, voltage, cs_step
        raise SolverError(
            "lean Newton failed to converge",
            {"t": t_new, "dt": dt_step, "step_norm": step},
        )

    # matching output row at t = 0: a quasi-static system has a well defined
    # loaded profile there, a transient one starts from rest
    if quasi_static and not cv_mode:
        cur0 = protocol.target_at(0.0)
        eta, conc, cur, v0, _ = newton_step(cs, 0.0, eta, conc, cur0, dt)
        cur = cur0
        v_out = [v0]
        cur_out[0] = cur
    else:
        v_out = [rest_voltage_v(spec, ocp, cs)]

    t_now = 0.0
    for _ in range(n_steps):
        t_new = t_now + dt
        eta_old = eta.copy()
        conc_old = conc.copy()
        if cv_mode:
            cs_new = None
            cur_guess = cur
        else:
            cur_guess = protocol.target_at(t_new)
            cs_new = cs + dt * cur_guess
            if not cs_lo <= cs_new <= cs_hi:
                break
        eta, conc, cur, voltage, cs = newton_step(
            cs_new if cs_new is not None else cs, t_new, eta_old, conc_old, cur_guess, dt
        )
        t_now = t_new
        t_out.append(t_now)
        v_out.append(voltage)
        cur_out.append(cur)
        cs_out.append(cs)
        if store_states:
            states.append(
                ElectrodeState(t_now, np.full(n, cs), conc.copy(), eta.copy())
            )
        if protocol.cutoff_v is not None and voltage < protocol.cutoff_v:
            hit_cutoff = True
            break

    final = ElectrodeState(t_now, np.full(n, cs), conc.copy(), eta.copy())
    return LeanResult(
        t=np.asarray(t_out),
        voltage_v=np.asarray(v_out),
        current=np.asarray(cur_out),
        mean_filling=np.asarray(cs_out),
        conservation_max=conservation_max,
        hit_cutoff=hit_cutoff,
        final_state=final,
        states=states,
        n_cells=n,
        dt=dt,
    )


# ---------------------------------------------------------------------------
# full nonlinear solver


@dataclass
class NonlinearResult:
    """Dimensional time series from the full model."""

    t_s: np.ndarray
    voltage_v: np.ndarray
    current_apm2: np.ndarray
    mean_filling: np.ndarray
    hit_cutoff: bool
    final_state: ElectrodeState
    final_fields: dict
    newton_iterations: int = 0
    jacobian_builds: int = 0
    states: Optional[list] = None


_BAND_L = 6
_BAND_U = 4


def _colored_banded_jacobian(res_fn, y, r0, h_vec, l_band, u_band):
    """Forward-difference banded Jacobian using stride coloring."""
    n = y.size
    stride = l_band + u_band + 1
    ab = np.zeros((stride, n))
    for color in range(stride):
        cols = np.arange(color, n, stride)
        dy = np.zeros(n)
        dy[cols] = h_vec[cols]
        diff = res_fn(y + dy) - r0
        for j in cols:
            i0 = max(0, j - u_band)
            i1 = min(n, j + l_band + 1)
            ab[u_band + np.arange(i0, i1) - j, j] = diff[i0:i1] / h_vec[j]
    return ab


def solve_nonlinear(
    cell: PhysicalCellParams,
    spec: KineticsSpec,
    ocp: OcpCurve,
    protocol: Protocol,
    grid=None,
    dt_s: Optional[float] = None,
    *,
    start_filling: float = 0.40,
    initial_fields: Optional[dict] = None,
    n_output: int = 300,
    store_states: bool = False,
    jacobian_reuse_steps: int = 5,
    newton_tol: float = 1e-9,
) -> NonlinearResult:
    """March the full nonlinear porous-electrode system, implicit Euler.

    Unknowns per cell: particle filling, salt concentration, solid and
    liquid potentials; the applied current density closes the system as a
    bordered scalar so both galvanostatic and potentiostatic protocols use
    the same path.  Salt transport uses concentration-dependent effective
    conductivity and diffusivity and the logarithmic migration term.  The
    liquid potential is grounded on the far side of the separator, which is
    represented as an ohmic lump in series with the first half cell.

    Failures to advance below the minimum step raise ``SolverError`` with
    the last accepted state attached.
    """
    g = _normalize_grid(grid) if grid is not None else Grid1D(60)
    n = g.n_cells
    length = cell.thickness_m
    dx = length / n
    vt = cell.thermal_voltage_v
    area = cell.surface_area_density_1pm
    sigma = cell.sigma_s_spm
    c_ref = cell.c_l_ref_molpm3
    one_minus_tp = 1.0 - cell.transference
    eps = cell.porosity
    cdl = cell.c_dl_fpm2
    j0 = spec.j0_apm2
    cs_cap = 3.0 * j0 / (cell.particle_radius_m * FARADAY_CPMOL * cell.c_s_max_molpm3)
    r_sep = separator_resistance_ohm_m2(cell)
    u_lo = ocp.filling_min + 1e-9
    u_hi = ocp.filling_max - 1e-9
    cv_mode = protocol.kind == "voltage"

    # row scales keep every residual component near the dimensionless rate
    s_salt = one_minus_tp * area * j0 / FARADAY_CPMOL
    s_charge = area * j0

    def transport(cl):
        kap = np.broadcast_to(
            np.asarray(cell.effective_conductivity_spm(cl), dtype=float), cl.shape
        )
        dif = np.broadcast_to(
            np.asarray(cell.effective_diffusivity_m2ps(cl), dtype=float), cl.shape
        )
        return kap, dif

    def terminal_voltage(ps_last, j_last, cur):
        return ps_last - 0.5 * dx * cur / sigma + 0.125 * dx**2 * area * j_last / sigma

    def residual(y, cur, y_old, dt_step):
        cs = y[0::4]
        cl = y[1::4]
        ps = y[2::4]
        pl = y[3::4]
        cs_old = y_old[0::4]
        cl_old = y_old[1::4]
        dphi_old = y_old[2::4] - y_old[3::4]

        ocv = ocp.value(np.clip(cs, u_lo, u_hi))
        eta = ps - pl - ocv
        j_far = j0 * rate(spec, cs, cl / c_ref, eta / vt)
        j_dl = -cdl * ((ps - pl) - dphi_old) / dt_step
        j_tot = j_far + j_dl

        kap, dif = transport(cl)
        dif_face = 0.5 * (dif[:-1] + dif[1:])
        kap_face = 0.5 * (kap[:-1] + kap[1:])

        r = np.empty(4 * n)
        r[0::4] = ((cs - cs_old) / dt_step - cs_cap * rate(spec, cs, cl / c_ref, eta / vt)) / cs_cap

        flux = np.empty(n + 1)
        flux[1:-1] = -dif_face * (cl[1:] - cl[:-1]) / dx
        flux[0] = one_minus_tp * cur / FARADAY_CPMOL
        flux[-1] = 0.0
        r[1::4] = (
            eps * (cl - cl_old) / dt_step
            + (flux[1:] - flux[:-1]) / dx
            + one_minus_tp * area * j_tot / FARADAY_CPMOL
        ) / s_salt

        i_s = np.empty(n + 1)
        i_s[1:-1] = -sigma * (ps[1:] - ps[:-1]) / dx
        i_s[0] = 0.0
        i_s[-1] = cur
        r[2::4] = ((i_s[1:] - i_s[:-1]) / dx - area * j_tot) / s_charge

        i_l = np.empty(n + 1)
        i_l[1:-1] = -kap_face * (
            (pl[1:] - pl[:-1]) / dx
            - 2.0 * vt * one_minus_tp * (np.log(cl[1:]) - np.log(cl[:-1])) / dx
        )
        cl_face0 = cl[0] + 0.5 * dx * one_minus_tp * cur / (
            FARADAY_CPMOL * float(dif[0])
        )
        cl_face0 = max(cl_face0, 1e-3 * c_ref)
        kap_face0 = float(
            np.asarray(cell.effective_conductivity_spm(np.asarray(cl_face0)), dtype=float)
        )
        i_l[0] = (
            2.0 * vt * one_minus_tp * np.log(cl[0] / cl_face0) - pl[0]
        ) / (r_sep + 0.5 * dx / kap_face0)
        i_l[-1] = 0.0
        r[3::4] = ((i_l[1:] - i_l[:-1]) / dx + area * j_tot) / s_charge

        voltage = terminal_voltage(ps[-1], float(j_tot[-1]), cur)
        return r, voltage, j_tot

    # rest initialization: uniform fields, exact kinetic equilibrium
    if initial_fields is None:
        eta_eq = equilibrium_overpotential(spec, start_filling)
        cs0 = np.full(n, float(start_filling))
        cl0 = np.full(n, c_ref)
        pl0 = np.zeros(n)
        ps0 = np.full(n, float(ocp.value(start_filling)) + vt * eta_eq)
        cur = 0.0
    else:
        cs0 = np.asarray(initial_fields["filling"], dtype=float).copy()
        cl0 = np.asarray(initial_fields["salt_molpm3"], dtype=float).copy()
        ps0 = np.asarray(initial_fields["phi_solid_v"], dtype=float).copy()
        pl0 = np.asarray(initial_fields["phi_liquid_v"], dtype=float).copy()
        cur = float(initial_fields.get("current_apm2", 0.0))
    y = np.empty(4 * n)
    y[0::4] = cs0
    y[1::4] = cl0
    y[2::4] = ps0
    y[3::4] = pl0

    typ = np.empty(4 * n)
    typ[0::4] = 1.0
    typ[1::4] = c_ref
    typ[2::4] = 1.0
    typ[3::4] = 1.0
    typ_cur = max(1.0, abs(protocol.target_at(0.0)) if not cv_mode else 1.0)

    if dt_s is None:
        dt_s = protocol.duration / 400.0
    dt_min = dt_s * 2.0**-14

    t_targets = np.linspace(0.0, protocol.duration, n_output + 1)[1:]
    _, v_init, _ = residual(y, cur, y, max(dt_s, 1e-30))
    t_out = [0.0]
    v_out = [float(v_init)]
    i_out = [cur]
    cs_out = [float(np.mean(y[0::4]))]
    states = [] if store_states else None

    cache = {"ab": None, "col": None, "row": None, "d": None, "age": 10**9}
    newton_total = 0
    builds = 0
    hit_cutoff = False
    t_now = 0.0
    dt_cur = dt_s

    def border_voltage_row(y_loc, cur_loc, y_old, dt_step, v_base):
        row = np.zeros(4 * n)
        for idx in range(4 * n - 4, 4 * n):
            h = 1e-7 * max(abs(y_loc[idx]), typ[idx])
            y_p = y_loc.copy()
            y_p[idx] += h
            _, v_p, _ = residual(y_p, cur_loc, y_old, dt_step)
            row[idx] = (v_p - v_base) / h
        return row

    def build_jacobian(y_loc, cur_loc, y_old, dt_step, r0, v0):
        nonlocal builds
        h_vec = 1e-7 * np.maximum(np.abs(y_loc), typ)
        ab = _colored_banded_jacobian(
            lambda yy: residual(yy, cur_loc, y_old, dt_step)[0],
            y_loc, r0, h_vec, _BAND_L, _BAND_U,
        )
        h_cur = 1e-7 * max(abs(cur_loc), typ_cur)
        r_h, v_h, _ = residual(y_loc, cur_loc + h_cur, y_old, dt_step)
        col = (r_h - r0) / h_cur
        if cv_mode:
            row = border_voltage_row(y_loc, cur_loc, y_old, dt_step, v0)
            d = np.array([[(v_h - v0) / h_cur]])
        else:
            row = np.zeros(4 * n)
            d = np.array([[1.0]])
        builds += 1
        return {"ab": ab, "col": col, "row": row, "d": d, "age": 0}

    def advance(y_old, cur_old, t_new, dt_step):
        """One implicit step; returns (y, cur, V, iters) or None on failure."""
        nonlocal cache, newton_total
        y_loc = y_old.copy()
        cur_loc = cur_old if cv_mode else protocol.target_at(t_new)
        fresh = False
        for iteration in range(50):
            r0, v0, _ = residual(y_loc, cur_loc, y_old, dt_step)
            if cv_mode:
                r_border = np.array([v0 - protocol.target_at(t_new)])
            else:
                r_border = np.array([(cur_loc - protocol.target_at(t_new)) / typ_cur])
            if cache["age"] >= jacobian_reuse_steps or (iteration == 8 and not fresh):
                cache = build_jacobian(y_loc, cur_loc, y_old, dt_step, r0, v0)
                fresh = True
            dy, db = _bordered_solve(
                cache["ab"], (_BAND_L, _BAND_U), r0,
                cache["col"][:, None], cache["row"][None, :], cache["d"], r_border,
            )
            d_cur = float(db[0])
            scale = 1.0
            for _ in range(12):
                trial = y_loc + scale * dy
                if (
                    np.all(trial[1::4] > 0.0)
                    and np.all(trial[0::4] > -0.05)
                    and np.all(trial[0::4] < 1.05)
                ):
                    break
                scale *= 0.5
            else:
                return None
            y_loc = y_loc + scale * dy
            cur_loc = cur_loc + scale * d_cur
            newton_total += 1
            step_norm = max(
                float(np.max(np.abs(scale * dy) / typ)),
                abs(scale * d_cur) / typ_cur,
            )
            if step_norm < newton_tol and scale == 1.0:
                return y_loc, cur_loc, iteration + 1
            if iteration >= 12 and not fresh:
                cache = build_jacobian(y_loc, cur_loc, y_old, dt_step, *residual(y_loc, cur_loc, y_old, dt_step)[:2])
                fresh = True
        return None

    out_idx = 0
    while out_idx < t_targets.size:
        t_goal = t_targets[out_idx]
        while t_now < t_goal - 1e-12 * protocol.duration:
            dt_step = min(dt_cur, t_goal - t_now)
            result = advance(y, cur, t_now + dt_step, dt_step)
            if result is None:
                cache["age"] = 10**9
                dt_cur = dt_step * 0.5
                if dt_cur < dt_min:
                    raise SolverError(
                        "nonlinear solve stalled below the minimum step",
                        {
                            "t_s": t_now,
                            "dt_s": dt_cur,
                            "fields": _fields_dict(y, cur, n),
                        },
                    )
                continue
            y, cur, iters = result
            cache["age"] += 1
            t_now += dt_step
            if iters <= 3 and dt_cur < dt_s:
                dt_cur = min(dt_s, dt_cur * 2.0)
        _, v_now, j_now = residual(y, cur, y, max(dt_cur, 1e-30))
        v_now = terminal_voltage(y[2::4][-1], float(j_now[-1]), cur)
        t_out.append(t_now)
        v_out.append(float(v_now))
        i_out.append(float(cur))
        cs_out.append(float(np.mean(y[0::4])))
        if store_states:
            states.append(
                ElectrodeState(
                    t_now, y[0::4].copy(), y[1::4] / c_ref, (y[2::4] - y[3::4] - ocp.value(np.clip(y[0::4], u_lo, u_hi))) / vt
                )
            )
        out_idx += 1
        if protocol.cutoff_v is not None and v_now < protocol.cutoff_v:
            hit_cutoff = True
            break
        if float(np.max(y[0::4])) > u_hi - 2e-3 or float(np.min(y[0::4])) < u_lo + 2e-3:
            break

    final_fields = _fields_dict(y, cur, n)
    final = ElectrodeState(
        t_now,
        np.clip(y[0::4], 0.0, 1.0),
        y[1::4] / c_ref,
        (y[2::4] - y[3::4] - ocp.value(np.clip(y[0::4], u_lo, u_hi))) / vt,
    )
    return NonlinearResult(
        t_s=np.asarray(t_out),
        voltage_v=np.asarray(v_out),
        current_apm2=np.asarray(i_out),
        mean_filling=np.asarray(cs_out),
        hit_cutoff=hit_cutoff,
        final_state=final,
        final_fields=final_fields,
        newton_iterations=newton_total,
        jacobian_builds=builds,
        states=states,
    )


def _fields_dict(y, cur, n):
    return {
        "filling": y[0::4].copy(),
        "salt_molpm3": y[1::4].copy(),
        "phi_solid_v": y[2::4].copy(),
        "phi_liquid_v": y[3::4].copy(),
        "current_apm2": float(cur),
    }


# ---------------------------------------------------------------------------
# impedance extraction and curve comparison


def fit_sinusoid(t: np.ndarray, samples: np.ndarray, freq_hz: float) -> complex:
    """Least-squares phasor of ``samples`` at ``freq_hz``.

    The fit includes a constant and a linear drift column so slow state
    evolution does not leak into the phasor.  Returns A + jB for
    A sin(wt) + B cos(wt).
    """
    t = np.asarray(t, dtype=float)
    samples = np.asarray(samples, dtype=float)
    w = 2.0 * np.pi * freq_hz
    span = t[-1] - t[0] if t[-1] > t[0] else 1.0
    design = np.column_stack(
        [np.sin(w * t), np.cos(w * t), np.ones_like(t), (t - t[0]) / span]
    )
    coef, *_ = np.linalg.lstsq(design, samples, rcond=None)
    return complex(coef[0], coef[1])


def extract_impedance(
    cell: PhysicalCellParams,
    spec: KineticsSpec,
    ocp: OcpCurve,
    freq_hz,
    *,
    filling: Optional[float] = None,
    amplitude_v: float = 0.005,
    grid=None,
    steps_per_period: int = 256,
    periods: int = 10,
    fit_periods: int = 5,
    richardson: bool = False,
    include_separator: bool = True,
) -> np.ndarray:
    """Small-signal impedance of the full model, Ohm m^2.

    Each frequency runs a potentiostatic sinusoid from rest, discards the
    first ``periods - fit_periods`` periods and fits the remainder.  The
    voltage perturbation rides on the exact rest voltage so the response
    stays in the linear regime.  ``richardson`` repeats each point at a
    halved step and extrapolates the phasor.  The solver grounds through an
    ohmic separator lump; passing ``include_separator=False`` subtracts
    that exactly known series resistance, leaving the electrode-only
    impedance that the closed-form model describes.
    """
    from .kinetics import zero_bias_filling

    freqs = np.atleast_1d(np.asarray(freq_hz, dtype=float))
    if np.any(freqs <= 0.0):
        raise ValueError("frequencies must be positive")
    if filling is None:
        filling = zero_bias_filling(spec)
    v_rest = open_circuit_voltage_v(spec, ocp, filling)

    def one_pass(f, spp):
        period = 1.0 / f
        dt_step = period / spp
        protocol = Protocol(
            kind="voltage",
            target=lambda t, w=2.0 * np.pi * f: v_rest + amplitude_v * np.sin(w * t),
            duration=periods * period,
        )
        run = solve_nonlinear(
            cell,
            spec,
            ocp,
            protocol,
            grid=grid,
            dt_s=dt_step,
            start_filling=filling,
            n_output=periods * spp,
            jacobian_reuse_steps=25,
        )
        keep = run.t_s > (periods - fit_periods) * period - 0.5 * dt_step
        phasor = fit_sinusoid(run.t_s[keep], run.current_apm2[keep], f)
        return amplitude_v / (-phasor)

    out = np.empty(freqs.size, dtype=complex)
    for idx, f in enumerate(freqs):
        z_coarse = one_pass(f, steps_per_period)
        if richardson:
            z_fine = one_pass(f, 2 * steps_per_period)
            out[idx] = 2.0 * z_fine - z_coarse
        else:
            out[idx] = z_coarse
    if not include_separator:
        out -= separator_resistance_ohm_m2(cell)
    return out if np.ndim(freq_hz) else complex(out[0])


def separator_resistance_ohm_m2(cell: PhysicalCellParams) -> float:
    """Ohmic lump used to represent the separator, Ohm m^2."""
    return cell.separator_thickness_m / cell.effective_conductivity_spm(
        cell.c_l_ref_molpm3
    )


def rmse(t_a, v_a, t_b, v_b) -> float:
    """Root-mean-square gap between two sampled curves.

    Both curves are linearly interpolated onto the union of their sample
    times restricted to the overlapping span; disjoint supports are
    rejected.
    """
    t_a = np.asarray(t_a, dtype=float)
    v_a = np.asarray(v_a, dtype=float)
    t_b = np.asarray(t_b, dtype=float)
    v_b = np.asarray(v_b, dtype=float)
    if t_a.size < 2 or t_b.size < 2:
        raise ValueError("curves need at least two samples")
    lo = max(t_a.min(), t_b.min())
    hi = min(t_a.max(), t_b.max())
    if not hi > lo:
        raise ValueError("curves have no overlapping time span")
    common = np.union1d(t_a, t_b)
    common = common[(common >= lo) & (common <= hi)]
    diff = np.interp(common, t_a, v_a) - np.interp(common, t_b, v_b)
    return float(np.sqrt(np.mean(diff**2)))
