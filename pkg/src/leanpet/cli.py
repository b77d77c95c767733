"""Command-line front end: INI configs in, CSV artifacts and summaries out.

Config documents are INI sections with SI-unit keys (see data/baseline.ini
for the full schema with comments).  Every output file starts with one
comment line recording the tool version, the sha256 of the effective config
(file plus ``--set`` overrides), and the seed, so identical inputs are
checkable against byte-identical outputs.  Exit status 2 flags config or
command-line problems, 3 numerical failures inside the model modules.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import io
import math
import os
import re
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analytic import (
    impedance_spectrum,
    pulse_current,
    rest_voltage_v,
    simulate_discharge,
)
from .inference import (
    FitProblem,
    SamplerStuckError,
    chi_square_landscape,
    count_histogram_modes,
    ensemble_mcmc,
    synthesize_data,
)
from .kinetics import KineticsSpec, OcpCurve, load_default_ocp, zero_bias_filling
from .refsolver import Protocol, SolverError, rmse, solve_nonlinear
from .scaling import PhysicalCellParams, compute_groups

__all__ = [
    "ConfigError",
    "RunConfig",
    "default_config_path",
    "load_config",
    "main",
]

PROTOCOLS = ("discharge", "pulse", "eis", "fit", "compare", "sweep")

# section -> key -> value kind; doubles as the lint whitelist
_SCHEMA = {
    "cell": {
        "thickness_m": "float",
        "separator_thickness_m": "float",
        "porosity": "float",
        "active_loading": "float",
        "particle_radius_m": "float",
        "sigma_s_spm": "float",
        "c_s_max_molpm3": "float",
        "c_l_ref_molpm3": "float",
        "transference": "float",
        "bruggeman_exponent": "float",
        "temperature_k": "float",
        "c_dl_fpm2": "float",
        "kappa_l_spm": "float",
        "d_l_m2ps": "float",
    },
    "kinetics": {
        "variant": "str",
        "j0_apm2": "float",
        "alpha": "float",
        "lambda_ev": "float",
        "w_ads_ev": "float",
        "a_plus": "float",
        "temperature_k": "float",
    },
    "ocp": {"file": "str"},
    "run": {"protocol": "str", "output_dir": "str", "seed": "int"},
    "discharge": {
        "rates": "floats",
        "start_filling": "float",
        "cutoff_v": "float",
        "n_points": "int",
        "corrected": "bool",
    },
    "pulse": {"steps_mv": "floats", "start_filling": "float", "n_points": "int"},
    "eis": {
        "freq_min_hz": "float",
        "freq_max_hz": "float",
        "points_per_decade": "int",
        "filling": "str",
        "include_polarization": "bool",
    },
    "fit": {
        "c_rate": "float",
        "noise_fraction": "float",
        "n_points": "int",
        "n_walkers": "int",
        "n_steps": "int",
        "landscape_nodes": "int",
        "bounds_factor": "float",
    },
    "compare": {
        "rates": "floats",
        "grid_cells": "int",
        "cutoff_v": "float",
        "start_filling": "float",
        "n_points": "int",
    },
    "sweep": {
        "rates": "floats",
        "sigma_s_spm": "floats",
        "c_l_ref_molpm3": "floats",
        "grid_cells": "int",
        "cutoff_v": "float",
        "start_filling": "float",
    },
}

_DEFAULTS = {
    "ocp": {"file": ""},
    "run": {"output_dir": "out", "seed": 0},
    "discharge": {
        "rates": [0.5, 1.0, 2.0],
        "start_filling": 0.40,
        "cutoff_v": 3.0,
        "n_points": 400,
        "corrected": True,
    },
    "pulse": {"steps_mv": [-25.0, -50.0, -100.0], "start_filling": 0.5, "n_points": 400},
    "eis": {
        "freq_min_hz": 1e-3,
        "freq_max_hz": 1e3,
        "points_per_decade": 20,
        "filling": "auto",
        "include_polarization": False,
    },
    "fit": {
        "c_rate": 1.0,
        "noise_fraction": 0.05,
        "n_points": 100,
        "n_walkers": 32,
        "n_steps": 2000,
        "landscape_nodes": 50,
        "bounds_factor": 4.0,
    },
    "compare": {
        "rates": [0.5, 1.0, 2.0],
        "grid_cells": 60,
        "cutoff_v": 3.0,
        "start_filling": 0.40,
        "n_points": 400,
    },
    "sweep": {
        "rates": [0.5, 1.0, 2.0],
        "sigma_s_spm": [0.01, 0.1, 1.0],
        "c_l_ref_molpm3": [500.0, 1000.0, 2000.0],
        "grid_cells": 40,
        "cutoff_v": 3.0,
        "start_filling": 0.40,
    },
}

_BOOL_WORDS = {
    "true": True,
    "yes": True,
    "on": True,
    "1": True,
    "false": False,
    "no": False,
    "off": False,
    "0": False,
}


class ConfigError(Exception):
    """Config or command-line problem; maps to exit status 2."""


def default_config_path() -> Path:
    """Path of the bundled baseline config."""
    return Path(str(resources.files("leanpet.data").joinpath("baseline.ini")))


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.8e}"


def _locate(lines, section: str, key: str):
    """(line, column) of a key's value inside the config text, if present."""
    current = None
    pattern = re.compile(rf"^(\s*{re.escape(key)}\s*[=:]\s*)", re.IGNORECASE)
    for number, line in enumerate(lines, 1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
        elif current == section:
            match = pattern.match(line)
            if match:
                return number, len(match.group(1)) + 1
    return None


def _convert(raw: str, kind: str, where: str):
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw, 10)
        if kind == "bool":
            word = raw.strip().lower()
            if word not in _BOOL_WORDS:
                raise ValueError(raw)
            return _BOOL_WORDS[word]
        if kind == "floats":
            tokens = [tok.strip() for tok in raw.split(",") if tok.strip()]
            if not tokens:
                raise ValueError("empty list")
            return [float(tok) for tok in tokens]
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None


@dataclasses.dataclass
class RunConfig:
    """Parsed, validated config plus the constructed model objects."""

    path: Path
    sha: str
    values: dict
    cell: PhysicalCellParams
    kin: KineticsSpec
    ocp: OcpCurve
    ocp_path: Optional[Path]
    protocol: str
    output_dir: Path
    seed: int

    def opt(self, section: str, key: str):
        return self.values[section][key]

    def header(self) -> str:
        return f"# lean-pet {__version__} config_sha256={self.sha} seed={self.seed}\n"


def _read_parser(path: Path) -> tuple[configparser.ConfigParser, list]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        parser.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(
            f"config parse error: {path}: line {exc.lineno}, column 1: "
            "entry before any [section] header"
        ) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if getattr(exc, "errors", None) else 1
        raise ConfigError(
            f"config parse error: {path}: line {lineno}, column 1: {exc.message.splitlines()[0]}"
        ) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(
            f"config parse error: {path}: line {exc.lineno}, column 1: "
            f"duplicate key {exc.option!r} in [{exc.section}]"
        ) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(
            f"config parse error: {path}: line {exc.lineno}, column 1: "
            f"duplicate section [{exc.section}]"
        ) from None
    return parser, text.splitlines()


def _apply_overrides(parser: configparser.ConfigParser, overrides) -> None:
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, key = key.split(".", 1)
            if section not in _SCHEMA or key not in _SCHEMA[section]:
                raise ConfigError(f"override names unknown key {section}.{key}")
        else:
            candidates = [s for s, keys in _SCHEMA.items() if key in keys]
            if not candidates:
                raise ConfigError(f"override names unknown key {key!r}")
            if len(candidates) == 1:
                section = candidates[0]
            else:
                active = (
                    parser.get("run", "protocol", fallback="") or ""
                ).strip().lower()
                if active in candidates:
                    section = active
                elif "run" in candidates:
                    section = "run"
                else:
                    raise ConfigError(
                        f"override key {key!r} is ambiguous across sections "
                        f"{candidates}; use section.key"
                    )
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value.strip())


def _parsed_values(parser, lines, path) -> dict:
    values = {section: dict(defaults) for section, defaults in _DEFAULTS.items()}
    values["cell"] = {}
    values["kinetics"] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            where = f"{path}: {section}.{key}"
            spot = _locate(lines, section, key)
            if spot:
                where = f"{path}: line {spot[0]}, column {spot[1]}: {section}.{key}"
            values[section][key] = _convert(raw, _SCHEMA[section][key], where)
    return values


def _build_objects(values: dict, config_dir: Path):
    try:
        cell = PhysicalCellParams(**values["cell"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[cell] section invalid: {exc}") from None
    kin_kwargs = dict(values["kinetics"])
    kin_kwargs.setdefault("temperature_k", cell.temperature_k)
    try:
        kin = KineticsSpec(**kin_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[kinetics] section invalid: {exc}") from None
    ocp_file = values["ocp"]["file"].strip()
    if not ocp_file:
        return cell, kin, load_default_ocp(), None
    ocp_path = Path(ocp_file)
    if not ocp_path.is_absolute():
        ocp_path = config_dir / ocp_path
    if not ocp_path.is_file():
        raise ConfigError(f"ocp file not found: {ocp_path}")
    try:
        return cell, kin, OcpCurve.from_csv(ocp_path), ocp_path
    except ValueError as exc:
        raise ConfigError(f"ocp table invalid: {exc}") from None


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _semantic_checks(values: dict, ocp: OcpCurve) -> None:
    run = values["run"]
    protocol = run["protocol"].strip().lower()
    _check(protocol in PROTOCOLS, f"run.protocol must be one of {PROTOCOLS}; got {run['protocol']!r}")
    run["protocol"] = protocol
    _check(run["seed"] >= 0, f"run.seed must be >= 0; got {run['seed']}")
    _check(bool(run["output_dir"].strip()), "run.output_dir must be nonempty")

    def filling_ok(name, x):
        _check(
            ocp.filling_min <= x < ocp.filling_max,
            f"{name} = {x} outside the OCP table range "
            f"[{ocp.filling_min}, {ocp.filling_max})",
        )

    dis = values["discharge"]
    _check(all(r > 0 for r in dis["rates"]), "discharge.rates must be positive")
    _check(dis["n_points"] >= 2, "discharge.n_points must be >= 2")
    filling_ok("discharge.start_filling", dis["start_filling"])

    pul = values["pulse"]
    _check(all(s != 0.0 for s in pul["steps_mv"]), "pulse.steps_mv must be nonzero")
    _check(pul["n_points"] >= 2, "pulse.n_points must be >= 2")
    filling_ok("pulse.start_filling", pul["start_filling"])

    eis = values["eis"]
    _check(
        0.0 < eis["freq_min_hz"] < eis["freq_max_hz"],
        "eis frequency bounds must satisfy 0 < min < max",
    )
    _check(eis["points_per_decade"] >= 1, "eis.points_per_decade must be >= 1")
    if eis["filling"].strip().lower() != "auto":
        x = _convert(eis["filling"], "float", "eis.filling")
        filling_ok("eis.filling", x)
        eis["filling"] = x
    else:
        eis["filling"] = None

    fit = values["fit"]
    _check(fit["c_rate"] > 0, "fit.c_rate must be > 0")
    _check(fit["noise_fraction"] > 0, "fit.noise_fraction must be > 0")
    _check(fit["n_points"] >= 10, "fit.n_points must be >= 10")
    _check(
        fit["n_walkers"] >= 6 and fit["n_walkers"] % 2 == 0,
        "fit.n_walkers must be even and >= 6",
    )
    _check(fit["n_steps"] >= 10, "fit.n_steps must be >= 10")
    _check(fit["landscape_nodes"] >= 3, "fit.landscape_nodes must be >= 3")
    _check(fit["bounds_factor"] > 1, "fit.bounds_factor must be > 1")

    cmp_ = values["compare"]
    _check(all(r > 0 for r in cmp_["rates"]), "compare.rates must be positive")
    _check(cmp_["grid_cells"] >= 8, "compare.grid_cells must be >= 8")
    _check(cmp_["n_points"] >= 2, "compare.n_points must be >= 2")
    filling_ok("compare.start_filling", cmp_["start_filling"])

    swp = values["sweep"]
    _check(all(r > 0 for r in swp["rates"]), "sweep.rates must be positive")
    _check(all(s > 0 for s in swp["sigma_s_spm"]), "sweep.sigma_s_spm must be positive")
    _check(
        all(c > 0 for c in swp["c_l_ref_molpm3"]),
        "sweep.c_l_ref_molpm3 must be positive",
    )
    _check(swp["grid_cells"] >= 8, "sweep.grid_cells must be >= 8")
    filling_ok("sweep.start_filling", swp["start_filling"])


def load_config(path, overrides=None) -> RunConfig:
    """Parse, override, validate, and build the model objects for one run."""
    path = Path(path)
    parser, lines = _read_parser(path)
    _apply_overrides(parser, overrides)
    dump = io.StringIO()
    parser.write(dump)
    sha = hashlib.sha256(dump.getvalue().encode()).hexdigest()
    values = _parsed_values(parser, lines, path)
    if "protocol" not in values["run"]:
        raise ConfigError(f"{path}: missing required key run.protocol")
    cell, kin, ocp, ocp_path = _build_objects(values, path.parent)
    _semantic_checks(values, ocp)
    return RunConfig(
        path=path,
        sha=sha,
        values=values,
        cell=cell,
        kin=kin,
        ocp=ocp,
        ocp_path=ocp_path,
        protocol=values["run"]["protocol"],
        output_dir=Path(values["run"]["output_dir"]),
        seed=values["run"]["seed"],
    )


def _worker_cap() -> int:
    raw = os.environ.get("LEANPET_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        cap = int(raw, 10)
    except ValueError:
        raise ConfigError(f"LEANPET_THREADS must be an integer; got {raw!r}") from None
    if cap < 1:
        raise ConfigError(f"LEANPET_THREADS must be >= 1; got {cap}")
    return cap


def _atomic_write(path: Path, text: str) -> None:
    handle, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(handle, "w", newline="") as stream:
            stream.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _csv_text(rc: RunConfig, columns, rows) -> str:
    out = [rc.header().rstrip("\n"), ",".join(columns)]
    for row in rows:
        out.append(",".join(_fmt(cell) for cell in row))
    return "\n".join(out) + "\n"


def _groups_lines(label: str, groups) -> list:
    lines = [f"[groups {label}]"]
    for field in dataclasses.fields(groups):
        lines.append(f"{field.name} = {_fmt(getattr(groups, field.name))}")
    lines.append(f"electronic_fraction = {_fmt(groups.electronic_fraction())}")
    return lines


# ---------------------------------------------------------------------------
# protocol executors; each returns (files: [(name, text)], summary_lines)


def _run_discharge(rc: RunConfig):
    files, summary = [], []
    for rate in rc.opt("discharge", "rates"):
        curve = simulate_discharge(
            rc.cell,
            rc.kin,
            rc.ocp,
            c_rate=rate,
            start_filling=rc.opt("discharge", "start_filling"),
            cutoff_v=rc.opt("discharge", "cutoff_v"),
            n_points=rc.opt("discharge", "n_points"),
            corrected=rc.opt("discharge", "corrected"),
        )
        rows = zip(
            curve.t_s,
            curve.voltage_v,
            np.full(curve.t_s.size, curve.current_apm2),
            curve.mean_filling,
        )
        files.append(
            (
                f"discharge_{rate:g}C.csv",
                _csv_text(
                    rc, ("t_seconds", "voltage_volts", "current_apm2", "mean_filling"), rows
                ),
            )
        )
        summary.extend(_groups_lines(f"{rate:g}C", curve.groups))
        summary.append(f"validity_ratio_max {rate:g}C = {_fmt(curve.validity_ratio_max)}")
        summary.append(f"hit_cutoff {rate:g}C = {_fmt(curve.hit_cutoff)}")
        if curve.polarization_flagged:
            summary.append(f"warning: strong electrolyte polarization at {rate:g}C")
    return files, summary


def _run_pulse(rc: RunConfig):
    files, summary = [], []
    start = rc.opt("pulse", "start_filling")
    hold_base = rest_voltage_v(rc.kin, rc.ocp, start)
    for step_mv in rc.opt("pulse", "steps_mv"):
        response = pulse_current(
            rc.cell,
            rc.kin,
            rc.ocp,
            start_filling=start,
            step_v=step_mv / 1000.0,
            n_points=rc.opt("pulse", "n_points"),
            method="both",
        )
        held = np.full(response.t_s.size, hold_base + response.step_v)
        rows = zip(response.t_s, held, response.current_apm2, response.mean_filling)
        files.append(
            (
                f"pulse_{step_mv:g}mV.csv",
                _csv_text(
                    rc, ("t_seconds", "voltage_volts", "current_apm2", "mean_filling"), rows
                ),
            )
        )
        summary.append(
            f"pulse {step_mv:g}mV: equilibrium_filling = {_fmt(response.equilibrium_filling)}"
            f", rate_constant_1ps = {_fmt(response.rate_constant_1ps)}"
            f", linearized_vs_ode_gap = {_fmt(response.relative_gap)}"
        )
    return files, summary


def _run_eis(rc: RunConfig):
    lo = rc.opt("eis", "freq_min_hz")
    hi = rc.opt("eis", "freq_max_hz")
    per_decade = rc.opt("eis", "points_per_decade")
    count = max(2, int(round(per_decade * math.log10(hi / lo))) + 1)
    freq = np.geomspace(lo, hi, count)
    filling = rc.opt("eis", "filling")
    if filling is None:
        filling = zero_bias_filling(rc.kin)
    spectrum = impedance_spectrum(
        rc.cell,
        rc.kin,
        rc.ocp,
        freq,
        filling=filling,
        include_polarization=rc.opt("eis", "include_polarization"),
    )
    rows = zip(spectrum.freq_hz, spectrum.z_ohm_m2.real, spectrum.z_ohm_m2.imag)
    files = [("eis.csv", _csv_text(rc, ("freq_hz", "re_z_ohm_m2", "im_z_ohm_m2"), rows))]
    summary = _groups_lines("eis", spectrum.groups)
    summary.append(f"filling = {_fmt(spectrum.filling)}")
    summary.append(f"kinetic_slope = {_fmt(spectrum.kinetic_slope)}")
    summary.append(f"impedance_scale_ohm_m2 = {_fmt(spectrum.z_ref_ohm_m2)}")
    return files, summary


def _run_fit(rc: RunConfig):
    c_rate = rc.opt("fit", "c_rate")
    groups = compute_groups(rc.cell, 3600.0 / c_rate, rc.kin.j0_apm2)
    observations = synthesize_data(
        groups,
        rc.kin,
        rc.ocp,
        c_rate=c_rate,
        noise_fraction=rc.opt("fit", "noise_fraction"),
        seed=rc.seed,
        n_points=rc.opt("fit", "n_points"),
    )
    problem = FitProblem(
        observations,
        groups,
        rc.kin,
        rc.ocp,
        bounds_factor=rc.opt("fit", "bounds_factor"),
    )
    posterior = ensemble_mcmc(
        problem,
        n_walkers=rc.opt("fit", "n_walkers"),
        n_steps=rc.opt("fit", "n_steps"),
        seed=rc.seed,
    )
    steps, walkers, _ = posterior.log_chains.shape
    rows = (
        (
            step,
            walker,
            posterior.log_chains[step, walker, 0],
            posterior.log_chains[step, walker, 1],
            posterior.chi2[step, walker],
        )
        for step in range(steps)
        for walker in range(walkers)
    )
    files = [
        (
            "chains.csv",
            _csv_text(rc, ("step", "walker", "log_da_w", "log_da_p", "chi2"), rows),
        )
    ]
    landscape = chi_square_landscape(
        problem,
        rc.opt("fit", "landscape_nodes"),
        rc.opt("fit", "landscape_nodes"),
    )
    grid_lines = [rc.header().rstrip("\n")]
    grid_lines.append("," + ",".join(_fmt(p) for p in landscape.da_process))
    for i, w in enumerate(landscape.da_wiring):
        grid_lines.append(
            _fmt(w) + "," + ",".join(_fmt(c) for c in landscape.chi2[i])
        )
    files.append(("landscape.csv", "\n".join(grid_lines) + "\n"))

    medians = posterior.medians()
    flat = np.log(posterior.flat())
    summary = _groups_lines("truth", groups)
    summary.append(f"acceptance_rate = {_fmt(posterior.acceptance_rate)}")
    summary.append(f"burn_in = {posterior.burn_in}")
    for i, name in enumerate(problem.free):
        truth = problem.reference(name)
        summary.append(
            f"median {name} = {_fmt(medians[name])} "
            f"(truth {_fmt(truth)}, error {_fmt(medians[name] / truth - 1.0)})"
        )
        summary.append(
            f"autocorrelation_time {name} = {_fmt(posterior.autocorrelation_time[i])}"
        )
        summary.append(f"marginal_modes {name} = {count_histogram_modes(flat[:, i])}")
    summary.append(f"chi2_min = {_fmt(landscape.chi2_min)}")
    summary.append(
        "argmin da_wiring = "
        f"{_fmt(landscape.argmin_da_wiring)}, da_process = {_fmt(landscape.argmin_da_process)}"
    )
    return files, summary


def _reference_rmse(rc, cell, rate, grid_cells, start, cutoff, n_points):
    """Analytic vs nonlinear-reference discharge gap for one parameter point."""
    curve = simulate_discharge(
        cell,
        rc.kin,
        rc.ocp,
        c_rate=rate,
        start_filling=start,
        cutoff_v=cutoff,
        n_points=n_points,
        corrected=True,
    )
    protocol = Protocol(
        "current", curve.current_apm2, 1.15 * curve.t_s[-1], cutoff_v=cutoff
    )
    reference = solve_nonlinear(
        cell, rc.kin, rc.ocp, protocol, grid=grid_cells, start_filling=start
    )
    gap = rmse(curve.t_s, curve.voltage_v, reference.t_s, reference.voltage_v)
    return curve, reference, gap


def _run_compare(rc: RunConfig):
    files, summary, gaps = [], [], []
    start = rc.opt("compare", "start_filling")
    cutoff = rc.opt("compare", "cutoff_v")
    for rate in rc.opt("compare", "rates"):
        curve, reference, gap = _reference_rmse(
            rc,
            rc.cell,
            rate,
            rc.opt("compare", "grid_cells"),
            start,
            cutoff,
            rc.opt("compare", "n_points"),
        )
        columns = ("t_seconds", "voltage_volts", "current_apm2", "mean_filling")
        files.append(
            (
                f"compare_analytic_{rate:g}C.csv",
                _csv_text(
                    rc,
                    columns,
                    zip(
                        curve.t_s,
                        curve.voltage_v,
                        np.full(curve.t_s.size, curve.current_apm2),
                        curve.mean_filling,
                    ),
                ),
            )
        )
        files.append(
            (
                f"compare_reference_{rate:g}C.csv",
                _csv_text(
                    rc,
                    columns,
                    zip(
                        reference.t_s,
                        reference.voltage_v,
                        reference.current_apm2,
                        reference.mean_filling,
                    ),
                ),
            )
        )
        summary.append(f"rmse {rate:g}C = {_fmt(gap)}")
        summary.append(
            f"validity_ratio_max {rate:g}C = {_fmt(curve.validity_ratio_max)}"
        )
        gaps.append(gap)
    aggregate = math.sqrt(sum(g * g for g in gaps) / len(gaps))
    summary.append(f"rmse aggregate = {_fmt(aggregate)}")
    return files, summary


def _run_sweep(rc: RunConfig):
    rates = rc.opt("sweep", "rates")
    sigmas = rc.opt("sweep", "sigma_s_spm")
    refs = rc.opt("sweep", "c_l_ref_molpm3")
    start = rc.opt("sweep", "start_filling")
    cutoff = rc.opt("sweep", "cutoff_v")
    grid_cells = rc.opt("sweep", "grid_cells")
    jobs = [
        (rate, sigma, c_ref)
        for rate in rates
        for sigma in sigmas
        for c_ref in refs
    ]

    def one(point):
        rate, sigma, c_ref = point
        cell = dataclasses.replace(rc.cell, sigma_s_spm=sigma, c_l_ref_molpm3=c_ref)
        groups = compute_groups(cell, 3600.0 / rate, rc.kin.j0_apm2)
        try:
            curve, _, gap = _reference_rmse(
                rc, cell, rate, grid_cells, start, cutoff, 400
            )
            return gap, curve.validity_ratio_max, groups
        except Exception:
            return math.nan, math.nan, groups

    workers = min(len(jobs), _worker_cap())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(job) for job in jobs]

    rows = []
    for (rate, sigma, c_ref), (gap, ratio, groups) in zip(jobs, results):
        rows.append(
            (rate, sigma, c_ref, gap, ratio, groups.da_wiring, groups.da_process)
        )
    files = [
        (
            "sweep_rmse.csv",
            _csv_text(
                rc,
                (
                    "c_rate",
                    "sigma_s_spm",
                    "c_l_ref_molpm3",
                    "rmse_volts",
                    "validity_ratio",
                    "da_wiring",
                    "da_process",
                ),
                rows,
            ),
        )
    ]
    summary = [f"points = {len(jobs)}"]
    failed = sum(1 for gap, _, _ in results if math.isnan(gap))
    summary.append(f"failed_points = {failed}")
    for rate in rates:
        row_gaps = [
            gap
            for (r, _, _), (gap, _, _) in zip(jobs, results)
            if r == rate
        ]
        if all(math.isnan(g) for g in row_gaps):
            summary.append(f"warning: all points failed at c_rate = {rate:g}")
        else:
            finite = [g for g in row_gaps if not math.isnan(g)]
            summary.append(f"rmse_max c_rate {rate:g} = {_fmt(max(finite))}")
    return files, summary


_EXECUTORS = {
    "discharge": _run_discharge,
    "pulse": _run_pulse,
    "eis": _run_eis,
    "fit": _run_fit,
    "compare": _run_compare,
    "sweep": _run_sweep,
}


def _execute(rc: RunConfig) -> int:
    files, summary = _EXECUTORS[rc.protocol](rc)
    rc.output_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files:
        _atomic_write(rc.output_dir / name, text)
    body = [rc.header().rstrip("\n"), f"protocol = {rc.protocol}"]
    body.extend(summary)
    body.append("files = " + ",".join(name for name, _ in files))
    _atomic_write(rc.output_dir / "summary.txt", "\n".join(body) + "\n")
    return 0


def _cmd_groups(rc: RunConfig) -> int:
    c_rate = rc.opt("fit", "c_rate")
    groups = compute_groups(rc.cell, 3600.0 / c_rate, rc.kin.j0_apm2)
    print(rc.header(), end="")
    for line in _groups_lines(f"{c_rate:g}C", groups):
        print(line)
    return 0


def _build_argparser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lean-pet",
        description="Reduced-order porous-electrode models: runs, sweeps, fits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "execute the configured protocol and write artifacts"),
        ("sweep", "run the parameter sweep protocol"),
        ("groups", "print the dimensionless groups for a config"),
        ("validate", "parse and lint a config, writing nothing"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config", help="path of the INI config document")
        cmd.add_argument(
            "--set",
            dest="overrides",
            action="append",
            metavar="KEY=VALUE",
            help="override a config key (section.key or bare unique key)",
        )
    return parser


def main(argv=None) -> int:
    args = _build_argparser().parse_args(argv)
    overrides = list(args.overrides or [])
    if args.command == "sweep":
        # prepend so later bare-key overrides resolve against the sweep section
        overrides.insert(0, "run.protocol=sweep")
    try:
        rc = load_config(args.config, overrides)
        if args.command == "validate":
            print(f"ok: {args.config}")
            return 0
        if args.command == "groups":
            return _cmd_groups(rc)
        return _execute(rc)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, SamplerStuckError) as exc:
        diagnostics = getattr(exc, "diagnostics", {})
        print(f"numerical failure: {exc}", file=sys.stderr)
        for key in sorted(diagnostics):
            value = diagnostics[key]
            if isinstance(value, (int, float, str)):
                print(f"  {key} = {value}", file=sys.stderr)
        return 3
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
