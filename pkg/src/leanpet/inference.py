"""Identifiability tooling for the wiring and process groups.

Synthetic discharge observations with parameter-level noise, a chi-square
landscape over the two groups, and an affine-invariant stretch-move
ensemble sampler for their posterior.  All randomness flows through one
recorded seed per artifact; equal seeds give bit-identical results.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

import numpy as np

from .analytic import _voltage_bracket_batch, rest_voltage_v
from .kinetics import KineticsSpec, OcpCurve, linearize
from .scaling import DimensionlessGroups

__all__ = [
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
]

FREE_NAMES = ("da_wiring", "da_process")

Seed = Union[int, np.random.SeedSequence, np.random.Generator]


class SamplerStuckError(RuntimeError):
    """Raised when the ensemble acceptance collapses (walkers stuck)."""

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def modified_groups(
    groups: DimensionlessGroups,
    da_wiring: Optional[float] = None,
    da_process: Optional[float] = None,
) -> DimensionlessGroups:
    """Copy of ``groups`` with the wiring and/or process group replaced.

    Rescaling the wiring group preserves the electronic/ionic split and the
    polarization share inside the ionic part; the split is a property of the
    electrode build, not of the fitted magnitude.
    """
    out = groups
    if da_process is not None:
        out = dataclasses.replace(out, da_process=float(da_process))
    if da_wiring is not None:
        w = float(da_wiring)
        w_sigma = groups.electronic_fraction()
        pol = (
            groups.da_polarization * w / groups.da_wiring
            if groups.da_wiring > 0.0
            else 0.0
        )
        out = dataclasses.replace(
            out,
            da_wiring=w,
            da_wiring_electronic=w_sigma * w,
            da_wiring_ionic=(1.0 - w_sigma) * w,
            da_polarization=pol,
        )
    return out


# ---------------------------------------------------------------------------
# synthetic observations


@dataclass(frozen=True)
class Observations:
    """Voltage samples over uniform filling points from one synthetic draw."""

    filling: np.ndarray
    voltage_v: np.ndarray
    c_rate: float
    noise_fraction: float
    seed: int
    observation_noise: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "filling", np.asarray(self.filling, dtype=float))
        object.__setattr__(self, "voltage_v", np.asarray(self.voltage_v, dtype=float))
        if self.filling.shape != self.voltage_v.shape or self.filling.ndim != 1:
            raise ValueError("filling and voltage_v must be equal-length vectors")


def synthesize_data(
    groups_true: DimensionlessGroups,
    kin: KineticsSpec,
    ocp: OcpCurve,
    c_rate: float = 1.0,
    noise_fraction: float = 0.05,
    seed: int = 0,
    *,
    n_points: int = 100,
    start_filling: float = 0.40,
    end_filling: float = 0.95,
    observation_noise: bool = False,
) -> Observations:
    """Sample a noisy discharge curve at uniform filling points.

    Noise enters the two identification groups themselves, drawn
    independently per observation point; the voltage scatter is whatever
    those parameter draws propagate to.  ``observation_noise`` switches to
    plain multiplicative voltage noise instead.  Zero noise returns the
    exact curve.
    """
    if noise_fraction < 0.0:
        raise ValueError(f"noise_fraction must be >= 0; got {noise_fraction}")
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2; got {n_points}")
    if not start_filling < end_filling:
        raise ValueError("start_filling must lie below end_filling")
    g = groups_true.rescaled(3600.0 / c_rate)
    rng = np.random.default_rng(seed)
    x = np.linspace(start_filling, end_filling, n_points)
    slopes = linearize(kin, x)
    rest = rest_voltage_v(kin, ocp, x)
    w_sigma = g.electronic_fraction()
    vt = kin.thermal_voltage_v
    if observation_noise:
        v = rest + vt * _voltage_bracket_batch(g.da_wiring, g.da_process, w_sigma, slopes)
        v = v * (1.0 + noise_fraction * rng.standard_normal(n_points))
    else:
        z = rng.standard_normal((n_points, 2))
        # pathological draws are clipped to keep the groups positive
        da_w = np.maximum(g.da_wiring * (1.0 + noise_fraction * z[:, 0]), 1e-3 * g.da_wiring)
        da_p = np.maximum(g.da_process * (1.0 + noise_fraction * z[:, 1]), 1e-3 * g.da_process)
        v = rest + vt * _voltage_bracket_batch(da_w, da_p, w_sigma, slopes)
    return Observations(
        filling=x,
        voltage_v=v,
        c_rate=c_rate,
        noise_fraction=noise_fraction,
        seed=seed,
        observation_noise=observation_noise,
    )


# ---------------------------------------------------------------------------
# fit problem


@dataclass(eq=False)
class FitProblem:
    """Observation set plus the fixed model context for identification.

    ``free`` names the groups being identified; everything else in
    ``groups`` stays fixed.  ``noise_fraction`` sets the chi-square weights
    by first-order propagation of the parameter noise onto the voltage, and
    ``bounds_factor`` sets the log-uniform prior box (and the landscape
    span) as the reference value times and over that factor.
    """

    observations: Observations
    groups: DimensionlessGroups
    kin: KineticsSpec
    ocp: OcpCurve
    free: tuple = FREE_NAMES
    noise_fraction: Optional[float] = None
    bounds_factor: float = 4.0

    def __post_init__(self) -> None:
        self.free = tuple(self.free)
        if (
            not self.free
            or len(set(self.free)) != len(self.free)
            or not set(self.free) <= set(FREE_NAMES)
        ):
            raise ValueError(
                f"free must be a nonempty subset of {FREE_NAMES}; got {self.free}"
            )
        if self.observations.filling.size < 10:
            raise ValueError("need at least 10 observation points")
        if self.noise_fraction is None:
            self.noise_fraction = self.observations.noise_fraction
        if not self.noise_fraction > 0.0:
            raise ValueError(f"noise_fraction must be > 0; got {self.noise_fraction}")
        if not self.bounds_factor > 1.0:
            raise ValueError(f"bounds_factor must be > 1; got {self.bounds_factor}")

    @cached_property
    def _slopes(self) -> np.ndarray:
        return np.asarray(linearize(self.kin, self.observations.filling), dtype=float)

    @cached_property
    def _rest_v(self) -> np.ndarray:
        return np.asarray(
            rest_voltage_v(self.kin, self.ocp, self.observations.filling), dtype=float
        )

    def reference(self, name: str) -> float:
        return {"da_wiring": self.groups.da_wiring, "da_process": self.groups.da_process}[name]

    def bounds(self) -> dict:
        """Prior box per free group: reference over/times ``bounds_factor``."""
        return {
            name: (self.reference(name) / self.bounds_factor, self.reference(name) * self.bounds_factor)
            for name in self.free
        }

    def predict(self, da_wiring, da_process) -> np.ndarray:
        """Model voltage at the observation points.

        Scalar groups give the plain curve; array groups broadcast to a
        batch of curves, one row per parameter pair.
        """
        w, p = np.broadcast_arrays(
            np.asarray(da_wiring, dtype=float), np.asarray(da_process, dtype=float)
        )
        scalar = w.ndim == 0
        w2 = np.atleast_1d(w)[..., None]
        p2 = np.atleast_1d(p)[..., None]
        bracket = _voltage_bracket_batch(
            w2, p2, self.groups.electronic_fraction(), self._slopes
        )
        v = self._rest_v + self.kin.thermal_voltage_v * bracket
        return v[0] if scalar else v

    @cached_property
    def sigma_v(self) -> np.ndarray:
        """Per-point voltage noise scale implied by the noise model."""
        if self.observations.observation_noise:
            base = self.predict(self.groups.da_wiring, self.groups.da_process)
            return self.noise_fraction * np.abs(base)
        h = 1e-6
        w = self.groups.da_wiring
        p = self.groups.da_process
        dv_dlnw = (self.predict(w * np.exp(h), p) - self.predict(w * np.exp(-h), p)) / (2.0 * h)
        dv_dlnp = (self.predict(w, p * np.exp(h)) - self.predict(w, p * np.exp(-h))) / (2.0 * h)
        return self.noise_fraction * np.hypot(dv_dlnw, dv_dlnp)

    def chi_square(self, da_wiring=None, da_process=None):
        """Weighted squared misfit; ``None`` pins a group at its reference."""
        w = self.reference("da_wiring") if da_wiring is None else da_wiring
        p = self.reference("da_process") if da_process is None else da_process
        resid = (self.predict(w, p) - self.observations.voltage_v) / self.sigma_v
        out = np.sum(np.square(resid), axis=-1)
        return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# chi-square landscape


@dataclass
class ChiSquareLandscape:
    """Chi-square surface over a log grid of the two groups.

    Rows index the wiring values, columns the process values.  Failed nodes
    hold nan in ``chi2`` and are excluded from the argmin.
    """

    da_wiring: np.ndarray
    da_process: np.ndarray
    chi2: np.ndarray
    failed: np.ndarray
    argmin_index: tuple

    @property
    def argmin_da_wiring(self) -> float:
        return float(self.da_wiring[self.argmin_index[0]])

    @property
    def argmin_da_process(self) -> float:
        return float(self.da_process[self.argmin_index[1]])

    @property
    def chi2_min(self) -> float:
        return float(self.chi2[self.argmin_index])

    def mixed_second_difference(self) -> float:
        """Cross second difference of chi-square at the minimum.

        Computed in log-parameters on the grid around the argmin (clamped
        one node inside the edges).  Its sign fixes the orientation of the
        elliptical contours: the posterior correlation of the two groups has
        the opposite sign.
        """
        i = int(np.clip(self.argmin_index[0], 1, self.da_wiring.size - 2))
        j = int(np.clip(self.argmin_index[1], 1, self.da_process.size - 2))
        quad = (
            self.chi2[i + 1, j + 1]
            - self.chi2[i + 1, j - 1]
            - self.chi2[i - 1, j + 1]
            + self.chi2[i - 1, j - 1]
        )
        dw = np.log(self.da_wiring[i + 1]) - np.log(self.da_wiring[i - 1])
        dp = np.log(self.da_process[j + 1]) - np.log(self.da_process[j - 1])
        return float(quad / (dw * dp))


def chi_square_landscape(
    problem: FitProblem, n_wiring: int = 50, n_process: int = 50
) -> ChiSquareLandscape:
    """Evaluate the misfit on a log grid spanning the prior box.

    Non-finite nodes are flagged as failed and skipped when locating the
    minimum.
    """
    if n_wiring < 3 or n_process < 3:
        raise ValueError("need at least a 3x3 grid")
    factor = problem.bounds_factor
    w_nodes = np.geomspace(
        problem.reference("da_wiring") / factor,
        problem.reference("da_wiring") * factor,
        n_wiring,
    )
    p_nodes = np.geomspace(
        problem.reference("da_process") / factor,
        problem.reference("da_process") * factor,
        n_process,
    )
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        chi = problem.chi_square(
            np.repeat(w_nodes, n_process), np.tile(p_nodes, n_wiring)
        ).reshape(n_wiring, n_process)
    failed = ~np.isfinite(chi)
    if failed.all():
        raise RuntimeError("model failed at every landscape node")
    masked = np.where(failed, np.inf, chi)
    idx = np.unravel_index(int(np.argmin(masked)), masked.shape)
    chi = np.where(failed, np.nan, chi)
    return ChiSquareLandscape(
        da_wiring=w_nodes,
        da_process=p_nodes,
        chi2=chi,
        failed=failed,
        argmin_index=(int(idx[0]), int(idx[1])),
    )


# ---------------------------------------------------------------------------
# ensemble sampler


def run_stretch_sampler(
    log_prob,
    initial: np.ndarray,
    n_steps: int,
    seed: Seed,
    *,
    stretch: float = 2.0,
):
    """Affine-invariant ensemble sampler built on the stretch move.

    ``log_prob`` maps a (k, d) batch of positions to (k,) log densities.
    The ensemble updates in two fixed halves, each proposing against the
    other, so the result is reproducible no matter how the likelihood batch
    is evaluated internally.  Returns ``(chains, log_probs, acceptance)``
    with ``chains`` of shape (n_steps + 1, n_walkers, d).
    """
    theta = np.array(initial, dtype=float)
    if theta.ndim != 2:
        raise ValueError("initial must be (n_walkers, n_dim)")
    n_walkers, n_dim = theta.shape
    if n_walkers < 4 or n_walkers % 2:
        raise ValueError(f"need an even walker count of at least 4; got {n_walkers}")
    if not stretch > 1.0:
        raise ValueError(f"stretch must be > 1; got {stretch}")
    rng = np.random.default_rng(seed)
    lp = np.asarray(log_prob(theta), dtype=float)
    chains = np.empty((n_steps + 1, n_walkers, n_dim))
    log_probs = np.empty((n_steps + 1, n_walkers))
    chains[0] = theta
    log_probs[0] = lp
    half = n_walkers // 2
    sides = (np.arange(half), np.arange(half, n_walkers))
    accepted = 0
    for step in range(1, n_steps + 1):
        for side in (0, 1):
            move = sides[side]
            other = sides[1 - side]
            z = np.square((stretch - 1.0) * rng.random(half) + 1.0) / stretch
            partners = other[rng.integers(0, half, size=half)]
            proposal = theta[partners] + z[:, None] * (theta[move] - theta[partners])
            lp_prop = np.asarray(log_prob(proposal), dtype=float)
            log_ratio = (n_dim - 1.0) * np.log(z) + lp_prop - lp[move]
            accept = np.log(rng.random(half)) < log_ratio
            theta[move[accept]] = proposal[accept]
            lp[move[accept]] = lp_prop[accept]
            accepted += int(np.count_nonzero(accept))
        chains[step] = theta
        log_probs[step] = lp
    acceptance = accepted / (2.0 * half * n_steps)
    return chains, log_probs, acceptance


def count_histogram_modes(samples, n_bins: int = 24, smooth_passes: int = 1) -> int:
    """Count local maxima of a lightly smoothed histogram of ``samples``.

    A plateau of equal neighboring bins counts once.  Meant as a cheap
    modality check on posterior marginals, not a formal test.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 10:
        raise ValueError("need at least 10 samples")
    if n_bins < 3:
        raise ValueError(f"need at least 3 bins; got {n_bins}")
    dens = np.histogram(x, bins=n_bins)[0].astype(float)
    kernel = np.array([0.25, 0.5, 0.25])
    for _ in range(smooth_passes):
        dens = np.convolve(dens, kernel, mode="same")
    modes = 0
    i = 0
    n = dens.size
    while i < n:
        j = i
        while j + 1 < n and dens[j + 1] == dens[i]:
            j += 1
        left = dens[i - 1] if i > 0 else -np.inf
        right = dens[j + 1] if j + 1 < n else -np.inf
        if dens[i] > left and dens[i] > right and dens[i] > 0.0:
            modes += 1
        i = j + 1
    return modes


def integrated_autocorrelation_time(series, window_scale: float = 5.0) -> float:
    """Sokal's self-consistent-window autocorrelation time estimate.

    ``series`` is (n_samples,) or (n_samples, n_walkers); autocorrelations
    are averaged over walkers before windowing.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 4:
        raise ValueError("need at least 4 samples")
    centered = x - x.mean(axis=0)
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(centered, n=size, axis=0)
    acf = np.fft.irfft(spec * np.conj(spec), n=size, axis=0)[:n].real
    norm = np.where(acf[0] > 0.0, acf[0], 1.0)
    rho = (acf / norm).mean(axis=1)
    tau = 2.0 * np.cumsum(rho) - 1.0
    for m in range(1, n):
        if m >= window_scale * tau[m]:
            return float(tau[m])
    return float(tau[-1])


@dataclass
class PosteriorSample:
    """Ensemble chains in log-parameter space plus sampling diagnostics.

    ``log_chains`` has shape (n_steps + 1, n_walkers, n_free), ``chi2`` the
    matching raw misfit per sample.  ``burn_in`` counts the leading steps to
    discard; the autocorrelation times are reported per free group but not
    applied automatically.
    """

    log_chains: np.ndarray
    chi2: np.ndarray
    free: tuple
    acceptance_rate: float
    burn_in: int
    seed: int
    autocorrelation_time: np.ndarray

    def __post_init__(self) -> None:
        if self.log_chains.shape[:2] != self.chi2.shape:
            raise ValueError("chains and chi2 disagree on (steps, walkers)")
        if not 0.0 < self.acceptance_rate < 1.0:
            raise ValueError(
                f"acceptance_rate must lie in (0, 1); got {self.acceptance_rate}"
            )

    def flat(self, discard: Optional[int] = None) -> np.ndarray:
        """Post-burn-in samples in linear parameter space, (m, n_free)."""
        d = self.burn_in if discard is None else discard
        return np.exp(self.log_chains[d:].reshape(-1, len(self.free)))

    def medians(self) -> dict:
        med = np.median(self.flat(), axis=0)
        return {name: float(m) for name, m in zip(self.free, med)}


def ensemble_mcmc(
    problem: FitProblem,
    n_walkers: int = 32,
    n_steps: int = 2000,
    seed: int = 0,
    *,
    stretch: float = 2.0,
    data_weight: float = 1.0,
    burn_in_fraction: float = 0.25,
) -> PosteriorSample:
    """Sample the posterior of the free groups with the stretch move.

    Log-uniform prior over the problem's bounds box, Gaussian likelihood
    from the chi-square weights, walkers initialized uniformly over the
    box.  ``data_weight = 0`` samples the prior alone (diagnostic mode; the
    recorded chi2 stays the raw misfit).  Aborts when the ensemble
    acceptance falls below 1%.
    """
    free = problem.free
    n_dim = len(free)
    if n_walkers < 2 * n_dim + 2:
        raise ValueError(
            f"need at least {2 * n_dim + 2} walkers for {n_dim} free groups; got {n_walkers}"
        )
    if n_walkers % 2:
        raise ValueError(f"walker count must be even; got {n_walkers}")
    if data_weight < 0.0:
        raise ValueError(f"data_weight must be >= 0; got {data_weight}")
    bounds = problem.bounds()
    lo = np.log([bounds[name][0] for name in free])
    hi = np.log([bounds[name][1] for name in free])

    def split(batch):
        cols = {name: np.exp(batch[:, i]) for i, name in enumerate(free)}
        return (
            cols.get("da_wiring", problem.reference("da_wiring")),
            cols.get("da_process", problem.reference("da_process")),
        )

    def chi2_of(batch):
        w, p = split(batch)
        return problem.chi_square(w, p)

    def log_prob(batch):
        inside = np.all((batch >= lo) & (batch <= hi), axis=1)
        out = np.full(batch.shape[0], -np.inf)
        if np.any(inside):
            if data_weight > 0.0:
                out[inside] = -0.5 * data_weight * chi2_of(batch[inside])
            else:
                out[inside] = 0.0
        return out

    init_seq, run_seq = np.random.SeedSequence(seed).spawn(2)
    theta0 = np.random.default_rng(init_seq).uniform(lo, hi, size=(n_walkers, n_dim))
    chains, _, acceptance = run_stretch_sampler(
        log_prob, theta0, n_steps, run_seq, stretch=stretch
    )
    if acceptance < 0.01:
        raise SamplerStuckError(
            "ensemble acceptance below 1%: walkers are stuck",
            {"acceptance_rate": acceptance, "seed": seed, "n_steps": n_steps},
        )

    # raw misfit along the chains, computed in bounded slabs
    flat = chains.reshape(-1, n_dim)
    chi2 = np.empty(flat.shape[0])
    for lo_i in range(0, flat.shape[0], 8192):
        block = flat[lo_i : lo_i + 8192]
        chi2[lo_i : lo_i + block.shape[0]] = chi2_of(block)
    chi2 = chi2.reshape(chains.shape[0], n_walkers)

    burn_in = int(round(burn_in_fraction * n_steps))
    tau = np.array(
        [
            integrated_autocorrelation_time(chains[burn_in:, :, i])
            for i in range(n_dim)
        ]
    )
    return PosteriorSample(
        log_chains=chains,
        chi2=chi2,
        free=free,
        acceptance_rate=acceptance,
        burn_in=burn_in,
        seed=seed,
        autocorrelation_time=tau,
    )
