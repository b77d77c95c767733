"""Identification layer: synthetic data, chi-square landscape, ensemble sampler."""

import numpy as np
import pytest
from scipy import stats

from leanpet import analytic
from leanpet.inference import (
    FitProblem,
    Observations,
    SamplerStuckError,
    chi_square_landscape,
    count_histogram_modes,
    ensemble_mcmc,
    integrated_autocorrelation_time,
    modified_groups,
    run_stretch_sampler,
    synthesize_data,
)
from leanpet.kinetics import linearize
from leanpet.scaling import compute_groups


from conftest import make_baseline_cell, make_baseline_kinetics


@pytest.fixture(scope="module")
def groups_1c():
    kin = make_baseline_kinetics()
    return compute_groups(make_baseline_cell(), 3600.0, kin.j0_apm2)


@pytest.fixture(scope="module")
def problem_seed0(groups_1c, default_ocp):
    kin = make_baseline_kinetics()
    obs = synthesize_data(groups_1c, kin, default_ocp, noise_fraction=0.05, seed=0)
    return FitProblem(obs, groups_1c, kin, default_ocp)


@pytest.fixture(scope="module")
def posterior_seed0(problem_seed0):
    return ensemble_mcmc(problem_seed0, n_walkers=32, n_steps=2000, seed=0)


# ---------------------------------------------------------------------------
# synthetic observations


def test_synthesize_data_is_deterministic(groups_1c, baseline_kinetics, default_ocp):
    a = synthesize_data(groups_1c, baseline_kinetics, default_ocp, seed=5)
    b = synthesize_data(groups_1c, baseline_kinetics, default_ocp, seed=5)
    c = synthesize_data(groups_1c, baseline_kinetics, default_ocp, seed=6)
    assert np.array_equal(a.voltage_v, b.voltage_v)
    assert not np.array_equal(a.voltage_v, c.voltage_v)


def test_zero_noise_data_matches_model_exactly(problem_seed0, groups_1c,
                                               baseline_kinetics, default_ocp):
    obs = synthesize_data(
        groups_1c, baseline_kinetics, default_ocp, noise_fraction=0.0, seed=3
    )
    model = problem_seed0.predict(groups_1c.da_wiring, groups_1c.da_process)
    assert np.max(np.abs(obs.voltage_v - model)) == 0.0


def test_noise_scale_matches_propagated_variance(problem_seed0, groups_1c,
                                                 baseline_kinetics, default_ocp):
    # parameter noise propagated to first order predicts the voltage scatter
    curves = np.array(
        [
            synthesize_data(
                groups_1c, baseline_kinetics, default_ocp, noise_fraction=0.05, seed=s
            ).voltage_v
            for s in range(1000)
        ]
    )
    ratio = curves.std(axis=0, ddof=1) / problem_seed0.sigma_v
    assert 0.9 < ratio.mean() < 1.1
    assert np.all((0.8 < ratio) & (ratio < 1.25))


def test_observation_noise_mode_scales_with_voltage(groups_1c, baseline_kinetics,
                                                    default_ocp):
    obs = synthesize_data(
        groups_1c, baseline_kinetics, default_ocp,
        noise_fraction=0.05, seed=2, observation_noise=True,
    )
    prob = FitProblem(obs, groups_1c, baseline_kinetics, default_ocp)
    base = prob.predict(groups_1c.da_wiring, groups_1c.da_process)
    assert np.allclose(prob.sigma_v, 0.05 * np.abs(base), rtol=1e-12)


def test_synthesize_data_validation(groups_1c, baseline_kinetics, default_ocp):
    with pytest.raises(ValueError):
        synthesize_data(groups_1c, baseline_kinetics, default_ocp, noise_fraction=-0.1)
    with pytest.raises(ValueError):
        synthesize_data(groups_1c, baseline_kinetics, default_ocp, n_points=1)
    with pytest.raises(ValueError):
        synthesize_data(
            groups_1c, baseline_kinetics, default_ocp,
            start_filling=0.9, end_filling=0.5,
        )
    with pytest.raises(ValueError):
        Observations(np.zeros(5), np.zeros(4), 1.0, 0.05, 0)


# ---------------------------------------------------------------------------
# fit problem


def test_fit_problem_validation(problem_seed0, groups_1c, baseline_kinetics,
                                default_ocp):
    obs = problem_seed0.observations
    short = Observations(obs.filling[:9], obs.voltage_v[:9], 1.0, 0.05, 0)
    with pytest.raises(ValueError):
        FitProblem(short, groups_1c, baseline_kinetics, default_ocp)
    with pytest.raises(ValueError):
        FitProblem(obs, groups_1c, baseline_kinetics, default_ocp, free=("bogus",))
    with pytest.raises(ValueError):
        FitProblem(obs, groups_1c, baseline_kinetics, default_ocp, free=())
    with pytest.raises(ValueError):
        FitProblem(obs, groups_1c, baseline_kinetics, default_ocp, noise_fraction=0.0)
    with pytest.raises(ValueError):
        FitProblem(obs, groups_1c, baseline_kinetics, default_ocp, bounds_factor=1.0)


def test_predict_matches_scalar_voltage_assembly(problem_seed0, groups_1c,
                                                 baseline_kinetics, default_ocp):
    # the batched fit path and the single-point voltage agree bit for bit
    rng = np.random.default_rng(11)
    ws = groups_1c.da_wiring * np.exp(rng.uniform(-1.2, 1.2, 20))
    ps = groups_1c.da_process * np.exp(rng.uniform(-1.2, 1.2, 20))
    x = problem_seed0.observations.filling
    slopes = linearize(baseline_kinetics, x)
    rest = analytic.rest_voltage_v(baseline_kinetics, default_ocp, x)
    batch = problem_seed0.predict(ws, ps)
    assert batch.shape == (20, x.size)
    for r in range(20):
        mod = modified_groups(groups_1c, da_wiring=ws[r], da_process=ps[r])
        row = np.array(
            [
                analytic.cell_voltage(
                    mod, slopes[k], rest[k], baseline_kinetics.thermal_voltage_v
                )
                for k in range(x.size)
            ]
        )
        assert np.max(np.abs(row - batch[r])) < 1e-13


def test_chi_square_pins_missing_group_at_reference(problem_seed0, groups_1c):
    full = problem_seed0.chi_square(groups_1c.da_wiring, groups_1c.da_process)
    assert problem_seed0.chi_square() == full
    assert problem_seed0.chi_square(da_wiring=groups_1c.da_wiring) == full


def test_modified_groups_preserves_wiring_split(groups_1c):
    mod = modified_groups(groups_1c, da_wiring=2.5 * groups_1c.da_wiring,
                          da_process=0.5 * groups_1c.da_process)
    assert mod.da_wiring == pytest.approx(2.5 * groups_1c.da_wiring, rel=1e-14)
    assert mod.da_process == pytest.approx(0.5 * groups_1c.da_process, rel=1e-14)
    assert mod.electronic_fraction() == pytest.approx(
        groups_1c.electronic_fraction(), rel=1e-12
    )
    assert mod.da_wiring_electronic + mod.da_wiring_ionic == pytest.approx(
        mod.da_wiring, rel=1e-12
    )
    assert mod.da_polarization / mod.da_wiring == pytest.approx(
        groups_1c.da_polarization / groups_1c.da_wiring, rel=1e-12
    )
    # the original is untouched
    assert groups_1c.da_wiring != mod.da_wiring


# ---------------------------------------------------------------------------
# chi-square landscape


def test_noiseless_landscape_minimum_sits_on_truth_node(groups_1c, baseline_kinetics,
                                                        default_ocp):
    # odd node count places a node exactly at the reference values
    obs = synthesize_data(
        groups_1c, baseline_kinetics, default_ocp, noise_fraction=0.0, seed=0
    )
    prob = FitProblem(obs, groups_1c, baseline_kinetics, default_ocp,
                      noise_fraction=0.05)
    land = chi_square_landscape(prob, 51, 51)
    assert land.argmin_index == (25, 25)
    assert land.chi2_min < 1e-16
    assert land.argmin_da_wiring == pytest.approx(groups_1c.da_wiring, rel=1e-12)
    assert not land.failed.any()


def test_even_grid_argmin_aliases_along_valley(groups_1c, baseline_kinetics,
                                               default_ocp):
    # with truth mid-cell the argmin snaps to the node nearest the narrow
    # misfit valley, one node off even for noiseless data
    obs = synthesize_data(
        groups_1c, baseline_kinetics, default_ocp, noise_fraction=0.0, seed=0
    )
    prob = FitProblem(obs, groups_1c, baseline_kinetics, default_ocp,
                      noise_fraction=0.05)
    land = chi_square_landscape(prob, 50, 50)
    lw = np.log(land.da_wiring)
    lp = np.log(land.da_process)
    iw = int(np.argmin(np.abs(lw - np.log(groups_1c.da_wiring))))
    ip = int(np.argmin(np.abs(lp - np.log(groups_1c.da_process))))
    assert land.argmin_index == (iw - 1, ip)
    assert land.chi2[iw - 1, ip] < land.chi2[iw, ip]
    # the valley line passes near a second family of nodes two cells out
    assert land.chi2[iw + 2, ip + 1] < land.chi2[iw, ip]


def test_landscape_sign_consistency_with_posterior(problem_seed0, posterior_seed0):
    land = chi_square_landscape(problem_seed0)
    mixed = land.mixed_second_difference()
    corr = np.corrcoef(np.log(posterior_seed0.flat()).T)[0, 1]
    assert mixed < 0.0
    assert corr > 0.5
    assert np.sign(corr) == -np.sign(mixed)


def test_landscape_rejects_tiny_grids(problem_seed0):
    with pytest.raises(ValueError):
        chi_square_landscape(problem_seed0, 2, 50)


def test_log_and_linear_zoom_grids_agree_on_the_minimum(groups_1c, baseline_kinetics,
                                                        default_ocp):
    w0, p0 = groups_1c.da_wiring, groups_1c.da_process
    span, n = 1.2, 81
    for seed in range(3):
        obs = synthesize_data(
            groups_1c, baseline_kinetics, default_ocp, noise_fraction=0.05, seed=seed
        )
        prob = FitProblem(obs, groups_1c, baseline_kinetics, default_ocp)

        def argmin_on(wg, pg):
            chi = prob.chi_square(np.repeat(wg, n), np.tile(pg, n)).reshape(n, n)
            i, j = np.unravel_index(int(np.argmin(chi)), chi.shape)
            return wg[i], pg[j]

        wl = argmin_on(np.geomspace(w0 / span, w0 * span, n),
                       np.geomspace(p0 / span, p0 * span, n))
        wn = argmin_on(np.linspace(w0 / span, w0 * span, n),
                       np.linspace(p0 / span, p0 * span, n))
        assert abs(wl[0] / wn[0] - 1.0) < 0.02
        assert abs(wl[1] / wn[1] - 1.0) < 0.02


# ---------------------------------------------------------------------------
# stretch sampler


def test_stretch_sampler_samples_a_gaussian_to_three_sigma():
    mu = np.array([1.0, -2.0])
    cov = np.array([[1.0, 0.6], [0.6, 0.5]])
    prec = np.linalg.inv(cov)

    def log_prob(x):
        d = x - mu
        return -0.5 * np.einsum("ki,ij,kj->k", d, prec, d)

    init = mu + np.random.default_rng(123).standard_normal((64, 2)) * 3.0
    chains, log_probs, acceptance = run_stretch_sampler(log_prob, init, 2000, 456)
    assert chains.shape == (2001, 64, 2)
    assert log_probs.shape == (2001, 64)
    assert 0.2 < acceptance < 0.95
    burn = 200
    flat = chains[burn:].reshape(-1, 2)
    tau = max(
        integrated_autocorrelation_time(chains[burn:, :, i]) for i in range(2)
    )
    assert 2.0 < tau < 120.0
    se_mean = np.sqrt(np.diag(cov) * tau / flat.shape[0])
    assert np.all(np.abs(flat.mean(axis=0) - mu) < 3.0 * se_mean)
    se_cov = np.sqrt(
        (np.outer(np.diag(cov), np.diag(cov)) + cov**2) * tau / flat.shape[0]
    )
    assert np.all(np.abs(np.cov(flat.T) - cov) < 3.0 * se_cov)


def test_stretch_sampler_validation():
    lp = lambda x: np.zeros(x.shape[0])
    with pytest.raises(ValueError):
        run_stretch_sampler(lp, np.zeros(4), 10, 0)
    with pytest.raises(ValueError):
        run_stretch_sampler(lp, np.zeros((5, 2)), 10, 0)
    with pytest.raises(ValueError):
        run_stretch_sampler(lp, np.zeros((2, 2)), 10, 0)
    with pytest.raises(ValueError):
        run_stretch_sampler(lp, np.zeros((4, 2)), 10, 0, stretch=1.0)


def test_autocorrelation_time_near_one_for_white_noise():
    x = np.random.default_rng(0).standard_normal((4000, 8))
    tau = integrated_autocorrelation_time(x)
    assert 0.5 < tau < 1.8
    with pytest.raises(ValueError):
        integrated_autocorrelation_time(np.zeros(3))


def test_count_histogram_modes_separates_shapes():
    rng = np.random.default_rng(1)
    single = rng.standard_normal(5000)
    double = np.concatenate([single - 4.0, single + 4.0])
    assert count_histogram_modes(single) == 1
    assert count_histogram_modes(double) == 2
    with pytest.raises(ValueError):
        count_histogram_modes(single[:5])
    with pytest.raises(ValueError):
        count_histogram_modes(single, n_bins=2)


# ---------------------------------------------------------------------------
# posterior sampling


def test_mcmc_same_seed_is_bit_identical(problem_seed0):
    a = ensemble_mcmc(problem_seed0, n_walkers=16, n_steps=400, seed=7)
    b = ensemble_mcmc(problem_seed0, n_walkers=16, n_steps=400, seed=7)
    assert np.array_equal(a.log_chains, b.log_chains)
    assert np.array_equal(a.chi2, b.chi2)
    assert a.acceptance_rate == b.acceptance_rate


def test_mcmc_recovers_truth_within_ten_percent(posterior_seed0, groups_1c):
    med = posterior_seed0.medians()
    assert abs(med["da_wiring"] / groups_1c.da_wiring - 1.0) < 0.10
    assert abs(med["da_process"] / groups_1c.da_process - 1.0) < 0.10
    assert 0.2 < posterior_seed0.acceptance_rate < 0.95


def test_mcmc_marginals_are_unimodal(posterior_seed0):
    flat = np.log(posterior_seed0.flat())
    assert count_histogram_modes(flat[:, 0]) == 1
    assert count_histogram_modes(flat[:, 1]) == 1


def test_mcmc_median_misfit_close_to_landscape_minimum(problem_seed0,
                                                       posterior_seed0):
    land = chi_square_landscape(problem_seed0)
    med = posterior_seed0.medians()
    chi_med = problem_seed0.chi_square(med["da_wiring"], med["da_process"])
    assert chi_med <= 1.2 * land.chi2_min


def test_mcmc_chain_bookkeeping(posterior_seed0):
    assert posterior_seed0.log_chains.shape == (2001, 32, 2)
    assert posterior_seed0.chi2.shape == (2001, 32)
    assert posterior_seed0.burn_in == 500
    assert posterior_seed0.flat().shape == ((2001 - 500) * 32, 2)
    assert posterior_seed0.flat(discard=0).shape == (2001 * 32, 2)
    tau = posterior_seed0.autocorrelation_time
    assert tau.shape == (2,)
    assert np.all((5.0 < tau) & (tau < 120.0))


def test_mcmc_with_zero_data_weight_recovers_the_prior(problem_seed0):
    post = ensemble_mcmc(problem_seed0, n_walkers=32, n_steps=2000, seed=0,
                         data_weight=0.0)
    bounds = problem_seed0.bounds()
    for i, name in enumerate(problem_seed0.free):
        lo, hi = np.log(bounds[name][0]), np.log(bounds[name][1])
        samples = np.log(post.flat()[:, i])
        assert samples.min() >= lo and samples.max() <= hi
        ks = stats.kstest(samples, stats.uniform(loc=lo, scale=hi - lo).cdf).statistic
        assert ks < 0.05


def test_mcmc_aborts_when_the_likelihood_is_unusable(problem_seed0, groups_1c,
                                                     baseline_kinetics, default_ocp):
    obs = problem_seed0.observations
    bad_v = obs.voltage_v.copy()
    bad_v[7] = np.nan
    bad = Observations(obs.filling, bad_v, obs.c_rate, obs.noise_fraction, obs.seed)
    prob = FitProblem(bad, groups_1c, baseline_kinetics, default_ocp)
    with pytest.raises(SamplerStuckError) as info:
        ensemble_mcmc(prob, n_walkers=16, n_steps=50, seed=0)
    assert info.value.diagnostics["acceptance_rate"] == 0.0


def test_mcmc_validation(problem_seed0):
    with pytest.raises(ValueError):
        ensemble_mcmc(problem_seed0, n_walkers=15, n_steps=10)
    with pytest.raises(ValueError):
        ensemble_mcmc(problem_seed0, n_walkers=4, n_steps=10)
    with pytest.raises(ValueError):
        ensemble_mcmc(problem_seed0, n_walkers=16, n_steps=10, data_weight=-1.0)
