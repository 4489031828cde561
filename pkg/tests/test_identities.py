"""Closed forms vs Monte Carlo oracles for the Gaussian identities."""

import math

import numpy as np
import pytest

from demandeq.errors import NotPositiveSemidefiniteError
from demandeq.identities import (
    SORTED_SPLIT_COEF,
    BivariateGaussianSpec,
    DispersionSpec,
    dispersion_closed_form,
    dispersion_mean_term,
    dispersion_monte_carlo,
    run_verification_grid,
    sorted_split_closed_form,
    sorted_split_monte_carlo,
)


def test_closed_form_values():
    assert sorted_split_closed_form(BivariateGaussianSpec(rho=0.0)) == 0.0
    assert sorted_split_closed_form(
        BivariateGaussianSpec(rho=1.0, sigma_z=1.0)
    ) == pytest.approx(1.5957691216057308, abs=1e-12)
    assert sorted_split_closed_form(
        BivariateGaussianSpec(rho=-0.5, sigma_z=2.0)
    ) == pytest.approx(-1.5957691216057308, abs=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        BivariateGaussianSpec(sigma_y=0.0)
    with pytest.raises(ValueError):
        BivariateGaussianSpec(rho=1.5)


def test_monte_carlo_matches_closed_form_rho_08():
    spec = BivariateGaussianSpec(sigma_z=1.0, rho=0.8)
    est, se = sorted_split_monte_carlo(spec, 1_000_000, seed=42)
    assert est == pytest.approx(SORTED_SPLIT_COEF * 0.8, abs=3 * se)
    assert se < 0.01


def test_monte_carlo_rho_zero():
    est, se = sorted_split_monte_carlo(BivariateGaussianSpec(), 100_000, seed=1)
    assert abs(est) <= 3 * se


def test_monte_carlo_scales_with_sigma_z():
    one, _ = sorted_split_monte_carlo(
        BivariateGaussianSpec(sigma_z=1.0, rho=0.5), 200_000, seed=9
    )
    two, _ = sorted_split_monte_carlo(
        BivariateGaussianSpec(sigma_z=2.0, rho=0.5), 200_000, seed=9
    )
    assert two == pytest.approx(2.0 * one, rel=1e-12)


def test_monte_carlo_grid_within_three_se():
    for rho in (-0.9, -0.5, 0.0, 0.5, 0.9):
        for sigma_z in (0.5, 1.0, 2.0):
            spec = BivariateGaussianSpec(sigma_z=sigma_z, rho=rho)
            est, se = sorted_split_monte_carlo(spec, 200_000, seed=777)
            assert abs(est - sorted_split_closed_form(spec)) <= 3 * se


def test_monte_carlo_sample_floor():
    with pytest.raises(ValueError):
        sorted_split_monte_carlo(BivariateGaussianSpec(), 10, seed=0)


def test_dispersion_single_unit_is_zero():
    spec = DispersionSpec(mu=np.array([1.3]), omega=np.array([[0.5]]), t_len=7)
    assert dispersion_closed_form(spec) == pytest.approx(0.0, abs=1e-15)


def test_dispersion_isotropic_case():
    # equal means, omega = sigma^2 I: hand derivation gives sigma^2 (1 - 1/N) / T
    n, t_len, sigma2 = 17, 12, 0.9
    spec = DispersionSpec(mu=np.full(n, 0.4), omega=sigma2 * np.eye(n), t_len=t_len)
    assert dispersion_closed_form(spec) == pytest.approx(
        sigma2 * (1 - 1 / n) / t_len, abs=1e-15
    )


def test_dispersion_t_scaling_exact():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(9, 9))
    omega = a @ a.T
    mu = rng.normal(size=9)
    short = DispersionSpec(mu=mu, omega=omega, t_len=12)
    long = DispersionSpec(mu=mu, omega=omega, t_len=60)
    noise_short = dispersion_closed_form(short) - dispersion_mean_term(short)
    noise_long = dispersion_closed_form(long) - dispersion_mean_term(long)
    assert noise_short == pytest.approx(5.0 * noise_long, abs=1e-12)
    # standard-deviation ratio of the equal-mean case is 1/sqrt(5)
    iso_short = DispersionSpec(mu=np.zeros(9), omega=omega, t_len=12)
    iso_long = DispersionSpec(mu=np.zeros(9), omega=omega, t_len=60)
    ratio = math.sqrt(dispersion_closed_form(iso_long) / dispersion_closed_form(iso_short))
    assert ratio == pytest.approx(1 / math.sqrt(5), abs=1e-12)


def test_dispersion_terms_nonnegative_on_random_specs():
    rng = np.random.default_rng(8)
    for _ in range(20):
        n = int(rng.integers(2, 25))
        a = rng.normal(size=(n, n))
        spec = DispersionSpec(
            mu=rng.normal(size=n), omega=a @ a.T, t_len=int(rng.integers(1, 40))
        )
        mean_term = dispersion_mean_term(spec)
        noise_term = dispersion_closed_form(spec) - mean_term
        assert mean_term >= -1e-12
        assert noise_term >= -1e-12


def test_dispersion_monte_carlo_matches_closed_form():
    rng = np.random.default_rng(21)
    n = 50
    a = rng.normal(size=(n, n))
    spec = DispersionSpec(mu=rng.normal(size=n), omega=a @ a.T / n, t_len=12)
    est, se = dispersion_monte_carlo(spec, 400, seed=5)
    assert abs(est - dispersion_closed_form(spec)) <= 3 * se


def test_dispersion_monte_carlo_mu_only_is_exact():
    mu = np.array([0.1, -0.4, 0.9, 0.0])
    spec = DispersionSpec(mu=mu, omega=np.zeros((4, 4)), t_len=5)
    est, se = dispersion_monte_carlo(spec, 100, seed=3)
    assert est == pytest.approx(dispersion_mean_term(spec), abs=1e-15)
    assert se <= 1e-15  # replications are identical up to summation rounding


def test_dispersion_large_t_equal_means_vanishes():
    n = 6
    spec = DispersionSpec(mu=np.zeros(n), omega=np.eye(n), t_len=10_000)
    assert dispersion_closed_form(spec) < 1e-4
    est, _ = dispersion_monte_carlo(spec, 100, seed=4)
    assert est < 1e-3


def test_non_psd_omega_rejected():
    omega = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3 and -1
    with pytest.raises(NotPositiveSemidefiniteError):
        DispersionSpec(mu=np.zeros(2), omega=omega, t_len=3)


def test_verification_grid_all_pass():
    results = run_verification_grid(n_samples=200_000, n_reps=150, seed=1234)
    for res in results:
        assert res.passed, f"{res.name}: {res.estimate} vs {res.target} +/- {res.tolerance}"
