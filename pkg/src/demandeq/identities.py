"""Closed-form Gaussian identities with matching Monte Carlo oracles.

Two families are covered: the expected gap between the top and bottom half
of one Gaussian variable when sorting on a correlated one, and the expected
cross-sectional dispersion of per-unit sample means over a finite time
window. Each closed form ships with a seeded Monte Carlo estimator so the
pair can cross-check itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveSemidefiniteError, ResampleError

# E[Z | Y > median] - E[Z | Y < median] for standard bivariate Gaussians
# equals this constant times rho * sigma_z.
SORTED_SPLIT_COEF = 4.0 / math.sqrt(2.0 * math.pi)

PSD_TOL = 1e-10


@dataclass(frozen=True)
class BivariateGaussianSpec:
    """Zero-mean bivariate Gaussian: sort variable Y and payoff variable Z."""

    sigma_y: float = 1.0
    sigma_z: float = 1.0
    rho: float = 0.0

    def __post_init__(self):
        if not (self.sigma_y > 0 and self.sigma_z > 0):
            raise ValueError("sigma_y and sigma_z must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")


def sorted_split_closed_form(spec: BivariateGaussianSpec) -> float:
    """Exact value of E[Z | Y > 0] - E[Z | Y < 0] (zero is the median of Y)."""
    return SORTED_SPLIT_COEF * spec.rho * spec.sigma_z


def sorted_split_monte_carlo(
    spec: BivariateGaussianSpec, n_samples: int, seed: int
) -> tuple[float, float]:
    """Estimate the sorted-split gap by sampling and sign-splitting on Y.

    Z is generated through the conditional decomposition
    ``Z = rho * (sigma_z / sigma_y) * Y + sigma_z * sqrt(1 - rho^2) * W``
    and split on the sign of Y, i.e. on the true median rather than the
    sample one. Returns the estimate and its standard error.
    """
    if n_samples < 1000:
        raise ValueError(f"n_samples must be at least 1000, got {n_samples}")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(n_samples)
    w = rng.standard_normal(n_samples)
    y = spec.sigma_y * u
    z = spec.rho * spec.sigma_z * u + spec.sigma_z * math.sqrt(1.0 - spec.rho**2) * w
    pos = y > 0
    n_pos = int(pos.sum())
    if n_pos == 0 or n_pos == n_samples:
        raise ResampleError("all draws fell on one side of the median; resample")
    z_pos, z_neg = z[pos], z[~pos]
    estimate = float(z_pos.mean() - z_neg.mean())
    std_error = float(
        math.sqrt(z_pos.var(ddof=1) / n_pos + z_neg.var(ddof=1) / (n_samples - n_pos))
    )
    return estimate, std_error


def _check_psd(omega: np.ndarray) -> np.ndarray:
    """Validate symmetry and PSD-ness; return eigenvalues for factorization."""
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise NotPositiveSemidefiniteError(f"omega must be square, got {omega.shape}")
    if not np.allclose(omega, omega.T, atol=1e-12, rtol=0.0):
        raise NotPositiveSemidefiniteError("omega is not symmetric")
    eigvals, eigvecs = np.linalg.eigh(omega)
    if eigvals.min(initial=0.0) < -PSD_TOL:
        raise NotPositiveSemidefiniteError(
            f"omega has eigenvalue {eigvals.min():.3e} below -{PSD_TOL:g}"
        )
    return eigvals, eigvecs


@dataclass(frozen=True)
class DispersionSpec:
    """Mean vector, covariance matrix and window length of an i.i.d. panel."""

    mu: np.ndarray
    omega: np.ndarray
    t_len: int

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        if self.t_len < 1:
            raise ValueError(f"t_len must be >= 1, got {self.t_len}")
        _check_psd(self.omega)
        if self.mu.shape != (self.omega.shape[0],):
            raise ValueError(
                f"mu shape {self.mu.shape} does not match omega {self.omega.shape}"
            )

    @property
    def n_units(self) -> int:
        return self.mu.shape[0]


def dispersion_closed_form(spec: DispersionSpec) -> float:
    """Expected cross-sectional variance of per-unit time means.

    Splits into a mean-heterogeneity term, (1/N) sum_n mu_n^2 - mu_bar^2,
    and a sampling-noise term that decays exactly as 1/T:
    (1/T) * (mean of diag(omega) - mean of all omega entries).
    """
    mu = spec.mu
    n = spec.n_units
    mean_term = float(mu @ mu / n - mu.mean() ** 2)
    noise_term = float((np.trace(spec.omega) / n - spec.omega.mean()) / spec.t_len)
    return mean_term + noise_term


def dispersion_mean_term(spec: DispersionSpec) -> float:
    """The T-independent component of :func:`dispersion_closed_form`."""
    mu = spec.mu
    return float(mu @ mu / spec.n_units - mu.mean() ** 2)


def dispersion_monte_carlo(
    spec: DispersionSpec, n_reps: int, seed: int
) -> tuple[float, float]:
    """Estimate the dispersion by simulating i.i.d. Gaussian panels.

    Each replication draws a (T, N) panel, takes per-unit means over T and
    computes their cross-sectional variance (1/N normalization); replications
    use independently derived seeds so a parallel schedule cannot change the
    result. Returns the estimate and its standard error across replications.
    """
    if n_reps < 100:
        raise ValueError(f"n_reps must be at least 100, got {n_reps}")
    eigvals, eigvecs = _check_psd(spec.omega)
    chol_like = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    seeds = np.random.SeedSequence(seed).spawn(n_reps)
    stats = np.empty(n_reps)
    for i, child in enumerate(seeds):
        rng = np.random.default_rng(child)
        z = spec.mu + rng.standard_normal((spec.t_len, spec.n_units)) @ chol_like.T
        unit_means = z.mean(axis=0)
        stats[i] = ((unit_means - unit_means.mean()) ** 2).mean()
    estimate = float(stats.mean())
    std_error = float(stats.std(ddof=1) / math.sqrt(n_reps))
    return estimate, std_error


@dataclass(frozen=True)
class CheckResult:
    """One verification line: estimate vs target at a stated tolerance."""

    name: str
    estimate: float
    target: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.estimate - self.target) <= self.tolerance


def run_verification_grid(
    n_samples: int = 1_000_000, n_reps: int = 200, seed: int = 1234
) -> list[CheckResult]:
    """Run the full identity grid used by the ``verify`` command.

    Sorted-split Monte Carlo against its closed form over a 15-point
    (rho, sigma_z) grid at 3 standard errors, dispersion Monte Carlo against
    its closed form on random PSD specs at 3 standard errors, the exact 1/T
    scaling of the noise term, and the equal-mean isotropic special case
    sigma^2 (1 - 1/N) / T.
    """
    results: list[CheckResult] = []
    root = np.random.SeedSequence(seed)
    split_seeds = iter(root.spawn(64))

    for rho in (-0.9, -0.5, 0.0, 0.5, 0.9):
        for sigma_z in (0.5, 1.0, 2.0):
            spec = BivariateGaussianSpec(sigma_y=1.0, sigma_z=sigma_z, rho=rho)
            est, se = sorted_split_monte_carlo(
                spec, n_samples, int(next(split_seeds).generate_state(1)[0])
            )
            results.append(
                CheckResult(
                    name=f"sorted_split rho={rho:+.1f} sigma_z={sigma_z}",
                    estimate=est,
                    target=sorted_split_closed_form(spec),
                    tolerance=3.0 * se,
                )
            )

    disp_rng = np.random.default_rng(root.spawn(1)[0])
    for i in range(5):
        n = int(disp_rng.integers(5, 30))
        t_len = int(disp_rng.integers(2, 24))
        mu = disp_rng.normal(0.0, 0.5, n)
        a = disp_rng.normal(0.0, 1.0, (n, n))
        omega = a @ a.T / n
        spec = DispersionSpec(mu=mu, omega=omega, t_len=t_len)
        est, se = dispersion_monte_carlo(spec, n_reps, seed + 1000 + i)
        results.append(
            CheckResult(
                name=f"dispersion spec {i} (N={n}, T={t_len})",
                estimate=est,
                target=dispersion_closed_form(spec),
                tolerance=3.0 * max(se, 1e-12),
            )
        )

    # exact 1/T scaling of the noise term
    mu = disp_rng.normal(0.0, 1.0, 10)
    a = disp_rng.normal(0.0, 1.0, (10, 10))
    omega = a @ a.T / 10
    short = DispersionSpec(mu=mu, omega=omega, t_len=12)
    long = DispersionSpec(mu=mu, omega=omega, t_len=60)
    noise_short = dispersion_closed_form(short) - dispersion_mean_term(short)
    noise_long = dispersion_closed_form(long) - dispersion_mean_term(long)
    results.append(
        CheckResult(
            name="dispersion noise term 1/T scaling (T=12 vs 60)",
            estimate=noise_short,
            target=5.0 * noise_long,
            tolerance=1e-12,
        )
    )

    # equal means, isotropic covariance
    n, t_len, sigma2 = 20, 12, 0.7
    iso = DispersionSpec(mu=np.zeros(n), omega=sigma2 * np.eye(n), t_len=t_len)
    results.append(
        CheckResult(
            name="dispersion isotropic case sigma^2 (1 - 1/N) / T",
            estimate=dispersion_closed_form(iso),
            target=sigma2 * (1.0 - 1.0 / n) / t_len,
            tolerance=1e-12,
        )
    )
    return results
