"""Shared builders for simulated markets used across the test suite."""

import numpy as np

from demandeq.charnorm import CharacteristicsPanel, month_range
from demandeq.market import AgentPopulation, SupplyPath


def gaussian_chars(rng, t_len, n_firms, n_chars, clip=3.0):
    scores = np.clip(rng.standard_normal((t_len, n_firms, n_chars)), -clip, clip)
    return CharacteristicsPanel(
        dates=month_range("2000-01", t_len),
        firms=[f"F{i:04d}" for i in range(n_firms)],
        k_names=[f"c{j}" for j in range(n_chars)],
        scores=scores,
    )


def random_market(rng, t_len=6, n_firms=8, n_chars=2, n_agents=3, supply_sigma=0.3):
    """Arbitrary agent paths with a well-posed clearing slope at every date."""
    dates = month_range("2000-01", t_len)
    wealth = rng.uniform(0.5, 2.0, (t_len, n_agents))
    price_slope = -rng.uniform(0.2, 1.5, (t_len, n_agents))
    char_coeffs = rng.normal(0.0, 0.5, (t_len, n_agents, n_chars))
    baseline = rng.normal(0.0, 0.5, (t_len, n_agents, n_firms))
    agents = AgentPopulation(dates, wealth, price_slope, char_coeffs, baseline)
    chars = gaussian_chars(rng, t_len, n_firms, n_chars)
    supply = SupplyPath(dates, rng.normal(0.0, supply_sigma, (t_len, n_firms)))
    return agents, chars, supply


def drifting_market(
    rng,
    t_len,
    n_firms,
    n_chars,
    eta_start=None,
    beta_drift=0.0,
    eta_sigma=0.0,
    alpha_sigma=0.1,
    supply_sigma=0.0,
):
    """Single aggregated agent with controlled demand dynamics.

    Wealth 1 and slope -1 give kappa = 1, so the scaled demand path equals
    the coefficient path directly: eta[t] = eta_start + t * beta_drift +
    random-walk noise, and the per-firm latent change alpha[t, n] is a
    time-constant draw (baselines drift linearly per firm).
    """
    dates = month_range("2000-01", t_len)
    wealth = np.ones((t_len, 1))
    price_slope = -np.ones((t_len, 1))
    if eta_start is None:
        eta_start = rng.normal(0.0, 0.3, n_chars)
    steps = rng.normal(0.0, eta_sigma, (t_len, n_chars)) if eta_sigma > 0 else np.zeros((t_len, n_chars))
    eta_path = eta_start + beta_drift * np.arange(t_len)[:, None] + np.cumsum(steps, axis=0)
    char_coeffs = eta_path[:, None, :]
    alpha_const = rng.normal(0.0, alpha_sigma, n_firms)
    base_level = rng.normal(0.0, 0.5, n_firms)
    baseline = base_level + alpha_const * np.arange(t_len)[:, None]
    agents = AgentPopulation(dates, wealth, price_slope, char_coeffs, baseline[:, None, :])
    chars = gaussian_chars(rng, t_len, n_firms, n_chars)
    if supply_sigma > 0:
        supply = SupplyPath(dates, rng.normal(0.0, supply_sigma, (t_len, n_firms)))
    else:
        supply = SupplyPath(dates, np.zeros((t_len, n_firms)))
    return agents, chars, supply, {"eta_path": eta_path, "alpha": alpha_const}
