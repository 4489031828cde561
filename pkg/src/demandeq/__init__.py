"""Characteristics-driven equilibrium returns toolkit.

Simulate equilibrium log returns from characteristics-based agent demands,
estimate scaled aggregate demands from return/characteristic panels with
pooled or fixed-effects least squares, decompose characteristic-sorted
long-short returns, solve budget-constrained mean-variance demands through
low-rank covariance inversion, and verify the supporting Gaussian identities
against Monte Carlo oracles.
"""

from .anomaly import (
    AnomalyAggregates,
    DecompositionReport,
    SortedPortfolio,
    decompose_anomaly,
    portfolio_aggregates,
    sort_long_short,
)
from .charnorm import (
    CharacteristicsPanel,
    RawPanel,
    build_panel,
    gaussian_rank_normalize,
    gaussian_rank_scores,
    month_range,
)
from .identities import (
    BivariateGaussianSpec,
    DispersionSpec,
    SORTED_SPLIT_COEF,
    dispersion_closed_form,
    dispersion_monte_carlo,
    run_verification_grid,
    sorted_split_closed_form,
    sorted_split_monte_carlo,
)
from .market import (
    AgentPopulation,
    EquilibriumPanel,
    SupplyPath,
    aggregate_demands,
    clear_log_price,
    demand_curve,
    returns_from_aggregates,
    simulate_panel,
    total_demand,
)
from .meanvar import (
    AgentBeliefs,
    MVSolution,
    invert_covariance,
    linear_decomposition,
    optimal_weights,
    posterior_moments,
)
from .panel import (
    PanelEstimate,
    RegressionDesign,
    RollingEstimates,
    build_design,
    estimate_lsdv,
    estimate_pooled,
    rolling_estimate,
    within_transform,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
