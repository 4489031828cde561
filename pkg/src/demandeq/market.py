"""Characteristics-based agent demands, market clearing and return simulation.

Agents demand each asset as a baseline plus a linear function of its
characteristic scores plus a (negative, in aggregate) multiple of its log
price. Matching total net demand to an exogenous supply path pins down log
prices in closed form; simulated log returns then split exactly into a
per-firm latent-demand change, characteristic level and change terms with
known aggregate coefficients, and a supply innovation. The simulator keeps
those ground-truth aggregates so estimators can be scored against them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .charnorm import CharacteristicsPanel
from .errors import EquilibriumIllPosedError, PanelAlignmentError

IDENTITY_TOL = 1e-10


def demand_curve(appeal: float, slope: float, price: float) -> float:
    """Net demand at a price: ``appeal - slope * log(price)``."""
    if not price > 0:
        raise ValueError(f"price must be positive, got {price}")
    return appeal - slope * math.log(price)


@dataclass(frozen=True)
class AgentPopulation:
    """Wealth paths, log-price slopes, characteristic coefficients, baselines.

    Arrays are indexed (date, agent[, characteristic | firm]):
    ``wealth`` (T, I) strictly positive, ``price_slope`` (T, I),
    ``char_coeffs`` (T, I, K), ``baseline`` (T, I, N). A well-posed market
    additionally needs ``kappa = -(wealth * price_slope).sum(agents) > 0``
    at each date; the clearing operations check that and refuse to run
    otherwise.
    """

    dates: list[str]
    wealth: np.ndarray
    price_slope: np.ndarray
    char_coeffs: np.ndarray
    baseline: np.ndarray

    def __post_init__(self):
        t = len(self.dates)
        if self.wealth.shape[0] != t or self.wealth.ndim != 2:
            raise PanelAlignmentError(f"wealth shape {self.wealth.shape} != (T={t}, I)")
        i = self.wealth.shape[1]
        if self.price_slope.shape != (t, i):
            raise PanelAlignmentError("price_slope shape mismatch")
        if self.char_coeffs.ndim != 3 or self.char_coeffs.shape[:2] != (t, i):
            raise PanelAlignmentError("char_coeffs shape mismatch")
        if self.baseline.ndim != 3 or self.baseline.shape[:2] != (t, i):
            raise PanelAlignmentError("baseline shape mismatch")
        if not np.all(self.wealth > 0):
            raise ValueError("agent wealth must be strictly positive")

    @classmethod
    def with_common_baseline(
        cls,
        dates: list[str],
        wealth: np.ndarray,
        price_slope: np.ndarray,
        char_coeffs: np.ndarray,
        baseline: np.ndarray,
        n_firms: int,
    ) -> "AgentPopulation":
        """Broadcast a firm-independent (T, I) baseline across ``n_firms``."""
        dense = np.repeat(np.asarray(baseline, dtype=float)[:, :, None], n_firms, axis=2)
        return cls(dates, wealth, price_slope, char_coeffs, dense)

    @property
    def n_agents(self) -> int:
        return self.wealth.shape[1]

    @property
    def n_chars(self) -> int:
        return self.char_coeffs.shape[2]

    @property
    def n_firms(self) -> int:
        return self.baseline.shape[2]

    def kappa(self) -> np.ndarray:
        """Minus the aggregate wealth-weighted log-price slope, per date."""
        return -(self.wealth * self.price_slope).sum(axis=1)

    def scaled_wealth(self) -> np.ndarray:
        """Wealth divided by kappa, per (date, agent); requires kappa > 0."""
        kappa = self.kappa()
        _require_positive_kappa(kappa, self.dates)
        return self.wealth / kappa[:, None]


def _require_positive_kappa(kappa: np.ndarray, dates: list[str]) -> None:
    bad = np.flatnonzero(~(kappa > 0))
    if bad.size:
        t = int(bad[0])
        raise EquilibriumIllPosedError(
            f"aggregate log-price demand slope is not negative at {dates[t]} "
            f"(kappa = {kappa[t]:.6g}); clearing formula invalid"
        )


@dataclass(frozen=True)
class SupplyPath:
    """Exogenous per (date, firm) net supply provided by outside traders."""

    dates: list[str]
    supply: np.ndarray

    def __post_init__(self):
        if self.supply.shape[0] != len(self.dates) or self.supply.ndim != 2:
            raise PanelAlignmentError(
                f"supply shape {self.supply.shape} != (T={len(self.dates)}, N)"
            )
        if not np.all(np.isfinite(self.supply)):
            raise ValueError("supply values must be finite")

    @classmethod
    def gaussian(
        cls, dates: list[str], n_firms: int, sigma: float, seed: int
    ) -> "SupplyPath":
        """I.i.d. mean-zero Gaussian supply, so innovations are mean zero."""
        rng = np.random.default_rng(seed)
        return cls(dates, rng.normal(0.0, sigma, (len(dates), n_firms)))


@dataclass(frozen=True)
class EquilibriumPanel:
    """Simulated log prices and returns with their generating aggregates.

    Row ``t`` of ``log_returns`` is the return over month ``t`` (price at t
    minus price at t-1); rows where the model is not yet defined are NaN.
    ``true_eta[t]`` is the scaled aggregate characteristic demand at ``t``,
    ``true_beta[t]`` its one-month change, ``true_alpha[t]`` the per-firm
    change in scaled non-characteristic demand, all NaN at undefined rows.
    """

    dates: list[str]
    firms: list[str]
    k_names: list[str]
    log_prices: np.ndarray
    log_returns: np.ndarray
    true_beta: np.ndarray
    true_eta: np.ndarray
    true_alpha: np.ndarray
    kappa: np.ndarray
    variant: int = 1
    timing: str = "lagged"

    def first_return_index(self) -> int:
        """Index of the first date with a defined simulated return."""
        defined = np.flatnonzero(np.all(np.isfinite(self.log_returns), axis=1))
        if defined.size == 0:
            raise PanelAlignmentError("panel has no defined returns")
        return int(defined[0])


def clear_log_price(
    agents: AgentPopulation, t: int, char_demand: np.ndarray, supply: np.ndarray
) -> np.ndarray:
    """Clear one date: log prices equating total net demand with supply.

    ``char_demand`` holds the per (agent, firm) characteristic component of
    demand; the result is ``(wealth @ (baseline + char_demand) - supply) /
    kappa`` with ``kappa = -(wealth * price_slope).sum()`` required positive.
    """
    wealth = agents.wealth[t]
    kappa = -(wealth * agents.price_slope[t]).sum()
    if not kappa > 0:
        raise EquilibriumIllPosedError(
            f"aggregate log-price demand slope is not negative at {agents.dates[t]} "
            f"(kappa = {kappa:.6g}); clearing formula invalid"
        )
    char_demand = np.asarray(char_demand, dtype=float)
    if char_demand.shape != (agents.n_agents, supply.shape[0]):
        raise PanelAlignmentError(
            f"char_demand shape {char_demand.shape} != (I, N)"
        )
    return (wealth @ (agents.baseline[t] + char_demand) - supply) / kappa


@dataclass(frozen=True)
class AggregateDemands:
    """Scaled aggregates over one month transition: eta at t, changes at t+1."""

    beta: np.ndarray
    eta: np.ndarray
    alpha: np.ndarray
    kappa_pair: tuple[float, float]


def aggregate_demands(agents: AgentPopulation, t: int) -> AggregateDemands:
    """Aggregate scaled demands for the transition from date t to t+1.

    ``eta[k]`` sums scaled wealth times characteristic coefficients at t,
    ``beta[k]`` is the change of that sum between t and t+1, and ``alpha[n]``
    the matching change of scaled baselines.
    """
    if not 0 <= t < len(agents.dates) - 1:
        raise PanelAlignmentError(f"need agent data at t and t+1, got t={t}")
    kappa = agents.kappa()[t : t + 2]
    _require_positive_kappa(kappa, agents.dates[t : t + 2])
    b_now = agents.wealth[t] / kappa[0]
    b_next = agents.wealth[t + 1] / kappa[1]
    eta = b_now @ agents.char_coeffs[t]
    beta = b_next @ agents.char_coeffs[t + 1] - eta
    alpha = b_next @ agents.baseline[t + 1] - b_now @ agents.baseline[t]
    return AggregateDemands(
        beta=beta, eta=eta, alpha=alpha, kappa_pair=(float(kappa[0]), float(kappa[1]))
    )


def _check_alignment(
    agents: AgentPopulation, chars: CharacteristicsPanel, supply: SupplyPath
) -> None:
    if agents.dates != chars.dates or supply.dates != chars.dates:
        raise PanelAlignmentError("agents, characteristics and supply dates differ")
    if agents.n_firms != chars.n_firms or supply.supply.shape[1] != chars.n_firms:
        raise PanelAlignmentError("firm axes of agents, characteristics, supply differ")
    if agents.n_chars != chars.n_chars:
        raise PanelAlignmentError("characteristic axes of agents and panel differ")
    if not np.all(np.isfinite(chars.scores)):
        raise PanelAlignmentError("simulation requires complete characteristic scores")


def simulate_panel(
    agents: AgentPopulation,
    chars: CharacteristicsPanel,
    supply: SupplyPath,
    variant: int = 1,
    timing: str = "lagged",
) -> EquilibriumPanel:
    """Simulate equilibrium log prices and returns over the panel dates.

    With ``timing='lagged'`` demand at date t reacts to scores at t-1 (so
    characteristics predict returns); with ``'synchronous'`` it reacts to
    scores at t. Prices chain into returns, ground-truth aggregates are
    attached, and both algebraically equivalent level/change decompositions
    of the returns are verified against the price-difference path to 1e-10
    before the panel is returned.
    """
    if timing not in ("lagged", "synchronous"):
        raise ValueError(f"timing must be 'lagged' or 'synchronous', got {timing!r}")
    if variant not in (1, 2):
        raise ValueError(f"variant must be 1 or 2, got {variant}")
    _check_alignment(agents, chars, supply)
    t_len, n_firms = len(chars.dates), chars.n_firms
    kappa = agents.kappa()
    _require_positive_kappa(kappa, agents.dates)
    lag = 1 if timing == "lagged" else 0

    log_prices = np.full((t_len, n_firms), np.nan)
    for t in range(lag, t_len):
        g = agents.char_coeffs[t] @ chars.scores[t - lag].T  # (I, N)
        log_prices[t] = clear_log_price(agents, t, g, supply.supply[t])

    log_returns = np.full((t_len, n_firms), np.nan)
    log_returns[lag + 1 :] = log_prices[lag + 1 :] - log_prices[lag:-1]

    scaled = agents.scaled_wealth()
    eta = np.einsum("ti,tik->tk", scaled, agents.char_coeffs)
    beta = np.full_like(eta, np.nan)
    beta[1:] = eta[1:] - eta[:-1]
    alpha_level = np.einsum("ti,tin->tn", scaled, agents.baseline)
    alpha = np.full_like(alpha_level, np.nan)
    alpha[1:] = alpha_level[1:] - alpha_level[:-1]

    panel = EquilibriumPanel(
        dates=list(chars.dates),
        firms=list(chars.firms),
        k_names=list(chars.k_names),
        log_prices=log_prices,
        log_returns=log_returns,
        true_beta=beta,
        true_eta=eta,
        true_alpha=alpha,
        kappa=kappa,
        variant=variant,
        timing=timing,
    )
    for identity in (1, 2):
        path = returns_from_aggregates(panel, chars, supply, identity=identity)
        defined = np.isfinite(log_returns)
        gap = np.abs(path[defined] - log_returns[defined]).max(initial=0.0)
        if gap > IDENTITY_TOL:
            raise AssertionError(
                f"identity-{identity} return path deviates from prices by {gap:.3e}"
            )
    return panel


def returns_from_aggregates(
    panel: EquilibriumPanel,
    chars: CharacteristicsPanel,
    supply: SupplyPath,
    identity: int = 1,
) -> np.ndarray:
    """Rebuild the return path from the attached aggregates.

    The characteristic term of the return over month tau can be split two
    equivalent ways around the same one-month demand change ``beta[tau]``:
    identity 1 pairs the level with ``beta[tau]`` and the change with
    ``eta[tau-1]``; identity 2 pairs the previous level with ``beta[tau]``
    and the change with ``eta[tau]``. Both must reproduce the
    price-difference returns wherever those are defined.
    """
    if identity not in (1, 2):
        raise ValueError(f"identity must be 1 or 2, got {identity}")
    if chars.dates != panel.dates or supply.dates != panel.dates:
        raise PanelAlignmentError("panel, characteristics and supply dates differ")
    lag = 1 if panel.timing == "lagged" else 0
    t_len, n_firms = panel.log_returns.shape
    out = np.full((t_len, n_firms), np.nan)
    scaled_supply = supply.supply / panel.kappa[:, None]
    for tau in range(lag + 1, t_len):
        level_now = chars.scores[tau - lag]      # enters the price at tau
        level_prev = chars.scores[tau - 1 - lag]  # entered the price at tau-1
        change = level_now - level_prev
        if identity == 1:
            char_term = level_now @ panel.true_beta[tau] + change @ panel.true_eta[tau - 1]
        else:
            char_term = level_prev @ panel.true_beta[tau] + change @ panel.true_eta[tau]
        innovation = scaled_supply[tau - 1] - scaled_supply[tau]
        out[tau] = panel.true_alpha[tau] + char_term + innovation
    return out


def total_demand(
    agents: AgentPopulation,
    chars: CharacteristicsPanel,
    log_prices: np.ndarray,
    t: int,
    timing: str = "lagged",
) -> np.ndarray:
    """Total wealth-weighted net demand at date t given log prices.

    Used to verify clearing: plugging equilibrium log prices back in must
    reproduce the supply path.
    """
    lag = 1 if timing == "lagged" else 0
    g = agents.char_coeffs[t] @ chars.scores[t - lag].T
    per_agent = agents.baseline[t] + g + agents.price_slope[t][:, None] * log_prices[None, :]
    return agents.wealth[t] @ per_agent
