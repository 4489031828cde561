"""Characteristic-sorted long-short portfolios and return decomposition.

Each month firms are ranked on one characteristic score and split into
equal-sized top and bottom halves; the equal-weighted long-short return is
then decomposed, through a fitted panel model, into a net fixed-effect term,
per-characteristic level and change contributions, and a net residual. The
per-date terms sum to the long-short return exactly when the fixed effects
come from a window containing that date, and their time-series moments
assemble into a mean/covariance breakdown of the average anomaly return.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .charnorm import CharacteristicsPanel
from .errors import CoverageError, PanelAlignmentError, ThinCrossSectionError
from .panel import PanelEstimate


@dataclass(frozen=True)
class SortedPortfolio:
    """Equal-weighted long-short split on one characteristic.

    Formed at ``date`` by ranking on characteristic ``sort_k``; the return
    is realized over the following month (``return_date``). With an odd
    number of eligible firms the median firm sits in neither leg.
    """

    sort_k: int
    date: str
    return_date: str
    long_leg: list[str]
    short_leg: list[str]
    ls_return: float


@dataclass(frozen=True)
class AnomalyAggregates:
    """Net long-short averages: levels (psi), changes (phi), fixed effects
    (lam), residuals (xi), all under the same leg assignment."""

    psi: np.ndarray
    phi: np.ndarray
    lam: float
    xi: float


@dataclass(frozen=True)
class DecompositionReport:
    """Time-series breakdown of the average long-short return.

    ``mean_ls_return`` equals ``mean_lambda + mu_beta_term + mu_eta_term +
    covariance_beta_psi + covariance_eta_phi + residual`` by construction;
    sample covariances use the 1/M normalization so the product-moment
    identity E[XY] = Cov(X, Y) + E[X]E[Y] holds exactly in-sample.
    """

    sort_k: int
    mean_ls_return: float
    mean_lambda: float
    mu_beta_term: float
    mu_eta_term: float
    covariance_beta_psi: float
    covariance_eta_phi: float
    residual: float
    dates: list[str]
    ls_returns: np.ndarray
    lambdas: np.ndarray
    xis: np.ndarray
    psis: np.ndarray
    phis: np.ndarray
    betas: np.ndarray
    etas: np.ndarray
    note: str = (
        "phi on the sort characteristic is computed from data; the limiting "
        "theory treats it as exactly zero, finite samples generally do not"
    )

    def accounting_gaps(self) -> np.ndarray:
        """Per-date gap of ls_return minus the sum of its decomposition terms."""
        char_terms = (self.betas * self.psis).sum(axis=1) + (self.etas * self.phis).sum(axis=1)
        return self.ls_returns - (self.lambdas + char_terms + self.xis)


def sort_long_short(
    chars: CharacteristicsPanel, returns: np.ndarray, k: int, t: int | str
) -> SortedPortfolio:
    """Split eligible firms on characteristic ``k`` at date ``t``.

    Eligible firms have a score at the sort date and a return over the next
    month. Legs are the top and bottom halves (ties broken by firm
    identifier, median firm excluded when their number is odd); the
    long-short return averages the two legs' log returns arithmetically.
    """
    t = chars.date_index(t) if isinstance(t, str) else t
    if not 0 <= t < chars.n_dates - 1:
        raise PanelAlignmentError(f"sort date index {t} has no following return month")
    scores = chars.scores[t, :, k]
    future = returns[t + 1]
    eligible = np.flatnonzero(np.isfinite(scores) & np.isfinite(future))
    if eligible.size < 4:
        raise ThinCrossSectionError(
            f"only {eligible.size} firms eligible at {chars.dates[t]}; need at least 4"
        )
    order = sorted(eligible, key=lambda n: (scores[n], chars.firms[n]))
    half = len(order) // 2
    if len(order) % 2:
        short_idx, long_idx = order[:half], order[half + 1 :]
    else:
        short_idx, long_idx = order[:half], order[half:]
    ls = float(future[long_idx].mean() - future[short_idx].mean())
    return SortedPortfolio(
        sort_k=k,
        date=chars.dates[t],
        return_date=chars.dates[t + 1],
        long_leg=[chars.firms[n] for n in long_idx],
        short_leg=[chars.firms[n] for n in short_idx],
        ls_return=ls,
    )


def _leg_average(values: dict[str, float], portfolio: SortedPortfolio, what: str) -> float:
    """Mean over the long leg minus mean over the short leg."""
    sums = []
    for leg in (portfolio.long_leg, portfolio.short_leg):
        total = 0.0
        for firm in leg:
            v = values.get(firm)
            if v is None or not np.isfinite(v):
                raise CoverageError(
                    f"missing {what} for leg member {firm!r} at {portfolio.date}"
                )
            total += v
        sums.append(total / len(leg))
    return sums[0] - sums[1]


def portfolio_aggregates(
    chars: CharacteristicsPanel,
    alphas: dict[str, float],
    residuals: dict[tuple[str, str], float],
    portfolio: SortedPortfolio,
    variant: int = 1,
    timing: str = "lagged",
) -> AnomalyAggregates:
    """Net long-short averages of regressor columns, fixed effects, residuals.

    The level and change columns are the ones a matching regression design
    pairs with the portfolio's return month, so the decomposition identity
    ``ls_return = lam + sum_j (beta_j psi_j + eta_j phi_j) + xi`` closes
    exactly for estimates fitted on a window containing that month.
    """
    t = chars.date_index(portfolio.date)
    lag = 1 if timing == "lagged" else 0
    level_t = t + 1 - lag - (1 if variant == 2 else 0)
    change_t = t + 1 - lag
    if level_t < 0:
        raise PanelAlignmentError(
            f"variant {variant} needs scores before {portfolio.date}"
        )
    firm_pos = {f: n for n, f in enumerate(chars.firms)}
    members = portfolio.long_leg + portfolio.short_leg

    psi = np.empty(chars.n_chars)
    phi = np.empty(chars.n_chars)
    for j in range(chars.n_chars):
        levels = {f: float(chars.scores[level_t, firm_pos[f], j]) for f in members}
        changes = {f: float(chars.deltas[change_t, firm_pos[f], j]) for f in members}
        psi[j] = _leg_average(levels, portfolio, f"score ({chars.k_names[j]})")
        phi[j] = _leg_average(changes, portfolio, f"score change ({chars.k_names[j]})")
    lam = _leg_average(alphas, portfolio, "fixed effect")
    resid = {
        f: residuals.get((portfolio.return_date, f), np.nan) for f in members
    }
    xi = _leg_average(resid, portfolio, "residual")
    return AnomalyAggregates(psi=psi, phi=phi, lam=lam, xi=xi)


def decompose_anomaly(
    estimates: list[PanelEstimate],
    chars: CharacteristicsPanel,
    returns: np.ndarray,
    k: int,
) -> DecompositionReport:
    """Decompose the average long-short return through rolling estimates.

    For each estimate the portfolio is formed one month before the window's
    terminal response date (compositions adjust monthly even when windows
    overlap), its aggregates are computed from that window's fixed effects
    and residuals, and the series' sample moments are assembled into mean
    and covariance terms. The residual picks up the net supply-side term and
    makes the report an exact accounting identity.
    """
    if not estimates:
        raise PanelAlignmentError("no estimates supplied to decompose")
    dates, ls, lams, xis = [], [], [], []
    psis, phis, betas, etas = [], [], [], []
    for est in estimates:
        terminal = est.window[1]
        tau = chars.date_index(terminal)
        portfolio = sort_long_short(chars, returns, k, tau - 1)
        if est.method == "pooled":
            members = portfolio.long_leg + portfolio.short_leg
            alphas = {f: float(est.alpha_hat) for f in members}
        else:
            alphas = {f: float(a) for f, a in zip(est.firm_ids, est.alpha_hat)}
        aggs = portfolio_aggregates(
            chars,
            alphas,
            est.residual_map(),
            portfolio,
            variant=est.variant,
            timing=est.timing,
        )
        dates.append(terminal)
        ls.append(portfolio.ls_return)
        lams.append(aggs.lam)
        xis.append(aggs.xi)
        psis.append(aggs.psi)
        phis.append(aggs.phi)
        betas.append(est.beta_hat)
        etas.append(est.eta_hat)

    ls = np.array(ls)
    lams = np.array(lams)
    xis = np.array(xis)
    psis = np.vstack(psis)
    phis = np.vstack(phis)
    betas = np.vstack(betas)
    etas = np.vstack(etas)

    def biased_cov(x: np.ndarray, y: np.ndarray) -> float:
        return float((x * y).mean() - x.mean() * y.mean())

    mu_beta_term = float((betas.mean(axis=0) * psis.mean(axis=0)).sum())
    mu_eta_term = float((etas.mean(axis=0) * phis.mean(axis=0)).sum())
    cov_beta_psi = float(sum(biased_cov(betas[:, j], psis[:, j]) for j in range(psis.shape[1])))
    cov_eta_phi = float(sum(biased_cov(etas[:, j], phis[:, j]) for j in range(phis.shape[1])))
    mean_ls = float(ls.mean())
    mean_lambda = float(lams.mean())
    residual = mean_ls - (mean_lambda + mu_beta_term + mu_eta_term + cov_beta_psi + cov_eta_phi)
    return DecompositionReport(
        sort_k=k,
        mean_ls_return=mean_ls,
        mean_lambda=mean_lambda,
        mu_beta_term=mu_beta_term,
        mu_eta_term=mu_eta_term,
        covariance_beta_psi=cov_beta_psi,
        covariance_eta_phi=cov_eta_phi,
        residual=residual,
        dates=dates,
        ls_returns=ls,
        lambdas=lams,
        xis=xis,
        psis=psis,
        phis=phis,
        betas=betas,
        etas=etas,
    )
