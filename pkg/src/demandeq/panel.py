"""Pooled and within (fixed-effects) panel estimation of scaled demands.

The response is the one-month-ahead log return and the regressors stack the
K characteristic levels and their K first differences, giving per-window
estimates of the demand-change loadings (on levels) and demand loadings (on
changes), per-firm fixed effects recovered from group means, classical or
robust standard errors, and rolling-window drivers.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .charnorm import CharacteristicsPanel
from .errors import (
    EmptyWindowError,
    InvalidDesignError,
    PanelAlignmentError,
    SingularDesignError,
)

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


def regressor_names(k_names: Sequence[str]) -> list[str]:
    """Column labels of the stacked design: levels first, then changes."""
    return [f"level_{k}" for k in k_names] + [f"change_{k}" for k in k_names]


@dataclass(frozen=True)
class RegressionDesign:
    """Stacked regression rows keyed by (response date, firm).

    ``regressors`` has 2K columns: the K characteristic levels followed by
    the K characteristic changes, aligned to the response return per
    ``variant`` and ``timing``. Rows are complete (no NaN), there are at
    least 2K + 2 of them, and at least two distinct firms appear.
    """

    dates: np.ndarray
    firms: np.ndarray
    response: np.ndarray
    regressors: np.ndarray
    k_names: list[str]
    variant: int = 1
    timing: str = "lagged"
    demeaned: bool = False
    firm_ids: np.ndarray | None = None
    firm_mean_response: np.ndarray | None = None
    firm_mean_regressors: np.ndarray | None = None

    def __post_init__(self):
        n = self.response.shape[0]
        if self.dates.shape != (n,) or self.firms.shape != (n,):
            raise InvalidDesignError("row index arrays do not match the response")
        if self.regressors.shape != (n, 2 * len(self.k_names)):
            raise InvalidDesignError(
                f"regressor block shape {self.regressors.shape} != ({n}, {2 * len(self.k_names)})"
            )
        if not (np.all(np.isfinite(self.response)) and np.all(np.isfinite(self.regressors))):
            raise InvalidDesignError("design rows must be complete (no missing entries)")
        if n < 2 * len(self.k_names) + 2:
            raise InvalidDesignError(
                f"need at least {2 * len(self.k_names) + 2} rows, got {n}"
            )
        if np.unique(self.firms).size < 2:
            raise InvalidDesignError("need at least two distinct firms")

    @property
    def n_rows(self) -> int:
        return self.response.shape[0]

    @property
    def n_chars(self) -> int:
        return len(self.k_names)


def build_design(
    chars: CharacteristicsPanel,
    returns: np.ndarray,
    variant: int = 1,
    timing: str = "lagged",
) -> RegressionDesign:
    """Join characteristic scores and returns into regression rows.

    For a response return over month tau, the level columns hold scores at
    tau-1 (variant 1) or tau-2 (variant 2) under lagged timing, shifted one
    month later under synchronous timing; the change columns always hold the
    difference ending at the level month of variant 1. Rows with any missing
    entry are dropped.
    """
    if variant not in (1, 2):
        raise ValueError(f"variant must be 1 or 2, got {variant}")
    if timing not in ("lagged", "synchronous"):
        raise ValueError(f"timing must be 'lagged' or 'synchronous', got {timing!r}")
    if returns.shape != (chars.n_dates, chars.n_firms):
        raise PanelAlignmentError(
            f"returns shape {returns.shape} != {(chars.n_dates, chars.n_firms)}"
        )
    lag = 1 if timing == "lagged" else 0
    level_shift = lag + (1 if variant == 2 else 0)
    change_shift = lag

    rows_d, rows_f, ys, zs = [], [], [], []
    for tau in range(chars.n_dates):
        if tau - level_shift < 0 or tau - change_shift < 0:
            continue
        levels = chars.scores[tau - level_shift]
        changes = chars.deltas[tau - change_shift]
        y = returns[tau]
        ok = (
            np.isfinite(y)
            & np.all(np.isfinite(levels), axis=1)
            & np.all(np.isfinite(changes), axis=1)
        )
        idx = np.flatnonzero(ok)
        if idx.size == 0:
            continue
        rows_d.append(np.full(idx.size, chars.dates[tau], dtype=object))
        rows_f.append(np.asarray(chars.firms, dtype=object)[idx])
        ys.append(y[idx])
        zs.append(np.hstack([levels[idx], changes[idx]]))
    if not ys:
        raise EmptyWindowError("no complete rows to build a design from")
    return RegressionDesign(
        dates=np.concatenate(rows_d),
        firms=np.concatenate(rows_f),
        response=np.concatenate(ys),
        regressors=np.vstack(zs),
        k_names=list(chars.k_names),
        variant=variant,
        timing=timing,
    )


def slice_design(design: RegressionDesign, dates: Sequence[str]) -> RegressionDesign:
    """Restrict a design to rows whose response dates fall in ``dates``."""
    wanted = set(dates)
    keep = np.array([d in wanted for d in design.dates])
    if not keep.any():
        raise EmptyWindowError("no rows in the requested date window")
    return RegressionDesign(
        dates=design.dates[keep],
        firms=design.firms[keep],
        response=design.response[keep],
        regressors=design.regressors[keep],
        k_names=design.k_names,
        variant=design.variant,
        timing=design.timing,
    )


def within_transform(design: RegressionDesign) -> RegressionDesign:
    """Demean response and regressors at the firm level.

    Firms with a single row carry no within information (their demeaned row
    is identically zero); they are dropped with a logged warning rather than
    failing the window. Firm means are retained on the result for fixed
    effect recovery.
    """
    if design.demeaned:
        return design
    firm_ids, inverse, counts = np.unique(
        design.firms, return_inverse=True, return_counts=True
    )
    singles = firm_ids[counts < 2]
    if singles.size:
        log.warning(
            "dropping %d singleton firm(s) from within transform: %s",
            singles.size,
            ", ".join(map(str, singles[:10])) + ("..." if singles.size > 10 else ""),
        )
        keep = counts[inverse] >= 2
        if not keep.any():
            raise EmptyWindowError("all firms are singletons in this window")
        design = RegressionDesign(
            dates=design.dates[keep],
            firms=design.firms[keep],
            response=design.response[keep],
            regressors=design.regressors[keep],
            k_names=design.k_names,
            variant=design.variant,
            timing=design.timing,
        )
        firm_ids, inverse, counts = np.unique(
            design.firms, return_inverse=True, return_counts=True
        )

    mean_y = np.bincount(inverse, weights=design.response) / counts
    mean_z = np.empty((firm_ids.size, design.regressors.shape[1]))
    for j in range(design.regressors.shape[1]):
        mean_z[:, j] = np.bincount(inverse, weights=design.regressors[:, j]) / counts
    return RegressionDesign(
        dates=design.dates,
        firms=design.firms,
        response=design.response - mean_y[inverse],
        regressors=design.regressors - mean_z[inverse],
        k_names=design.k_names,
        variant=design.variant,
        timing=design.timing,
        demeaned=True,
        firm_ids=firm_ids,
        firm_mean_response=mean_y,
        firm_mean_regressors=mean_z,
    )


@dataclass(frozen=True)
class PanelEstimate:
    """One window's estimated demand loadings and diagnostics.

    ``beta_hat`` are the level coefficients (demand changes), ``eta_hat`` the
    change coefficients (demand levels); ``alpha_hat`` is the per-firm fixed
    effect vector for the within method or the scalar intercept for pooled.
    Residuals are stored per fitted row so portfolio decompositions can
    close their accounting exactly.
    """

    method: str
    variant: int
    timing: str
    k_names: list[str]
    beta_hat: np.ndarray
    eta_hat: np.ndarray
    alpha_hat: np.ndarray | float
    firm_ids: np.ndarray | None
    std_errors: np.ndarray
    t_stats: np.ndarray
    r_squared: float
    n_obs: int
    dof: int
    window: tuple[str, str]
    row_dates: np.ndarray
    row_firms: np.ndarray
    residuals: np.ndarray

    @property
    def zeta(self) -> np.ndarray:
        """Stacked coefficient vector: level loadings then change loadings."""
        return np.concatenate([self.beta_hat, self.eta_hat])

    def alpha_for(self, firm: str) -> float:
        """Fixed effect of a firm (within) or the common intercept (pooled)."""
        if self.method == "pooled":
            return float(self.alpha_hat)
        idx = np.searchsorted(self.firm_ids, firm)
        if idx >= self.firm_ids.size or self.firm_ids[idx] != firm:
            raise KeyError(firm)
        return float(self.alpha_hat[idx])

    def residual_map(self) -> dict[tuple[str, str], float]:
        """Residual per (response date, firm) row."""
        return {
            (d, f): float(r)
            for d, f, r in zip(self.row_dates, self.row_firms, self.residuals)
        }


def _guarded_normal_solve(gram: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve SPD normal equations with a condition-number guard.

    Returns the solution and the inverse of the Gram matrix. Rank deficiency
    or a condition number above 1e12 raises, reporting the offending
    eigenvalue; there is no pseudo-inverse fallback.
    """
    eigvals = np.linalg.eigvalsh(gram)
    smallest, largest = float(eigvals[0]), float(eigvals[-1])
    if smallest <= 0 or largest / smallest > COND_LIMIT:
        raise SingularDesignError(
            f"cross-product matrix is singular or ill-conditioned "
            f"(smallest eigenvalue {smallest:.6e}, condition "
            f"{largest / smallest if smallest > 0 else float('inf'):.3e})"
        )
    factor = cho_factor(gram)
    solution = cho_solve(factor, rhs)
    inverse = cho_solve(factor, np.eye(gram.shape[0]))
    return solution, inverse


def _coefficient_stats(
    x: np.ndarray, residuals: np.ndarray, xtx_inv: np.ndarray, dof: int, robust: bool
) -> np.ndarray:
    if robust:
        meat = (x * residuals[:, None] ** 2).T @ x
        vcov = xtx_inv @ meat @ xtx_inv * (x.shape[0] / dof)
    else:
        sigma2 = float(residuals @ residuals) / dof
        vcov = sigma2 * xtx_inv
    return np.sqrt(np.clip(np.diag(vcov), 0.0, None))


def estimate_lsdv(design: RegressionDesign, robust: bool = False) -> PanelEstimate:
    """Within (fixed-effects) least squares with recovered firm effects.

    Coefficients solve the demeaned normal equations; each firm's fixed
    effect is its window-mean response minus the fitted window-mean
    regressors. Degrees of freedom are n_obs - n_firms - 2K.
    """
    wd = within_transform(design)
    k2 = 2 * wd.n_chars
    gram = wd.regressors.T @ wd.regressors
    rhs = wd.regressors.T @ wd.response
    n_firms = wd.firm_ids.size
    dof = wd.n_rows - n_firms - k2
    if dof <= 0:
        raise InvalidDesignError(
            f"non-positive degrees of freedom ({wd.n_rows} rows, {n_firms} firms, {k2} coefficients)"
        )
    zeta, gram_inv = _guarded_normal_solve(gram, rhs)
    within_resid = wd.response - wd.regressors @ zeta
    std_errors = _coefficient_stats(wd.regressors, within_resid, gram_inv, dof, robust)
    tss = float(wd.response @ wd.response)
    rss = float(within_resid @ within_resid)
    r_squared = 1.0 - rss / tss if tss > 0 else 0.0

    alpha = wd.firm_mean_response - wd.firm_mean_regressors @ zeta
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = np.where(std_errors > 0, zeta / std_errors, np.nan)
    k = wd.n_chars
    return PanelEstimate(
        method="within",
        variant=wd.variant,
        timing=wd.timing,
        k_names=wd.k_names,
        beta_hat=zeta[:k],
        eta_hat=zeta[k:],
        alpha_hat=alpha,
        firm_ids=wd.firm_ids,
        std_errors=std_errors,
        t_stats=t_stats,
        r_squared=float(r_squared),
        n_obs=wd.n_rows,
        dof=dof,
        window=(min(wd.dates), max(wd.dates)),
        row_dates=wd.dates,
        row_firms=wd.firms,
        residuals=within_resid,
    )


def estimate_pooled(design: RegressionDesign, robust: bool = False) -> PanelEstimate:
    """Single-intercept least squares on the raw (un-demeaned) design."""
    if design.demeaned:
        raise InvalidDesignError("pooled estimation expects an un-demeaned design")
    x = np.hstack([np.ones((design.n_rows, 1)), design.regressors])
    k2 = 2 * design.n_chars
    dof = design.n_rows - k2 - 1
    if dof <= 0:
        raise InvalidDesignError(
            f"non-positive degrees of freedom ({design.n_rows} rows, {k2 + 1} coefficients)"
        )
    coef, gram_inv = _guarded_normal_solve(x.T @ x, x.T @ design.response)
    residuals = design.response - x @ coef
    std_errors = _coefficient_stats(x, residuals, gram_inv, dof, robust)
    centred = design.response - design.response.mean()
    tss = float(centred @ centred)
    rss = float(residuals @ residuals)
    r_squared = 1.0 - rss / tss if tss > 0 else 0.0
    zeta, se = coef[1:], std_errors[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = np.where(se > 0, zeta / se, np.nan)
    k = design.n_chars
    return PanelEstimate(
        method="pooled",
        variant=design.variant,
        timing=design.timing,
        k_names=design.k_names,
        beta_hat=zeta[:k],
        eta_hat=zeta[k:],
        alpha_hat=float(coef[0]),
        firm_ids=None,
        std_errors=se,
        t_stats=t_stats,
        r_squared=float(r_squared),
        n_obs=design.n_rows,
        dof=dof,
        window=(min(design.dates), max(design.dates)),
        row_dates=design.dates,
        row_firms=design.firms,
        residuals=residuals,
    )


def full_residuals(estimate: PanelEstimate, design: RegressionDesign) -> np.ndarray:
    """Residuals of arbitrary raw rows under a fitted model (incl. fixed effects)."""
    fitted = design.regressors @ estimate.zeta
    if estimate.method == "pooled":
        fitted = fitted + float(estimate.alpha_hat)
    else:
        fitted = fitted + np.array([estimate.alpha_for(f) for f in design.firms])
    return design.response - fitted


@dataclass(frozen=True)
class RollingEstimates:
    """Ordered per-terminal-date estimates plus any skipped windows."""

    estimates: list[PanelEstimate]
    skipped: list[tuple[str, str]]


def rolling_estimate(
    chars: CharacteristicsPanel,
    returns: np.ndarray,
    window_len: int,
    method: str = "within",
    variant: int = 1,
    timing: str = "lagged",
    robust: bool = False,
    n_jobs: int = 1,
) -> RollingEstimates:
    """Estimate on rolling windows of consecutive response months.

    One estimate per terminal date, stepping one month; each window uses
    exactly the rows whose response dates fall inside it. Windows whose
    designs are singular or too thin are recorded in ``skipped`` instead of
    being fabricated. Windows are independent, so they may be evaluated in
    parallel (``n_jobs``) with output ordered by terminal date either way.
    """
    if window_len < 2:
        raise ValueError(f"window_len must be at least 2, got {window_len}")
    if method not in ("within", "pooled"):
        raise ValueError(f"method must be 'within' or 'pooled', got {method!r}")
    full = build_design(chars, returns, variant=variant, timing=timing)
    resp_dates = sorted(set(full.dates))
    if window_len > len(resp_dates):
        raise EmptyWindowError(
            f"window of {window_len} months exceeds the panel span of {len(resp_dates)} response months"
        )
    fit = estimate_lsdv if method == "within" else estimate_pooled

    def one_window(i: int):
        window_dates = resp_dates[i - window_len + 1 : i + 1]
        try:
            return fit(slice_design(full, window_dates), robust=robust)
        except (SingularDesignError, InvalidDesignError, EmptyWindowError) as exc:
            return (resp_dates[i], f"{type(exc).__name__}: {exc}")

    indices = range(window_len - 1, len(resp_dates))
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(one_window, indices))
    else:
        outcomes = [one_window(i) for i in indices]

    estimates, skipped = [], []
    for out in outcomes:
        if isinstance(out, PanelEstimate):
            estimates.append(out)
        else:
            skipped.append(out)
            log.warning("skipping window ending %s: %s", out[0], out[1])
    return RollingEstimates(estimates=estimates, skipped=skipped)
