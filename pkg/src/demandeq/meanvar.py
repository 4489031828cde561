"""Budget-constrained mean-variance demands under characteristic beliefs.

An agent believes next-period returns are a linear function of the current
characteristic matrix plus idiosyncratic noise. The implied return moments
give a covariance of the form ``C S C' - r r' + diag(s2)``, which is
inverted without ever factoring an N x N matrix: a small K x K solve for the
low-rank part followed by a rank-one update for the mean outer product. The
optimal weights then decompose into a direct per-asset term plus a term
linear in the characteristics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IllConditionedBeliefsError, InconsistentBeliefsError

COND_LIMIT = 1e12


@dataclass(frozen=True)
class AgentBeliefs:
    """Inputs of the mean-variance problem for one agent.

    Parameters
    ----------
    char_matrix : (N, K) array
        Current characteristic scores per asset.
    beta_hat : (K,) array
        Expected loadings of returns on characteristics.
    sigma_beta : (K, K) array
        Symmetric PSD second-moment estimate of the loadings.
    sigma_e2 : (N,) array
        Strictly positive idiosyncratic error variances.
    gamma : float
        Risk aversion, positive.
    budget : float
        Required sum of weights.
    """

    char_matrix: np.ndarray
    beta_hat: np.ndarray
    sigma_beta: np.ndarray
    sigma_e2: np.ndarray
    gamma: float
    budget: float

    def __post_init__(self):
        c = np.asarray(self.char_matrix, dtype=float)
        if c.ndim != 2:
            raise ValueError("char_matrix must be 2-dimensional")
        object.__setattr__(self, "char_matrix", c)
        object.__setattr__(self, "beta_hat", np.asarray(self.beta_hat, dtype=float))
        object.__setattr__(self, "sigma_beta", np.asarray(self.sigma_beta, dtype=float))
        object.__setattr__(self, "sigma_e2", np.asarray(self.sigma_e2, dtype=float))
        n, k = c.shape
        if self.beta_hat.shape != (k,):
            raise ValueError(f"beta_hat shape {self.beta_hat.shape} != ({k},)")
        if self.sigma_beta.shape != (k, k):
            raise ValueError(f"sigma_beta shape {self.sigma_beta.shape} != ({k}, {k})")
        if not np.allclose(self.sigma_beta, self.sigma_beta.T, atol=1e-12, rtol=0.0):
            raise ValueError("sigma_beta must be symmetric")
        if np.linalg.eigvalsh(self.sigma_beta).min(initial=0.0) < -1e-10:
            raise ValueError("sigma_beta must be positive semi-definite")
        if self.sigma_e2.shape != (n,):
            raise ValueError(f"sigma_e2 shape {self.sigma_e2.shape} != ({n},)")
        if not np.all(self.sigma_e2 > 0):
            raise ValueError("sigma_e2 entries must be strictly positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def n_assets(self) -> int:
        return self.char_matrix.shape[0]

    @property
    def n_chars(self) -> int:
        return self.char_matrix.shape[1]


@dataclass(frozen=True)
class MVSolution:
    """Optimal weights with their linear-in-characteristics decomposition.

    ``weights[n] == f1[n] + char_matrix[n] @ f2[n]`` holds to numerical
    precision and the weights sum to the budget exactly.
    """

    weights: np.ndarray
    delta: float
    f1: np.ndarray
    f2: np.ndarray
    moments: tuple[np.ndarray, np.ndarray]


def posterior_moments(beliefs: AgentBeliefs) -> tuple[np.ndarray, np.ndarray]:
    """Belief-implied expected returns and return covariance.

    ``r_bar = C beta_hat`` and ``V = C sigma_beta C' - r_bar r_bar' +
    diag(sigma_e2)`` (sigma_beta is a second moment, hence the subtraction).

    Raises
    ------
    InconsistentBeliefsError
        If V is not positive definite, i.e. the stated mean is too large
        relative to the stated second moments.
    """
    c = beliefs.char_matrix
    r_bar = c @ beliefs.beta_hat
    v = c @ beliefs.sigma_beta @ c.T - np.outer(r_bar, r_bar) + np.diag(beliefs.sigma_e2)
    v = 0.5 * (v + v.T)
    min_eig = float(np.linalg.eigvalsh(v).min())
    if min_eig <= 0.0:
        raise InconsistentBeliefsError(
            f"implied covariance not positive definite (min eigenvalue {min_eig:.3e})"
        )
    return r_bar, v


def _low_rank_pieces(beliefs: AgentBeliefs):
    """Diagonal inverse, inner K x K matrix and its solved right-hand sides."""
    c = beliefs.char_matrix
    d_inv = 1.0 / beliefs.sigma_e2
    inner = np.eye(beliefs.n_chars) + beliefs.sigma_beta @ (c.T * d_inv) @ c
    cond = np.linalg.cond(inner)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedBeliefsError(
            f"inner {beliefs.n_chars}x{beliefs.n_chars} matrix has condition {cond:.3e}"
        )
    return c, d_inv, inner


def _base_inverse(beliefs: AgentBeliefs) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of ``C sigma_beta C' + diag(sigma_e2)`` via the low-rank route."""
    c, d_inv, inner = _low_rank_pieces(beliefs)
    w = np.linalg.solve(inner, beliefs.sigma_beta @ c.T)  # K x N
    m_inv = np.diag(d_inv) - (d_inv[:, None] * c) @ w * d_inv[None, :]
    return 0.5 * (m_inv + m_inv.T), d_inv


def invert_covariance(beliefs: AgentBeliefs) -> np.ndarray:
    """Invert the belief-implied covariance without a dense factorization.

    The rank-K part is handled by a K x K solve against the diagonal error
    matrix; the mean outer product is then removed by a rank-one update with
    denominator ``1 - r_bar' M^{-1} r_bar``, which must be positive for the
    covariance to be positive definite.
    """
    r_bar = beliefs.char_matrix @ beliefs.beta_hat
    m_inv, _ = _base_inverse(beliefs)
    m = m_inv @ r_bar
    q = float(r_bar @ m)
    if q >= 1.0:
        raise InconsistentBeliefsError(
            f"mean outer product dominates the base covariance (q = {q:.6f} >= 1)"
        )
    v_inv = m_inv + np.outer(m, m) / (1.0 - q)
    return 0.5 * (v_inv + v_inv.T)


def _linear_terms(
    beliefs: AgentBeliefs, delta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Direct term f1 and per-asset characteristic loadings f2 (N x K)."""
    c, d_inv, inner = _low_rank_pieces(beliefs)
    r_bar = c @ beliefs.beta_hat
    m_inv, _ = _base_inverse(beliefs)
    m = m_inv @ r_bar
    q = float(r_bar @ m)
    if q >= 1.0:
        raise InconsistentBeliefsError(
            f"mean outer product dominates the base covariance (q = {q:.6f} >= 1)"
        )
    target = r_bar + delta
    u = target + r_bar * float(m @ target) / (1.0 - q)
    f1 = d_inv * u / beliefs.gamma
    v = np.linalg.solve(inner, beliefs.sigma_beta @ c.T @ (d_inv * u))  # (K,)
    f2 = -np.outer(d_inv / beliefs.gamma, v)
    return f1, f2


def optimal_weights(beliefs: AgentBeliefs) -> MVSolution:
    """Solve the budget-constrained mean-variance problem in closed form.

    The multiplier enforcing the budget is
    ``delta = (gamma * budget - 1'V^{-1} r_bar) / (1'V^{-1} 1)`` and the
    weights are ``V^{-1} (r_bar + delta 1) / gamma``. The returned solution
    carries the (f1, f2) decomposition computed through the low-rank route,
    so its reconstruction residual is a genuine cross-check of both paths.
    """
    r_bar, v = posterior_moments(beliefs)
    v_inv = invert_covariance(beliefs)
    ones = np.ones(beliefs.n_assets)
    sum_r = float(ones @ (v_inv @ r_bar))
    sum_1 = float(ones @ (v_inv @ ones))
    if sum_1 <= 0.0:
        raise InconsistentBeliefsError(
            "1'V^{-1}1 <= 0: inverse is inconsistent with a positive definite V"
        )
    delta = (beliefs.gamma * beliefs.budget - sum_r) / sum_1
    weights = v_inv @ (r_bar + delta * ones) / beliefs.gamma
    f1, f2 = _linear_terms(beliefs, delta)
    return MVSolution(weights=weights, delta=float(delta), f1=f1, f2=f2, moments=(r_bar, v))


def linear_decomposition(
    solution: MVSolution, beliefs: AgentBeliefs
) -> tuple[np.ndarray, np.ndarray]:
    """Recompute (f1, f2) from beliefs and the solution's budget multiplier."""
    return _linear_terms(beliefs, solution.delta)


def reconstruction_error(solution: MVSolution, beliefs: AgentBeliefs) -> float:
    """Max absolute gap between weights and f1 + sum_k c_k f2_k."""
    rebuilt = solution.f1 + (beliefs.char_matrix * solution.f2).sum(axis=1)
    return float(np.abs(solution.weights - rebuilt).max())
