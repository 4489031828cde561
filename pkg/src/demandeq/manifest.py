"""Materialize simulation inputs from a configuration manifest.

A manifest names the panel dimensions and one generative rule per component
(wealth, price slopes, characteristic coefficients, baselines, supply,
characteristic scores), or gives explicit per-date arrays. Each component
draws from an independently derived seed stream, so the same (manifest,
seed) pair always produces the same market.
"""

from __future__ import annotations

import numpy as np

from .charnorm import CharacteristicsPanel, gaussian_rank_scores, month_range
from .errors import InputFormatError
from .market import AgentPopulation, SupplyPath

_DEFAULTS = {
    "start_date": "2000-01",
    "n_agents": 1,
    "char_names": None,
    "timing": "lagged",
    "variant": 1,
    "wealth": {"kind": "constant", "value": 1.0},
    "price_slope": {"kind": "constant", "value": -1.0},
    "char_coeffs": {"kind": "random_walk", "initial_sigma": 0.2, "step_sigma": 0.02, "drift": 0.0},
    "baseline": {"kind": "linear_drift", "level_sigma": 0.5, "drift_sigma": 0.05},
    "supply": {"kind": "gaussian", "sigma": 0.1},
    "characteristics": {"kind": "gaussian", "phi": 0.0, "correlation": 0.0},
}


def _rule(cfg, name) -> dict:
    rule = cfg.get(name, _DEFAULTS[name])
    if not isinstance(rule, dict) or "kind" not in rule:
        raise InputFormatError(f"manifest entry {name!r} must be a table with a 'kind'")
    return rule


def _bad_kind(name, rule, valid):
    return InputFormatError(
        f"manifest entry {name!r}: unknown kind {rule['kind']!r}; valid: {sorted(valid)}"
    )


def _explicit(rule, shape, name) -> np.ndarray:
    arr = np.asarray(rule["values"], dtype=float)
    if arr.shape != shape:
        raise InputFormatError(
            f"manifest entry {name!r}: explicit values have shape {arr.shape}, expected {shape}"
        )
    return arr


def _wealth(rule, t, i, rng) -> np.ndarray:
    if rule["kind"] == "constant":
        return np.full((t, i), float(rule.get("value", 1.0)))
    if rule["kind"] == "lognormal_walk":
        steps = rng.normal(0.0, float(rule.get("sigma", 0.05)), (t, i))
        return float(rule.get("initial", 1.0)) * np.exp(np.cumsum(steps, axis=0))
    if rule["kind"] == "explicit":
        return _explicit(rule, (t, i), "wealth")
    raise _bad_kind("wealth", rule, {"constant", "lognormal_walk", "explicit"})


def _price_slope(rule, t, i) -> np.ndarray:
    if rule["kind"] == "constant":
        return np.full((t, i), float(rule.get("value", -1.0)))
    if rule["kind"] == "explicit":
        return _explicit(rule, (t, i), "price_slope")
    raise _bad_kind("price_slope", rule, {"constant", "explicit"})


def _char_coeffs(rule, t, i, k, rng) -> np.ndarray:
    if rule["kind"] == "constant":
        value = rule.get("value", 0.1)
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            arr = np.full((i, k), float(arr))
        if arr.shape != (i, k):
            raise InputFormatError(
                f"char_coeffs constant value must be scalar or (n_agents, n_chars)"
            )
        return np.tile(arr, (t, 1, 1))
    if rule["kind"] == "random_walk":
        start = rng.normal(0.0, float(rule.get("initial_sigma", 0.2)), (i, k))
        steps = rng.normal(
            float(rule.get("drift", 0.0)), float(rule.get("step_sigma", 0.02)), (t, i, k)
        )
        steps[0] = 0.0
        return start + np.cumsum(steps, axis=0)
    if rule["kind"] == "explicit":
        return _explicit(rule, (t, i, k), "char_coeffs")
    raise _bad_kind("char_coeffs", rule, {"constant", "random_walk", "explicit"})


def _baseline(rule, t, i, n, rng) -> np.ndarray:
    if rule["kind"] == "constant":
        return np.full((t, i, n), float(rule.get("value", 0.0)))
    if rule["kind"] == "linear_drift":
        level = rng.normal(0.0, float(rule.get("level_sigma", 0.5)), (i, n))
        drift = rng.normal(0.0, float(rule.get("drift_sigma", 0.05)), (i, n))
        return level + drift * np.arange(t)[:, None, None]
    if rule["kind"] == "explicit":
        return _explicit(rule, (t, i, n), "baseline")
    raise _bad_kind("baseline", rule, {"constant", "linear_drift", "explicit"})


def _supply(rule, t, n, rng) -> np.ndarray:
    if rule["kind"] == "constant":
        return np.full((t, n), float(rule.get("value", 0.0)))
    if rule["kind"] == "gaussian":
        return rng.normal(0.0, float(rule.get("sigma", 0.1)), (t, n))
    if rule["kind"] == "explicit":
        return _explicit(rule, (t, n), "supply")
    raise _bad_kind("supply", rule, {"constant", "gaussian", "explicit"})


def _characteristics(rule, t, n, k, rng) -> np.ndarray:
    kind = rule["kind"]
    if kind == "explicit":
        return _explicit(rule, (t, n, k), "characteristics")
    if kind not in ("gaussian", "rank_gaussian"):
        raise _bad_kind("characteristics", rule, {"gaussian", "rank_gaussian", "explicit"})
    phi = float(rule.get("phi", 0.0))
    if not -1.0 < phi < 1.0:
        raise InputFormatError(f"characteristics phi must lie in (-1, 1), got {phi}")
    corr = float(rule.get("correlation", 0.0))
    cov = np.full((k, k), corr) + (1.0 - corr) * np.eye(k)
    if np.linalg.eigvalsh(cov).min(initial=1.0) <= 0:
        raise InputFormatError(f"characteristics correlation {corr} is not feasible for K={k}")
    chol = np.linalg.cholesky(cov)
    latent = np.empty((t, n, k))
    latent[0] = rng.standard_normal((n, k)) @ chol.T
    scale = np.sqrt(1.0 - phi**2)
    for step in range(1, t):
        shock = rng.standard_normal((n, k)) @ chol.T
        latent[step] = phi * latent[step - 1] + scale * shock
    if kind == "gaussian":
        return np.clip(latent, -3.0, 3.0)
    scores = np.empty_like(latent)
    for step in range(t):
        for j in range(k):
            scores[step, :, j] = gaussian_rank_scores(latent[step, :, j])
    return scores


def build_simulation(cfg: dict, seed: int):
    """Turn a simulation manifest into agents, characteristics and supply.

    Returns ``(agents, chars, supply, resolved)`` where ``resolved`` echoes
    the configuration with all defaults filled in.
    """
    for key in ("n_dates", "n_firms", "n_chars"):
        if key not in cfg:
            raise InputFormatError(f"simulation manifest must set {key!r}")
    t = int(cfg["n_dates"])
    n = int(cfg["n_firms"])
    k = int(cfg["n_chars"])
    i = int(cfg.get("n_agents", _DEFAULTS["n_agents"]))
    if min(t, n, k, i) < 1:
        raise InputFormatError("n_dates, n_firms, n_chars, n_agents must be positive")
    start = cfg.get("start_date", _DEFAULTS["start_date"])
    dates = month_range(start, t)
    char_names = cfg.get("char_names") or [f"c{j}" for j in range(k)]
    if len(char_names) != k:
        raise InputFormatError(f"char_names has {len(char_names)} entries, n_chars is {k}")

    streams = np.random.SeedSequence(seed).spawn(5)
    rng_w, rng_b, rng_a, rng_s, rng_c = (np.random.default_rng(s) for s in streams)

    rules = {name: _rule(cfg, name) for name in (
        "wealth", "price_slope", "char_coeffs", "baseline", "supply", "characteristics"
    )}
    agents = AgentPopulation(
        dates=dates,
        wealth=_wealth(rules["wealth"], t, i, rng_w),
        price_slope=_price_slope(rules["price_slope"], t, i),
        char_coeffs=_char_coeffs(rules["char_coeffs"], t, i, k, rng_b),
        baseline=_baseline(rules["baseline"], t, i, n, rng_a),
    )
    supply = SupplyPath(dates=dates, supply=_supply(rules["supply"], t, n, rng_s))
    chars = CharacteristicsPanel(
        dates=dates,
        firms=[f"F{j:04d}" for j in range(n)],
        k_names=list(char_names),
        scores=_characteristics(rules["characteristics"], t, n, k, rng_c),
    )
    resolved = {
        "n_dates": t, "n_firms": n, "n_chars": k, "n_agents": i,
        "start_date": start, "char_names": list(char_names),
        "timing": cfg.get("timing", _DEFAULTS["timing"]),
        "variant": int(cfg.get("variant", _DEFAULTS["variant"])),
        **rules,
    }
    return agents, chars, supply, resolved


def build_beliefs(cfg: dict):
    """Turn a beliefs manifest into an AgentBeliefs instance."""
    from .meanvar import AgentBeliefs

    required = ("char_matrix", "beta_hat", "sigma_beta", "sigma_e2", "gamma", "budget")
    missing = [key for key in required if key not in cfg]
    if missing:
        raise InputFormatError(f"beliefs manifest is missing {missing}")
    try:
        return AgentBeliefs(
            char_matrix=np.asarray(cfg["char_matrix"], dtype=float),
            beta_hat=np.asarray(cfg["beta_hat"], dtype=float),
            sigma_beta=np.asarray(cfg["sigma_beta"], dtype=float),
            sigma_e2=np.asarray(cfg["sigma_e2"], dtype=float),
            gamma=float(cfg["gamma"]),
            budget=float(cfg["budget"]),
        )
    except ValueError as exc:
        raise InputFormatError(f"beliefs manifest invalid: {exc}") from None
