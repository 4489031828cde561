"""Cross-sectional Gaussian rank normalization of firm characteristics.

Raw characteristic values are mapped, month by month, to scores that follow
a standard Gaussian cross-sectional distribution (winsorized at +/-3), and
per-firm first differences of those scores are computed alongside.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

from .errors import DegenerateCrossSectionError, PanelAlignmentError

SCORE_BOUND = 3.0


def gaussian_rank_scores(values) -> np.ndarray:
    """Map one cross-section of raw values to Gaussian rank scores.

    A value with rank ``r`` among ``N`` non-missing entries receives the
    Gaussian quantile of ``r / (N + 1)``; ties get the average rank and
    scores are clipped to ``[-3, 3]``. Missing (NaN) entries are excluded
    from the ranking and stay NaN in the output, which preserves input order.

    Raises
    ------
    DegenerateCrossSectionError
        If fewer than 2 non-missing values are present.
    """
    raw = np.asarray(values, dtype=float)
    out = np.full(raw.shape, np.nan)
    mask = np.isfinite(raw)
    n = int(mask.sum())
    if n < 2:
        raise DegenerateCrossSectionError(
            f"need at least 2 non-missing values to rank a cross-section, got {n}"
        )
    ranks = rankdata(raw[mask], method="average")
    out[mask] = np.clip(ndtri(ranks / (n + 1)), -SCORE_BOUND, SCORE_BOUND)
    return out


def gaussian_rank_normalize(cross_section):
    """Normalize a list of ``(firm, raw_value)`` pairs.

    Missing raw values may be given as None or NaN; they are excluded from
    the ranking and come back with a NaN score. Output order matches input
    order.
    """
    firms = [f for f, _ in cross_section]
    vals = np.array(
        [np.nan if v is None else float(v) for _, v in cross_section], dtype=float
    )
    scores = gaussian_rank_scores(vals)
    return list(zip(firms, (float(s) for s in scores)))


def month_range(start: str, n: int) -> list[str]:
    """Return ``n`` consecutive YYYY-MM month identifiers starting at ``start``."""
    year, month = (int(p) for p in start.split("-"))
    out = []
    for _ in range(n):
        out.append(f"{year:04d}-{month:02d}")
        month += 1
        if month > 12:
            month = 1
            year += 1
    return out


def _validate_axes(dates, firms) -> None:
    if len(set(firms)) != len(firms):
        raise PanelAlignmentError("firm identifiers must be unique")
    if any(a >= b for a, b in zip(dates, dates[1:])):
        raise PanelAlignmentError("dates must be strictly increasing")


@dataclass(frozen=True)
class RawPanel:
    """Unnormalized characteristic panel with aligned log returns.

    ``raw`` holds the characteristic values as a (T, N, K) tensor and
    ``returns`` the per (date, firm) log returns, both with NaN for missing
    observations. Dates are YYYY-MM strings ordered lexicographically; each
    (date, firm) pair occurs at most once by construction of the tensor.
    """

    dates: list[str]
    firms: list[str]
    k_names: list[str]
    raw: np.ndarray
    returns: np.ndarray

    def __post_init__(self):
        _validate_axes(self.dates, self.firms)
        t, n, k = len(self.dates), len(self.firms), len(self.k_names)
        if self.raw.shape != (t, n, k):
            raise PanelAlignmentError(
                f"raw tensor shape {self.raw.shape} != {(t, n, k)}"
            )
        if self.returns.shape != (t, n):
            raise PanelAlignmentError(
                f"returns shape {self.returns.shape} != {(t, n)}"
            )


@dataclass(frozen=True)
class CharacteristicsPanel:
    """Gaussian characteristic scores and their per-firm first differences.

    ``scores[t, n, k]`` lies in [-3, 3] where observed; ``deltas[t, n, k]``
    is ``scores[t] - scores[t-1]`` and is NaN whenever the firm lacks a score
    at either of the two consecutive panel dates (a gap breaks the chain).
    """

    dates: list[str]
    firms: list[str]
    k_names: list[str]
    scores: np.ndarray
    deltas: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        _validate_axes(self.dates, self.firms)
        if self.deltas is None:
            object.__setattr__(self, "deltas", score_deltas(self.scores))
        if self.scores.shape != self.deltas.shape:
            raise PanelAlignmentError("scores and deltas shapes differ")

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    @property
    def n_firms(self) -> int:
        return len(self.firms)

    @property
    def n_chars(self) -> int:
        return len(self.k_names)

    def date_index(self, date: str) -> int:
        try:
            return self.dates.index(date)
        except ValueError:
            raise PanelAlignmentError(f"date {date!r} not in panel") from None


def score_deltas(scores: np.ndarray) -> np.ndarray:
    """First differences of scores along the date axis; first date is NaN."""
    deltas = np.full_like(scores, np.nan)
    deltas[1:] = scores[1:] - scores[:-1]
    return deltas


def build_panel(raw: RawPanel) -> CharacteristicsPanel:
    """Normalize a raw panel date by date and attach score differences.

    Each (date, characteristic) cross-section is rank-Gaussianized
    independently; a firm's first observation has no difference and stays
    NaN there.

    Raises
    ------
    DegenerateCrossSectionError
        If some date has fewer than 2 firms observed for a characteristic;
        the message names the date and characteristic.
    """
    t_len, _, k_len = raw.raw.shape
    scores = np.full_like(raw.raw, np.nan)
    for t in range(t_len):
        for k in range(k_len):
            try:
                scores[t, :, k] = gaussian_rank_scores(raw.raw[t, :, k])
            except DegenerateCrossSectionError as exc:
                raise DegenerateCrossSectionError(
                    f"{raw.dates[t]} / {raw.k_names[k]}: {exc}"
                ) from None
    return CharacteristicsPanel(
        dates=list(raw.dates),
        firms=list(raw.firms),
        k_names=list(raw.k_names),
        scores=scores,
        deltas=score_deltas(scores),
    )
