"""Rank-Gaussianization and panel-building tests."""

import math

import numpy as np
import pytest

from demandeq.charnorm import (
    CharacteristicsPanel,
    RawPanel,
    build_panel,
    gaussian_rank_normalize,
    gaussian_rank_scores,
    month_range,
)
from demandeq.errors import DegenerateCrossSectionError, PanelAlignmentError

# Gaussian quantiles, frozen from an independent CDF bisection on erf.
Q75 = 0.6744897501960817
Q_TOP_1000 = 3.090529137925278  # ndtri(1000/1001), clipped to 3 by winsorization


def test_median_of_three_maps_to_zero():
    pairs = gaussian_rank_normalize([("a", 1.0), ("b", 5.0), ("c", 9.0)])
    assert pairs[1][0] == "b"
    assert pairs[1][1] == pytest.approx(0.0, abs=1e-15)


def test_top_of_three_maps_to_q75():
    pairs = gaussian_rank_normalize([("a", 1.0), ("b", 5.0), ("c", 9.0)])
    assert pairs[2][1] == pytest.approx(Q75, abs=1e-12)
    assert pairs[0][1] == pytest.approx(-Q75, abs=1e-12)


def test_large_cross_section_top_rank_is_winsorized():
    vals = np.arange(1000, dtype=float)
    scores = gaussian_rank_scores(vals)
    assert Q_TOP_1000 > 3.0  # raw quantile would exceed the bound
    assert scores[-1] == pytest.approx(3.0, abs=0.0)
    assert scores[0] == pytest.approx(-3.0, abs=0.0)


def test_missing_values_excluded_and_order_preserved():
    pairs = gaussian_rank_normalize([("a", 2.0), ("b", None), ("c", 1.0)])
    assert [f for f, _ in pairs] == ["a", "b", "c"]
    assert math.isnan(pairs[1][1])
    # two non-missing values: ranks 1 and 2 of N=2 map to quantiles 1/3, 2/3
    assert pairs[0][1] == pytest.approx(0.4307272992954576, abs=1e-12)
    assert pairs[2][1] == pytest.approx(-0.4307272992954576, abs=1e-12)


def test_degenerate_cross_section_raises():
    with pytest.raises(DegenerateCrossSectionError):
        gaussian_rank_scores([1.0, np.nan, np.nan])


def test_ties_get_average_ranks():
    scores = gaussian_rank_scores([1.0, 1.0, 5.0])
    assert scores[0] == scores[1]
    assert scores[0] < scores[2]


def test_monotonicity_and_bound_random():
    rng = np.random.default_rng(7)
    for _ in range(20):
        raw = rng.normal(size=rng.integers(2, 60)) * rng.lognormal()
        scores = gaussian_rank_scores(raw)
        order = np.argsort(raw)
        assert np.all(np.diff(scores[order]) >= -1e-15)
        assert np.abs(scores).max() <= 3.0


def test_scale_invariance_under_increasing_transform():
    rng = np.random.default_rng(11)
    raw = rng.normal(size=40)
    transformed = np.exp(2.0 * raw) + 5.0  # strictly increasing
    np.testing.assert_allclose(
        gaussian_rank_scores(raw), gaussian_rank_scores(transformed), atol=1e-12
    )


def test_cross_sectional_mean_is_centred():
    rng = np.random.default_rng(3)
    for n in (10, 100, 1000):
        scores = gaussian_rank_scores(rng.lognormal(size=n))
        assert abs(scores.mean()) <= 5.0 / math.sqrt(n)


def _raw_panel(dates, firms, raw, returns=None, k_names=None):
    raw = np.asarray(raw, dtype=float)
    if returns is None:
        returns = np.zeros(raw.shape[:2])
    return RawPanel(
        dates=dates,
        firms=firms,
        k_names=k_names or [f"c{i}" for i in range(raw.shape[2])],
        raw=raw,
        returns=np.asarray(returns, dtype=float),
    )


def test_build_panel_first_observation_has_no_delta():
    raw = np.zeros((2, 3, 1))
    raw[0, :, 0] = [1.0, 2.0, 3.0]
    raw[1, :, 0] = [1.0, 2.0, 3.0]
    raw[0, 2, 0] = np.nan  # firm 2 absent at the first date
    panel = build_panel(_raw_panel(["2001-01", "2001-02"], ["a", "b", "c"], raw))
    assert np.isnan(panel.deltas[0]).all()
    assert np.isnan(panel.deltas[1, 2, 0])
    assert np.isfinite(panel.deltas[1, 0, 0])


def test_build_panel_unchanged_ranks_give_zero_delta():
    raw = np.zeros((2, 3, 1))
    raw[:, :, 0] = [[1.0, 2.0, 3.0], [10.0, 20.0, 30.0]]  # same ranks both dates
    panel = build_panel(_raw_panel(["2001-01", "2001-02"], ["a", "b", "c"], raw))
    np.testing.assert_allclose(panel.deltas[1], 0.0, atol=1e-15)


def test_build_panel_rank_swap_deltas():
    raw = np.zeros((2, 3, 1))
    raw[0, :, 0] = [1.0, 2.0, 3.0]
    raw[1, :, 0] = [2.0, 1.0, 3.0]  # a and b swap ranks
    panel = build_panel(_raw_panel(["2001-01", "2001-02"], ["a", "b", "c"], raw))
    assert panel.deltas[1, 0, 0] == pytest.approx(Q75, abs=1e-12)
    assert panel.deltas[1, 1, 0] == pytest.approx(-Q75, abs=1e-12)
    assert panel.deltas[1, 2, 0] == pytest.approx(0.0, abs=1e-15)


def test_build_panel_degenerate_date_names_the_date():
    raw = np.full((2, 3, 1), np.nan)
    raw[0, :, 0] = [1.0, 2.0, 3.0]
    raw[1, 0, 0] = 1.0  # only one firm at the second date
    with pytest.raises(DegenerateCrossSectionError, match="2001-02"):
        build_panel(_raw_panel(["2001-01", "2001-02"], ["a", "b", "c"], raw))


def test_delta_telescoping_over_contiguous_span():
    rng = np.random.default_rng(5)
    raw = rng.normal(size=(8, 12, 2))
    panel = build_panel(_raw_panel(month_range("2001-01", 8), [f"f{i}" for i in range(12)], raw))
    summed = panel.deltas[1:].sum(axis=0)
    np.testing.assert_allclose(summed, panel.scores[-1] - panel.scores[0], atol=1e-12)


def test_axis_validation():
    with pytest.raises(PanelAlignmentError):
        CharacteristicsPanel(
            dates=["2001-02", "2001-01"],
            firms=["a", "b"],
            k_names=["c0"],
            scores=np.zeros((2, 2, 1)),
        )
    with pytest.raises(PanelAlignmentError):
        CharacteristicsPanel(
            dates=["2001-01", "2001-02"],
            firms=["a", "a"],
            k_names=["c0"],
            scores=np.zeros((2, 2, 1)),
        )


def test_month_range_wraps_years():
    assert month_range("2000-11", 4) == ["2000-11", "2000-12", "2001-01", "2001-02"]
