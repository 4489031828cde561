"""CSV ingestion diagnostics, round trips and manifest parsing."""

import numpy as np
import pytest

from demandeq.charnorm import month_range
from demandeq.dataio import (
    format_value,
    header_comment,
    load_manifest,
    load_panel_csv,
    panel_rows,
    write_csv,
)
from demandeq.errors import InputFormatError
from demandeq.manifest import build_beliefs, build_simulation


def write_panel(tmp_path, text, name="panel.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


GOOD = """# comment line
date,firm_id,ret,size,value
2000-01,A,NA,1.0,2.0
2000-01,B,0.02,2.0,1.0
2000-02,A,0.01,1.5,NA
2000-02,B,-0.01,2.5,0.5
"""


def test_load_panel_csv_roundtrip_values(tmp_path):
    path = write_panel(tmp_path, GOOD)
    raw = load_panel_csv(path, ["size", "value"])
    assert raw.dates == ["2000-01", "2000-02"]
    assert raw.firms == ["A", "B"]
    assert np.isnan(raw.returns[0, 0])
    assert raw.returns[1, 1] == -0.01
    assert raw.raw[0, 1, 0] == 2.0
    assert np.isnan(raw.raw[1, 0, 1])


def test_load_panel_csv_missing_column(tmp_path):
    path = write_panel(tmp_path, GOOD)
    with pytest.raises(InputFormatError, match="mom"):
        load_panel_csv(path, ["size", "mom"])


def test_load_panel_csv_bad_float_names_line(tmp_path):
    text = GOOD.replace("2.5,0.5", "2.5,oops")
    path = write_panel(tmp_path, text)
    with pytest.raises(InputFormatError, match="line 6"):
        load_panel_csv(path, ["size", "value"])


def test_load_panel_csv_bad_date(tmp_path):
    text = GOOD.replace("2000-02,B", "2000-13,B")
    path = write_panel(tmp_path, text)
    with pytest.raises(InputFormatError, match="YYYY-MM"):
        load_panel_csv(path, ["size", "value"])


def test_load_panel_csv_duplicate_pair(tmp_path):
    text = GOOD + "2000-02,B,0.0,1.0,1.0\n"
    path = write_panel(tmp_path, text)
    with pytest.raises(InputFormatError, match="duplicate"):
        load_panel_csv(path, ["size", "value"])


def test_load_panel_csv_ragged_row(tmp_path):
    text = GOOD + "2000-03,A,0.0,1.0\n"
    path = write_panel(tmp_path, text)
    with pytest.raises(InputFormatError, match="expected 5 fields"):
        load_panel_csv(path, ["size", "value"])


def test_load_panel_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_panel_csv(tmp_path / "nope.csv", ["size"])


def test_write_csv_roundtrips_exact_floats(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.standard_normal((3, 2, 1)) * 1e-3
    returns = rng.standard_normal((3, 2)) * 0.1
    path = tmp_path / "out.csv"
    write_csv(
        path,
        ["date", "firm_id", "ret", "c0"],
        panel_rows(month_range("2000-01", 3), ["A", "B"], returns, values),
        header_comment("test", 1),
    )
    raw = load_panel_csv(path, ["c0"])
    np.testing.assert_array_equal(raw.returns, returns)
    np.testing.assert_array_equal(raw.raw, values)


def test_format_value():
    assert format_value(float("nan")) == "NA"
    assert format_value(0.1) == "0.1"
    assert format_value(1) == "1"
    assert format_value("x") == "x"


def test_load_manifest_json_and_toml(tmp_path):
    j = tmp_path / "m.json"
    j.write_text('{"n_dates": 3}', encoding="utf-8")
    assert load_manifest(j) == {"n_dates": 3}
    t = tmp_path / "m.toml"
    t.write_text("n_dates = 3\n", encoding="utf-8")
    assert load_manifest(t) == {"n_dates": 3}
    bad = tmp_path / "bad.json"
    bad.write_text("{nope", encoding="utf-8")
    with pytest.raises(InputFormatError):
        load_manifest(bad)


def test_build_simulation_is_seed_deterministic():
    cfg = {"n_dates": 6, "n_firms": 5, "n_chars": 2}
    a1, c1, s1, r1 = build_simulation(cfg, 99)
    a2, c2, s2, r2 = build_simulation(cfg, 99)
    np.testing.assert_array_equal(a1.wealth, a2.wealth)
    np.testing.assert_array_equal(c1.scores, c2.scores)
    np.testing.assert_array_equal(s1.supply, s2.supply)
    a3, *_ = build_simulation(cfg, 100)
    assert not np.array_equal(a1.char_coeffs, a3.char_coeffs)


def test_build_simulation_validates_rules():
    with pytest.raises(InputFormatError, match="n_chars"):
        build_simulation({"n_dates": 3, "n_firms": 4}, 0)
    cfg = {"n_dates": 3, "n_firms": 4, "n_chars": 1, "supply": {"kind": "nope"}}
    with pytest.raises(InputFormatError, match="unknown kind"):
        build_simulation(cfg, 0)


def test_build_simulation_rank_gaussian_scores_are_centred():
    cfg = {
        "n_dates": 4,
        "n_firms": 101,
        "n_chars": 2,
        "characteristics": {"kind": "rank_gaussian", "phi": 0.9},
    }
    _, chars, _, _ = build_simulation(cfg, 5)
    means = chars.scores.mean(axis=1)
    assert np.abs(means).max() < 5.0 / np.sqrt(101)
    assert np.abs(chars.scores).max() <= 3.0


def test_build_simulation_correlated_characteristics():
    cfg = {
        "n_dates": 2,
        "n_firms": 50_000,
        "n_chars": 2,
        "characteristics": {"kind": "gaussian", "correlation": 0.6},
    }
    _, chars, _, _ = build_simulation(cfg, 6)
    sample = np.corrcoef(chars.scores[0, :, 0], chars.scores[0, :, 1])[0, 1]
    assert sample == pytest.approx(0.6, abs=0.02)


def test_build_beliefs_validation():
    with pytest.raises(InputFormatError, match="missing"):
        build_beliefs({"gamma": 1.0})
    cfg = {
        "char_matrix": [[1.0], [0.5]],
        "beta_hat": [0.1],
        "sigma_beta": [[0.05]],
        "sigma_e2": [0.2, 0.3],
        "gamma": 1.0,
        "budget": 1.0,
    }
    beliefs = build_beliefs(cfg)
    assert beliefs.n_assets == 2 and beliefs.n_chars == 1
