import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from benefitmark.data import (
    GAMMA_BOUND,
    GAMMA_FLOOR,
    AnalysisConfig,
    BenefitDefinition,
    TrialDataset,
    evaluate_benefit,
    load_trial,
)
from benefitmark.errors import ValidationError


def write_csv(path, rows, header=("id", "treatment", "outcome", "z")):
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def cfg():
    return AnalysisConfig(benefit=BenefitDefinition("binary_leq"), marker_columns=("z",))


def test_six_row_file(tmp_path, cfg):
    rows = [(i, i % 2, i // 3 % 2, 0.1 * i) for i in range(6)]
    data = load_trial(write_csv(tmp_path / "t.csv", rows), cfg)
    assert (data.n0, data.n1) == (3, 3)
    assert data.marker_kinds["z"] == "continuous"


def test_invalid_treatment(tmp_path, cfg):
    rows = [(0, 0, 1, 0.1), (1, 2, 0, 0.2), (2, 1, 0, 0.3)]
    with pytest.raises(ValidationError, match="invalid treatment value"):
        load_trial(write_csv(tmp_path / "t.csv", rows), cfg)


def test_empty_arm(tmp_path, cfg):
    rows = [(i, 1, 1, 0.1 * i) for i in range(4)]
    with pytest.raises(ValidationError, match="empty treatment arm"):
        load_trial(write_csv(tmp_path / "t.csv", rows), cfg)


def test_missing_column(tmp_path):
    cfg = AnalysisConfig(benefit=BenefitDefinition(), marker_columns=("q",))
    rows = [(0, 0, 1, 0.1), (1, 1, 0, 0.2)]
    with pytest.raises(ValidationError, match="column not found"):
        load_trial(write_csv(tmp_path / "t.csv", rows), cfg)


@pytest.mark.parametrize("cell, message", [("abc", "non-numeric"), ("", "missing value")])
def test_bad_cells(tmp_path, cfg, cell, message):
    rows = [(0, 0, 1, 0.1), (1, 1, 0, cell)]
    with pytest.raises(ValidationError, match=message):
        load_trial(write_csv(tmp_path / "t.csv", rows), cfg)


def test_binary_outcome_outside_01(tmp_path, cfg):
    rows = [(0, 0, 1, 0.1), (1, 1, 2, 0.2)]
    with pytest.raises(ValidationError, match="binary outcome outside"):
        load_trial(write_csv(tmp_path / "t.csv", rows), cfg)


def test_duplicate_ids(tmp_path, cfg):
    rows = [(0, 0, 1, 0.1), (0, 1, 0, 0.2)]
    with pytest.raises(ValidationError, match="duplicate"):
        load_trial(write_csv(tmp_path / "t.csv", rows), cfg)


def test_column_order_follows_config(tmp_path):
    header = ("w", "outcome", "id", "z", "treatment")
    rows = [(5.0, 1, "a", 0.1, 0), (6.0, 0, "b", 0.2, 1), (7.0, 1, "c", 0.3, 1)]
    cfg = AnalysisConfig(benefit=BenefitDefinition(), marker_columns=("z",),
                         covariate_columns=("w",))
    data = load_trial(write_csv(tmp_path / "t.csv", rows, header), cfg)
    assert data.covariate_names == ("z", "w")
    np.testing.assert_array_equal(data.covariates[:, 1], [5.0, 6.0, 7.0])
    assert data.ids == ("a", "b", "c")


def test_load_is_deterministic(tmp_path, cfg):
    rows = [(i, i % 2, (i * 7) % 2, np.sin(i)) for i in range(20)]
    path = write_csv(tmp_path / "t.csv", rows)
    a, b = load_trial(path, cfg), load_trial(path, cfg)
    np.testing.assert_array_equal(a.covariates, b.covariates)
    np.testing.assert_array_equal(a.outcome, b.outcome)


def test_binary_marker_values_checked():
    with pytest.raises(ValidationError):
        TrialDataset(ids=("a", "b", "c"), outcome=np.array([0.0, 1.0, 1.0]),
                     treatment=np.array([0, 1, 0]), covariates=np.array([[0.0], [1.0], [0.5]]),
                     covariate_names=("z",), marker_names=("z",), outcome_kind="binary",
                     marker_kinds={"z": "binary"})


@pytest.mark.parametrize("y0, y1, kind, delta, expected", [
    (0, 1, "binary_leq", 0, 1),
    (1, 0, "binary_leq", 0, 0),
    (1, 1, "binary_lt", 0, 0),
    (0, 1, "binary_lt", 0, 1),
    (1.0, 3.5, "continuous_gap", 2.0, 1),
    (1.0, 2.9, "continuous_gap", 2.0, 0),
])
def test_evaluate_benefit(y0, y1, kind, delta, expected):
    assert evaluate_benefit(y0, y1, BenefitDefinition(kind, delta)) == expected


def test_kind_mismatch():
    with pytest.raises(ValidationError):
        evaluate_benefit(0.5, 1.0, BenefitDefinition("binary_leq"))


@given(st.sampled_from([0.0, 1.0]))
def test_diagonal_benefit(y):
    assert evaluate_benefit(y, y, BenefitDefinition("binary_leq")) == 1
    assert evaluate_benefit(y, y, BenefitDefinition("binary_lt")) == 0


# quarter-integers keep every sum exact, so the shift cannot round
quarters = st.integers(-4000, 4000).map(lambda k: k / 4)


@given(quarters, quarters, quarters, quarters)
def test_gap_shift_invariance(y0, y1, c, delta):
    d = BenefitDefinition("continuous_gap", delta)
    assert evaluate_benefit(y0 + c, y1 + c, d) == evaluate_benefit(y0, y1, d)


def test_config_defaults():
    cfg = AnalysisConfig(benefit=BenefitDefinition(), marker_columns=("z",))
    assert cfg.gamma_grid == (GAMMA_FLOOR, 1.0, 2.0, 4.0)
    assert GAMMA_FLOOR > GAMMA_BOUND and GAMMA_FLOOR - GAMMA_BOUND < 2e-6
    assert cfg.theta_u_grid == (0.0, 1.8, 4.0, 8.0)
    assert cfg.pair_fraction == 0.01
    assert cfg.bandwidth_exponents == tuple(range(-5, 6))
    assert cfg.cv_split_fraction == 0.5
    assert cfg.bootstrap_replicates == 200
    assert cfg.ci_level == 0.90


@pytest.mark.parametrize("override", [
    {"gamma_grid": (0.7, 1.0)},
    {"gamma_grid": (GAMMA_BOUND,)},
    {"theta_u_grid": (-1.0,)},
    {"pair_fraction": 0.0},
    {"pair_fraction": 1.5},
    {"cv_split_fraction": 1.0},
    {"bootstrap_replicates": -1},
    {"ci_level": 1.0},
    {"approach": "neither"},
    {"quadrature_nodes": 1},
])
def test_config_rejects(override):
    with pytest.raises(ValidationError):
        AnalysisConfig(benefit=BenefitDefinition(), marker_columns=("z",), **override)


def test_config_json_round_trip(tmp_path):
    doc = {"benefit": {"kind": "continuous_gap", "delta": 2.0}, "marker_column": "z",
           "covariate_columns": ["w"], "approach": "indirect", "seed": 9}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    cfg = AnalysisConfig.from_json(path)
    assert cfg.marker_columns == ("z",)
    assert cfg.outcome_kind == "continuous"
    again = AnalysisConfig.from_dict(cfg.to_dict())
    assert again == cfg


def test_config_unknown_field():
    with pytest.raises(ValidationError, match="unknown config fields"):
        AnalysisConfig.from_dict({"marker_column": "z", "bandwith": 1})
