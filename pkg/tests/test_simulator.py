from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from benefitmark.data import BenefitDefinition, evaluate_benefit, load_trial
from benefitmark.errors import DegenerateError, ValidationError
from benefitmark.simulator import (
    Scenario,
    load_full_trial,
    oracle_pi_z,
    oracle_roc,
    roc_from_labels,
    simulate_trial,
)

from conftest import SCENARIO_DOC


def test_masked_view(scenario):
    full = simulate_trial(scenario, 500, 1)
    data = full.masked()
    np.testing.assert_array_equal(data.outcome, np.where(full.treatment == 1, full.y1, full.y0))
    np.testing.assert_array_equal(
        full.b, [evaluate_benefit(a, b, scenario.benefit) for a, b in zip(full.y0, full.y1)])
    np.testing.assert_array_equal(data.marker("z"), full.marker("z"))
    assert data.covariate_names == ("z", "w")


def test_same_seed_same_trial(scenario):
    a, b = simulate_trial(scenario, 50, 9), simulate_trial(scenario, 50, 9)
    for field in ("x", "u", "treatment", "y0", "y1", "b"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))
    assert not np.array_equal(a.x, simulate_trial(scenario, 50, 10).x)


def test_invalid_scenario():
    doc = dict(SCENARIO_DOC, covariates=[{"name": "z", "sd": -1}, {"name": "w"}])
    with pytest.raises(ValidationError, match="sd must be > 0"):
        Scenario.from_dict(doc)
    with pytest.raises(ValidationError):
        Scenario.from_dict(dict(SCENARIO_DOC, marker="q"))
    with pytest.raises(ValidationError):
        Scenario.from_dict(dict(SCENARIO_DOC, benefit={"kind": "continuous_gap"}))


def test_arm_fractions(scenario):
    full = simulate_trial(scenario, 100_000, 3)
    assert abs(full.treatment.mean() - 0.5) < 0.01
    skew = Scenario.from_dict(dict(SCENARIO_DOC, randomization_p=0.3))
    assert abs(simulate_trial(skew, 100_000, 3).treatment.mean() - 0.3) < 0.01


def test_no_effects_closed_form():
    p = 0.3
    sc = Scenario.from_dict({"covariates": [{"name": "z"}], "marker": "z",
                             "coefficients": {"intercept": float(np.log(p / (1 - p)))}})
    full = simulate_trial(sc, 200_000, 4)
    expected = 1 - p * (1 - p)
    assert abs(full.b.mean() - expected) < 4 * np.sqrt(expected * (1 - expected) / full.n)
    np.testing.assert_allclose(oracle_pi_z(sc, [-1.0, 0.0, 2.0], 1000), expected, rtol=1e-14)


def test_gaussian_benefit_probability():
    sc = Scenario.from_dict({
        "covariates": [{"name": "z"}], "marker": "z", "outcome_kind": "continuous",
        "link": "identity", "dispersion": 2.0,
        "coefficients": {"treatment": 1.0},
        "benefit": {"kind": "continuous_gap", "delta": 0.5}})
    full = simulate_trial(sc, 200_000, 5)
    expected = stats.norm.cdf(0.5 / 2.0)
    assert abs(full.b.mean() - expected) < 4 * np.sqrt(expected * (1 - expected) / full.n)


def test_oracle_pi_z_sign_flip():
    sc = Scenario.from_dict({"covariates": [{"name": "z"}], "marker": "z",
                             "coefficients": {"interactions": {"z": 2.0}},
                             "benefit": {"kind": "binary_lt"}})
    z = np.array([-1.0, 0.0, 1.0])
    pi = oracle_pi_z(sc, z, 10)
    # binary_lt: P(Y0 = 0, Y1 = 1) = (1 - p0) p1 with p0 = 1/2
    np.testing.assert_allclose(pi, 0.5 * (1 / (1 + np.exp(-2.0 * z))), rtol=1e-14)
    assert pi[0] < pi[1] < pi[2]


def test_oracle_pi_z_converges(scenario):
    z = np.linspace(-2, 2, 5)
    draws = 50_000
    a = oracle_pi_z(scenario, z, draws, seed=1)
    b = oracle_pi_z(scenario, z, 2 * draws, seed=2)
    assert np.max(np.abs(a - b)) < 2 / np.sqrt(draws)


def test_roc_from_labels_is_mann_whitney():
    rng = np.random.default_rng(6)
    z = rng.integers(0, 10, 300).astype(float)
    b = rng.integers(0, 2, 300)
    roc = roc_from_labels(z, b)
    pos, neg = z[b == 1], z[b == 0]
    diff = pos[:, None] - neg[None, :]
    mw = Fraction(2 * int((diff > 0).sum()) + int((diff == 0).sum()), 2 * diff.size)
    assert roc.auc == float(mw)
    with pytest.raises(DegenerateError):
        roc_from_labels(z, np.ones(300))


def test_oracle_roc_extremes(scenario):
    full = simulate_trial(scenario, 5000, 7)
    rng = np.random.default_rng(0)
    assert abs(roc_from_labels(rng.normal(size=full.n), full.b).auc - 0.5) < 0.05
    assert roc_from_labels(full.b.astype(float), full.b).auc == 1.0
    assert oracle_roc(full).auc > 0.6


def test_csv_round_trip(scenario, small_config, tmp_path):
    full = simulate_trial(scenario, 40, 8)
    full.write_csv(tmp_path / "full.csv")
    full.write_csv(tmp_path / "masked.csv", masked=True)
    for name in ("full.csv", "masked.csv"):
        data = load_trial(tmp_path / name, small_config)
        np.testing.assert_array_equal(data.covariates, full.masked().covariates)
        np.testing.assert_array_equal(data.outcome, full.outcome)
    cf, ids = load_full_trial(tmp_path / "full.csv", ("z", "w"))
    np.testing.assert_array_equal(cf["y0"], full.y0)
    np.testing.assert_array_equal(cf["b"], full.b)
    assert list(ids) == [str(i + 1) for i in range(40)]
    with pytest.raises(ValidationError, match="counterfactual columns required"):
        load_full_trial(tmp_path / "masked.csv", ("z", "w"))


def test_benefit_indicator_matches_definition():
    gap = BenefitDefinition("continuous_gap", 1.0)
    y0, y1 = np.array([0.0, 0.0, 2.0]), np.array([1.0, 1.5, 2.5])
    np.testing.assert_array_equal(gap.indicator(y0, y1), [0, 1, 0])
