import json

import numpy as np
import pytest

from benefitmark.data import AnalysisConfig, BenefitDefinition, TrialDataset, infer_marker_kind
from benefitmark.simulator import Scenario

SCENARIO_DOC = {
    "covariates": [{"name": "z"}, {"name": "w"}],
    "marker": "z",
    "link": "logit",
    "coefficients": {
        "intercept": 1.0,
        "treatment": 0.2,
        "covariates": {"z": 0.3, "w": 0.5},
        "interactions": {"z": 0.8},
    },
    "benefit": {"kind": "binary_leq"},
}


def make_dataset(outcome, treatment, X, names=None, markers=None, outcome_kind="binary"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = tuple(names or [f"x{k}" for k in range(X.shape[1])])
    markers = tuple(markers or names[:1])
    kinds = {m: infer_marker_kind(X[:, names.index(m)]) for m in markers}
    return TrialDataset(
        ids=tuple(str(i) for i in range(len(outcome))),
        outcome=np.asarray(outcome, dtype=float),
        treatment=np.asarray(treatment),
        covariates=X,
        covariate_names=names,
        marker_names=markers,
        outcome_kind=outcome_kind,
        marker_kinds=kinds,
    )


@pytest.fixture
def scenario():
    return Scenario.from_dict(SCENARIO_DOC)


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(SCENARIO_DOC))
    return path


@pytest.fixture
def leq():
    return BenefitDefinition("binary_leq")


@pytest.fixture
def small_config():
    return AnalysisConfig(benefit=BenefitDefinition("binary_leq"), marker_columns=("z",),
                          covariate_columns=("w",), bootstrap_replicates=0)


@pytest.fixture
def logistic_data():
    rng = np.random.default_rng(11)
    n = 400
    z = rng.normal(size=n)
    w = rng.normal(size=n)
    t = rng.integers(0, 2, n)
    eta = 0.3 + 0.4 * t + 0.5 * z - 0.3 * w + 0.6 * t * z
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    return make_dataset(y, t, np.column_stack([z, w]), ["z", "w"], ["z"])
