"""Synthetic randomized trials with both potential outcomes materialized.

Each subject gets covariates ``X``, a latent ``U`` and two potential outcomes
drawn independently given ``(X, U)`` from a GLM with linear predictor

    eta_t = e1 + eT t + eX'X + eTX'(t X) + sum_c q_c X_c**2 + eU U,

so the potential outcomes are independent given ``X`` alone exactly when
``eU = 0``. The quadratic terms exist to build misspecified scenarios.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import special

from .data import BenefitDefinition, TrialDataset, infer_marker_kind, read_table
from .errors import DegenerateError, ValidationError
from .metrics import RocCurve

COUNTERFACTUAL_COLUMNS = ("y0", "y1", "u", "b")


@dataclass(frozen=True)
class CovariateSpec:
    name: str
    distribution: str = "normal"
    mean: float = 0.0
    sd: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if self.distribution == "normal":
            if not self.sd > 0:
                raise ValidationError(f"covariate {self.name!r}: sd must be > 0, got {self.sd}")
        elif self.distribution == "bernoulli":
            if not 0 < self.p < 1:
                raise ValidationError(f"covariate {self.name!r}: p must lie in (0, 1)")
        else:
            raise ValidationError(f"covariate {self.name!r}: unknown distribution {self.distribution!r}")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.distribution == "normal":
            return rng.normal(self.mean, self.sd, n)
        return (rng.random(n) < self.p).astype(float)


@dataclass(frozen=True)
class Scenario:
    covariates: tuple
    markers: tuple
    outcome_kind: str = "binary"
    link: str = "logit"
    intercept: float = 0.0
    treatment: float = 0.0
    eta_x: Mapping[str, float] = field(default_factory=dict)
    eta_tx: Mapping[str, float] = field(default_factory=dict)
    eta_u: float = 0.0
    quadratic: Mapping[str, float] = field(default_factory=dict)
    dispersion: float = 1.0
    randomization_p: float = 0.5
    benefit: BenefitDefinition = field(default_factory=BenefitDefinition)
    latent_distribution: str = "normal"

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "markers", tuple(self.markers))
        names = self.names
        if len(set(names)) != len(names):
            raise ValidationError("covariate names must be unique")
        for m in self.markers:
            if m not in names:
                raise ValidationError(f"marker {m!r} is not a covariate")
        if not self.markers:
            raise ValidationError("scenario needs at least one marker")
        for label, coefs in (("covariates", self.eta_x), ("interactions", self.eta_tx),
                             ("quadratic", self.quadratic)):
            for key in coefs:
                if key not in names:
                    raise ValidationError(f"{label} coefficient for unknown covariate {key!r}")
        if self.outcome_kind == "binary":
            if self.link not in ("logit", "probit"):
                raise ValidationError("binary outcomes need a logit or probit link")
        elif self.outcome_kind == "continuous":
            if self.link != "identity":
                raise ValidationError("continuous outcomes use the identity link")
            if not self.dispersion > 0:
                raise ValidationError("dispersion must be > 0")
        else:
            raise ValidationError("outcome_kind must be binary or continuous")
        if self.benefit.outcome_kind != self.outcome_kind:
            raise ValidationError(f"benefit kind {self.benefit.kind} does not fit a {self.outcome_kind} outcome")
        if not self.eta_u >= 0:
            raise ValidationError("latent coefficient must be >= 0")
        if not 0 < self.randomization_p < 1:
            raise ValidationError("randomization_p must lie in (0, 1)")
        if self.latent_distribution not in ("normal", "uniform"):
            raise ValidationError("latent_distribution must be normal or uniform")

    @property
    def names(self) -> tuple:
        return tuple(c.name for c in self.covariates)

    @property
    def column_order(self) -> tuple:
        """Markers first, then the remaining covariates."""
        return self.markers + tuple(n for n in self.names if n not in self.markers)

    def _vec(self, coefs) -> np.ndarray:
        return np.array([float(coefs.get(n, 0.0)) for n in self.names])

    def linear_predictors(self, X: np.ndarray, U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(eta_0, eta_1)`` for covariate rows in scenario column order."""
        base = (self.intercept + X @ self._vec(self.eta_x)
                + (X * X) @ self._vec(self.quadratic) + self.eta_u * U)
        return base, base + self.treatment + X @ self._vec(self.eta_tx)

    def mean(self, eta):
        if self.link == "logit":
            return special.expit(eta)
        if self.link == "probit":
            return special.ndtr(eta)
        return eta

    def benefit_probability(self, X, U) -> np.ndarray:
        """Exact ``P(B = 1 | X, U)``; the potential outcomes are independent given both."""
        e0, e1 = self.linear_predictors(np.atleast_2d(X), np.asarray(U, dtype=float))
        if self.outcome_kind == "continuous":
            sd = np.sqrt(2.0 * self.dispersion)
            return special.ndtr((e1 - e0 - self.benefit.delta) / sd)
        p0, p1 = self.mean(e0), self.mean(e1)
        if self.benefit.kind == "binary_leq":
            return 1.0 - p0 * (1.0 - p1)
        return p1 * (1.0 - p0)

    def draw_latent(self, rng, n) -> np.ndarray:
        if self.latent_distribution == "normal":
            return rng.standard_normal(n)
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), n)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Scenario":
        doc = dict(doc)
        try:
            covs = tuple(CovariateSpec(**c) for c in doc.pop("covariates"))
            if "marker" in doc:
                doc["markers"] = [doc.pop("marker")]
            coefs = dict(doc.pop("coefficients", {}))
            benefit = BenefitDefinition(**doc.pop("benefit", {}))
            return cls(covariates=covs, benefit=benefit,
                       intercept=float(coefs.pop("intercept", 0.0)),
                       treatment=float(coefs.pop("treatment", 0.0)),
                       eta_x=dict(coefs.pop("covariates", {})),
                       eta_tx=dict(coefs.pop("interactions", {})),
                       eta_u=float(coefs.pop("latent", 0.0)),
                       quadratic=dict(coefs.pop("quadratic", {})),
                       **doc)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed scenario: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "Scenario":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ValidationError(f"scenario file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"scenario is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


@dataclass(frozen=True, eq=False)
class FullTrial:
    scenario: Scenario
    x: np.ndarray          # scenario column order
    u: np.ndarray
    treatment: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    b: np.ndarray

    @property
    def n(self) -> int:
        return len(self.u)

    @property
    def outcome(self) -> np.ndarray:
        return np.where(self.treatment == 1, self.y1, self.y0)

    def masked(self) -> TrialDataset:
        """The observable view: only ``Y(T)`` is kept."""
        sc = self.scenario
        order = [sc.names.index(c) for c in sc.column_order]
        x = self.x[:, order]
        kinds = {m: infer_marker_kind(x[:, k]) for k, m in enumerate(sc.markers)}
        return TrialDataset(
            ids=tuple(str(i + 1) for i in range(self.n)),
            outcome=self.outcome,
            treatment=self.treatment,
            covariates=x,
            covariate_names=sc.column_order,
            marker_names=sc.markers,
            outcome_kind=sc.outcome_kind,
            marker_kinds=kinds,
        )

    def marker(self, name: str) -> np.ndarray:
        return self.x[:, self.scenario.names.index(name)]

    def write_csv(self, path, masked: bool = False) -> None:
        sc = self.scenario
        head = ["id", "treatment", "outcome"]
        if not masked:
            head += list(COUNTERFACTUAL_COLUMNS)
        head += list(sc.column_order)
        cols = [sc.names.index(c) for c in sc.column_order]
        y = self.outcome
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for i in range(self.n):
                row = [str(i + 1), str(int(self.treatment[i])), _fmt(y[i])]
                if not masked:
                    row += [_fmt(self.y0[i]), _fmt(self.y1[i]), _fmt(self.u[i]), str(int(self.b[i]))]
                row += [_fmt(self.x[i, c]) for c in cols]
                w.writerow(row)


def _fmt(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def simulate_trial(scenario: Scenario, n: int, seed=0) -> FullTrial:
    """Draw ``n`` subjects; identical ``seed`` gives an identical trial."""
    if n < 2:
        raise ValidationError("n must be >= 2")
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]
    rx, ru, rt, ry = streams
    x = np.column_stack([c.draw(rx, n) for c in scenario.covariates])
    u = scenario.draw_latent(ru, n)
    t = (rt.random(n) < scenario.randomization_p).astype(np.int8)
    e0, e1 = scenario.linear_predictors(x, u)
    if scenario.outcome_kind == "binary":
        y0 = (ry.random(n) < scenario.mean(e0)).astype(float)
        y1 = (ry.random(n) < scenario.mean(e1)).astype(float)
    else:
        sd = np.sqrt(scenario.dispersion)
        y0 = e0 + sd * ry.standard_normal(n)
        y1 = e1 + sd * ry.standard_normal(n)
    b = scenario.benefit.indicator(y0, y1)
    return FullTrial(scenario, x, u, t, y0, y1, b)


def oracle_pi_z(scenario: Scenario, z_grid, mc_draws: int = 100_000, seed=0,
                marker: str | None = None) -> np.ndarray:
    """``P(B = 1 | Z = z)`` by Monte Carlo over the other covariates and ``U``.

    The same draws are reused at every ``z``.
    """
    if mc_draws < 1:
        raise ValidationError("mc_draws must be >= 1")
    marker = marker or scenario.markers[0]
    k = scenario.names.index(marker)
    rx, ru = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    x = np.column_stack([c.draw(rx, mc_draws) for c in scenario.covariates])
    u = scenario.draw_latent(ru, mc_draws)
    out = np.empty(len(np.atleast_1d(z_grid)))
    for j, z in enumerate(np.atleast_1d(z_grid)):
        x[:, k] = z
        out[j] = scenario.benefit_probability(x, u).mean()
    return out


def roc_from_labels(z, b) -> RocCurve:
    """Empirical ROC of classifiers ``I(Z > c)`` against known 0/1 labels."""
    z = np.asarray(z, dtype=float)
    b = np.asarray(b).astype(bool)
    n_pos, n_neg = int(b.sum()), int((~b).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateError("oracle ROC needs both benefit classes")
    order = np.argsort(-z, kind="stable")
    zs, bs = z[order], b[order]
    # last index of each run of tied values, scanning from the largest
    ends = np.flatnonzero(np.r_[zs[1:] != zs[:-1], True])
    tp = np.cumsum(bs)[ends]
    fp = np.cumsum(~bs)[ends]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    # trapezoid area in integer counts, one rounding: equals the Mann-Whitney statistic
    tp0, fp0 = np.r_[0, tp], np.r_[0, fp]
    twice_area = int(np.sum(np.diff(fp0) * (tp0[1:] + tp0[:-1])))
    return RocCurve(fpr, tpr, twice_area / (2 * n_pos * n_neg))


def oracle_roc(full: FullTrial, marker: str | None = None) -> RocCurve:
    """ROC of the marker against the true benefit labels."""
    marker = marker or full.scenario.markers[0]
    return roc_from_labels(full.marker(marker), full.b)


def load_full_trial(path, covariate_names) -> tuple[dict, np.ndarray]:
    """Read the counterfactual columns of a full-trial CSV (``y0, y1, u, b``)."""
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    missing = [c for c in COUNTERFACTUAL_COLUMNS if c not in header]
    if missing:
        raise ValidationError(f"counterfactual columns required: missing {missing}")
    ids, raw = read_table(path, list(COUNTERFACTUAL_COLUMNS))
    cf = {c: np.array([float(v) for v in raw[c]]) for c in COUNTERFACTUAL_COLUMNS}
    return cf, np.array(ids)
