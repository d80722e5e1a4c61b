"""One full estimation pass: benefit surfaces, marker curves, ROC and AUC.

The same function serves the point estimate and every bootstrap replicate,
so bandwidth selection is repeated inside each resample.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import AnalysisConfig, TrialDataset
from .direct import DirectBenefitFit, build_pairs, fit_direct
from .glm import LinkFamily
from .indirect import ci_surface, fit_mixed_model, fit_outcome_model, mixed_surface
from .metrics import RocCurve, binary_rates, roc_curve
from .smoother import MarkerCurve, bandwidth_grid, binary_pi_z, select_bandwidth, smooth_pi_z
from .surface import BenefitSurface


@dataclass(frozen=True)
class SettingResult:
    marker: str
    approach: str
    parameter: str
    value: float
    curve: MarkerCurve
    roc: RocCurve
    tpr: float | None = None
    fpr: float | None = None

    @property
    def auc(self) -> float:
        return self.roc.auc

    @property
    def key(self) -> tuple:
        return (self.marker, self.approach, self.value)


@dataclass(frozen=True)
class AnalysisResult:
    settings: list
    models: dict = field(default_factory=dict)

    def get(self, marker: str, approach: str, value: float) -> SettingResult:
        for s in self.settings:
            if s.key == (marker, approach, value):
                return s
        raise KeyError((marker, approach, value))


def cv_seed(config: AnalysisConfig, replicate: int, marker_pos: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(config.seed, spawn_key=(replicate, 1, marker_pos))


def fit_surfaces(data: TrialDataset, config: AnalysisConfig) -> tuple[list, dict]:
    """Benefit surfaces for every requested sensitivity setting, in report order."""
    surfaces: list[BenefitSurface] = []
    models: dict = {}
    link = LinkFamily.for_outcome("binary", config.link)
    if config.run_direct():
        pairs = build_pairs(data, config.benefit, config.pair_fraction)
        helper = fit_direct(pairs, data, link)
        models["direct"] = {
            "n_pairs": len(pairs),
            "beta_1": helper.beta_1,
            "beta_x": helper.beta_x.tolist(),
            "beta_dx": helper.beta_dx.tolist(),
        }
        for g in config.gamma_grid:
            surfaces.append(DirectBenefitFit(helper, g).surface())
    if config.run_indirect():
        interactions = config.interactions
        base = None
        models["indirect"] = []
        for theta in config.theta_u_grid:
            if theta == 0.0:
                base = base or fit_outcome_model(data, config.link, interactions)
                fit, surface = base, ci_surface(base, config.benefit)
            else:
                mixed = fit_mixed_model(data, config.link, interactions, theta,
                                        config.quadrature_nodes)
                fit, surface = mixed.theta_star, mixed_surface(mixed, config.benefit)
            models["indirect"].append({"theta_u": theta,
                                       "coefficients": fit.coefficients.tolist(),
                                       "dispersion": fit.dispersion})
            surfaces.append(surface)
    return surfaces, models


def marker_curve(data: TrialDataset, surface: BenefitSurface, marker: str,
                 config: AnalysisConfig, seed) -> MarkerCurve:
    if data.marker_kinds[marker] == "binary":
        return binary_pi_z(data, surface, marker)
    grid = bandwidth_grid(data.marker(marker), config.bandwidth_exponents)
    lam = select_bandwidth(data, surface, marker, grid, config.cv_split_fraction, seed)
    return smooth_pi_z(data, surface, marker, lam)


def analyze(data: TrialDataset, config: AnalysisConfig, replicate: int = 0) -> AnalysisResult:
    surfaces, models = fit_surfaces(data, config)
    results = []
    for surface in surfaces:
        for pos, marker in enumerate(config.marker_columns):
            curve = marker_curve(data, surface, marker, config, cv_seed(config, replicate, pos))
            roc = roc_curve(data, curve)
            tpr = fpr = None
            if curve.marker_kind == "binary":
                tpr, fpr = binary_rates(curve)
            results.append(SettingResult(marker, surface.approach, surface.parameter,
                                         surface.value, curve, roc, tpr, fpr))
    return AnalysisResult(results, models)
