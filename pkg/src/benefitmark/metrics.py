"""Classification accuracy of a marker for the unobserved benefit indicator.

Given ``pi_Z`` and the empirical marker distribution, Bayes' rule recovers
the marker distribution within the benefit and no-benefit groups, from which
TPR/FPR (binary marker) or the ROC curve and its AUC (continuous marker)
follow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TrialDataset
from .errors import DegenerateError, ValidationError
from .smoother import MarkerCurve


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous CDF with jumps ``mass / total`` at sorted points ``x``."""

    x: np.ndarray
    mass: np.ndarray

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    @property
    def cdf(self) -> np.ndarray:
        # normalizing by the last partial sum keeps the values monotone and ending at 1
        head = np.cumsum(self.mass)
        return head / head[-1]

    @property
    def survival(self) -> np.ndarray:
        """``1 - F`` at each jump point, as exact tail sums (0 at the last point)."""
        tail = np.cumsum(self.mass[::-1])[::-1]
        return np.concatenate([tail[1:], [0.0]]) / tail[0]

    def __call__(self, z) -> np.ndarray:
        pos = np.searchsorted(self.x, np.asarray(z, dtype=float), side="right")
        cdf = np.concatenate([[0.0], self.cdf])
        return cdf[pos]


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def binary_rates(curve: MarkerCurve) -> tuple[float, float]:
    """True and false positive rates of a binary marker, as ``(tpr, fpr)``."""
    if curve.marker_kind != "binary" or curve.tau is None:
        raise ValidationError("binary_rates needs a binary marker curve")
    tau = curve.tau
    p0, p1 = float(curve.pi_z[0]), float(curve.pi_z[1])
    den_t = tau * p1 + (1 - tau) * p0
    den_f = tau * (1 - p1) + (1 - tau) * (1 - p0)
    if den_t <= 0:
        raise DegenerateError("TPR undefined: no benefit mass")
    if den_f <= 0:
        raise DegenerateError("FPR undefined: benefit with certainty")
    return tau * p1 / den_t, tau * (1 - p1) / den_f


def weighted_cdfs(z, pi) -> tuple[StepFunction, StepFunction]:
    """Marker CDFs in the benefit and no-benefit groups from per-subject ``pi_Z(Z_i)``."""
    z = np.asarray(z, dtype=float)
    pi = np.asarray(pi, dtype=float)
    ux, inv = np.unique(z, return_inverse=True)
    m1 = np.bincount(inv, weights=pi, minlength=len(ux))
    m0 = np.bincount(inv, weights=1.0 - pi, minlength=len(ux))
    if not m1.sum() > 0:
        raise DegenerateError("no-benefit degeneracy: sum of pi_Z is zero")
    if not m0.sum() > 0:
        raise DegenerateError("all-benefit degeneracy: sum of 1 - pi_Z is zero")
    return StepFunction(ux, m1), StepFunction(ux, m0)


def conditional_cdfs(data: TrialDataset, curve: MarkerCurve) -> tuple[StepFunction, StepFunction]:
    """``(F1, F0)``: marker CDFs given benefit and given no benefit."""
    z = data.marker(curve.marker)
    return weighted_cdfs(z, curve.at(z))


def auc(fpr, tpr) -> float:
    """Trapezoidal area under the piecewise-linear curve through the points."""
    fpr = np.asarray(fpr, dtype=float)
    tpr = np.asarray(tpr, dtype=float)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)


def roc_from_cdfs(F1: StepFunction, F0: StepFunction) -> RocCurve:
    """Threshold sweep over distinct marker values, from high to low, plus both corners."""
    if not np.array_equal(F1.x, F0.x):
        raise ValidationError("CDFs must share jump points")
    s1, s0 = F1.survival, F0.survival
    fpr = np.concatenate([[0.0], s0[-2::-1] if len(s0) > 1 else [], [1.0]])
    tpr = np.concatenate([[0.0], s1[-2::-1] if len(s1) > 1 else [], [1.0]])
    return RocCurve(fpr, tpr, auc(fpr, tpr))


def roc_curve(data: TrialDataset, curve: MarkerCurve) -> RocCurve:
    return roc_from_cdfs(*conditional_cdfs(data, curve))


def compare_aucs(auc_a: float, auc_b: float) -> float:
    return auc_a - auc_b


FPR_GRID = np.linspace(0.0, 1.0, 101)


def roc_on_grid(roc: RocCurve, grid=FPR_GRID) -> np.ndarray:
    """TPR at each grid FPR by linear interpolation; vertical runs take their top value."""
    grid = np.asarray(grid, dtype=float)
    fpr, tpr = roc.fpr, roc.tpr
    k = np.searchsorted(fpr, grid, side="right") - 1
    k = np.clip(k, 0, len(fpr) - 1)
    out = tpr[k].astype(float)
    inner = (fpr[k] < grid) & (k + 1 < len(fpr))
    kk = k[inner]
    frac = (grid[inner] - fpr[kk]) / (fpr[kk + 1] - fpr[kk])
    out[inner] = tpr[kk] + frac * (tpr[kk + 1] - tpr[kk])
    return out
