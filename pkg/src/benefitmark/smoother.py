"""Marker-level benefit curves ``pi_Z(z) = E{pi_X(z, W) | Z = z}``.

For a continuous marker the conditional law of ``W`` given ``Z = z`` is
estimated by Gaussian-kernel weights on the observed ``Z``, so

    pi_Z(z) = sum_i k((Z_i - z)/lam) pi_X(z, W_i) / sum_i k((Z_i - z)/lam).

Note that ``pi_X`` is re-evaluated at ``(z, W_i)``; it is not a smooth of the
per-subject values ``pi_X(Z_i, W_i)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TrialDataset
from .errors import DegenerateError, ValidationError
from .kernels import nw_benefit, nw_matrix
from .surface import BenefitSurface

UNDERFLOW = 1e-300
TIE_TOL = 1e-15


@dataclass(frozen=True)
class MarkerCurve:
    marker: str
    marker_kind: str
    z: np.ndarray
    pi_z: np.ndarray
    bandwidth: float | None = None
    tau: float | None = None
    fallback_points: int = 0

    def at(self, z) -> np.ndarray:
        """Curve values at observed marker values (exact matches only)."""
        z = np.asarray(z, dtype=float)
        pos = np.searchsorted(self.z, z)
        pos = np.clip(pos, 0, len(self.z) - 1)
        if not np.all(self.z[pos] == z):
            raise ValidationError("curve is only defined at observed marker values")
        return self.pi_z[pos]


def kernel_smooth(surface: BenefitSurface, marker_index: int, z_eval, z_obs, X_obs,
                  bandwidths) -> tuple[np.ndarray, np.ndarray]:
    """Nadaraya-Watson ``pi_Z`` at ``z_eval`` for each bandwidth.

    Returns ``(values, fallback)`` with shapes ``(m, L)``; where all kernel
    weights underflow, the value is the mean of ``pi_X(z, W_i)`` over the
    subjects nearest to ``z`` and ``fallback`` is True.
    """
    z_eval = np.ascontiguousarray(z_eval, dtype=float)
    z_obs = np.ascontiguousarray(z_obs, dtype=float)
    X_obs = np.asarray(X_obs, dtype=float)
    lam = np.ascontiguousarray(bandwidths, dtype=float)
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise ValidationError("bandwidth must be positive")
    parts = surface.additive_parts(marker_index, z_eval, X_obs)
    if parts is not None:
        num, den = nw_benefit(z_eval, z_obs, lam,
                              np.ascontiguousarray(parts.a), np.ascontiguousarray(parts.b),
                              parts.benefit, parts.link,
                              np.ascontiguousarray(parts.nodes), np.ascontiguousarray(parts.weights),
                              float(parts.delta), float(parts.scale))
    else:
        values = np.ascontiguousarray(surface.at_marker(marker_index, z_eval, X_obs))
        num, den = nw_matrix(z_eval, z_obs, lam, values)
    fallback = den < UNDERFLOW
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / den
    rows = np.flatnonzero(fallback.any(axis=1))
    for j in rows:
        dist = np.abs(z_obs - z_eval[j])
        nearest = np.flatnonzero(dist == dist.min())
        value = surface.at_marker(marker_index, z_eval[j:j + 1], X_obs[nearest]).mean()
        out[j, fallback[j]] = value
    return out, fallback


def smooth_pi_z(data: TrialDataset, surface: BenefitSurface, marker: str,
                bandwidth: float) -> MarkerCurve:
    """Kernel-smoothed benefit curve at each distinct observed marker value."""
    if not (bandwidth > 0 and np.isfinite(bandwidth)):
        raise ValidationError("bandwidth must be positive")
    k = data.column_index(marker)
    z_obs = data.covariates[:, k]
    z = np.unique(z_obs)
    values, fallback = kernel_smooth(surface, k, z, z_obs, data.covariates, [bandwidth])
    return MarkerCurve(marker, "continuous", z, values[:, 0], float(bandwidth),
                       None, int(fallback.sum()))


def binary_pi_z(data: TrialDataset, surface: BenefitSurface, marker: str) -> MarkerCurve:
    """Group means of ``pi_X(z, W_i)`` over subjects with ``Z_i = z``, for ``z`` in {0, 1}."""
    k = data.column_index(marker)
    z_obs = data.covariates[:, k]
    pis = []
    for z in (0.0, 1.0):
        group = z_obs == z
        if not group.any():
            raise DegenerateError(f"empty marker group: no subjects with {marker}={z:g}")
        pis.append(surface.at_marker(k, [z], data.covariates[group])[0].mean())
    return MarkerCurve(marker, "binary", np.array([0.0, 1.0]), np.array(pis),
                       None, float(z_obs.mean()))


def bandwidth_grid(z, exponents=range(-5, 6)) -> np.ndarray:
    """``2**l * sd(Z)`` for each exponent ``l``, ascending."""
    sd = float(np.std(z, ddof=1))
    if not sd > 0:
        raise DegenerateError("marker has zero variance")
    return np.sort(np.array([2.0 ** l * sd for l in exponents]))


def cv_scores(data: TrialDataset, surface: BenefitSurface, marker: str, grid,
              split_fraction: float = 0.5, seed=0) -> np.ndarray:
    """Validation mean squared error of the training-half smooth, per bandwidth."""
    k = data.column_index(marker)
    n = data.n
    n_train = int(np.floor(split_fraction * n))
    if n_train < 2 or n - n_train < 2:
        raise DegenerateError("cross-validation split leaves fewer than 2 subjects on a side")
    perm = np.random.default_rng(seed).permutation(n)
    train, valid = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    X = data.covariates
    target = surface(X[valid])
    pred, _ = kernel_smooth(surface, k, X[valid, k], X[train, k], X[train], grid)
    return np.mean((pred - target[:, None]) ** 2, axis=0)


def select_bandwidth(data: TrialDataset, surface: BenefitSurface, marker: str, grid=None,
                     split_fraction: float = 0.5, seed=0) -> float:
    """Bandwidth minimizing validation MSE on one random split; ties go to the smaller bandwidth."""
    if grid is None:
        grid = bandwidth_grid(data.marker(marker))
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValidationError("bandwidth grid is empty")
    if grid.size == 1:
        return float(grid[0])
    scores = cv_scores(data, surface, marker, grid, split_fraction, seed)
    best = np.flatnonzero(scores <= scores.min() + TIE_TOL)[0]
    return float(grid[best])
