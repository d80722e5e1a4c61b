"""Fitted benefit-probability surfaces ``pi_X(x)``.

A surface evaluates the probability of benefit at arbitrary covariate rows.
Smoothing over a marker needs ``pi_X(z, W_i)`` for every evaluation point
``z`` and every subject ``i``; surfaces whose linear predictors split into a
``z`` part plus a ``W`` part expose that split through :meth:`additive_parts`
so the compiled kernel never materializes the full matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels_py
from .kernels import BENEFIT_DIRECT, BENEFIT_GAP, BENEFIT_LEQ, BENEFIT_LT, LINK_CODES

BENEFIT_CODES = {"binary_leq": BENEFIT_LEQ, "binary_lt": BENEFIT_LT, "continuous_gap": BENEFIT_GAP}


@dataclass(frozen=True)
class AdditiveParts:
    """Linear predictors ``a[j, c] + b[i, c]`` plus how to turn them into a probability."""

    a: np.ndarray
    b: np.ndarray
    benefit: int
    link: int
    nodes: np.ndarray
    weights: np.ndarray
    delta: float = 0.0
    scale: float = 1.0


class BenefitSurface:
    """Base class; subclasses implement ``__call__`` and optionally ``_predictors``."""

    approach = ""
    parameter = ""
    value = float("nan")

    def __call__(self, X) -> np.ndarray:
        raise NotImplementedError

    def additive_parts(self, marker_index: int, z_values, X) -> AdditiveParts | None:
        return None

    def at_marker(self, marker_index: int, z_values, X) -> np.ndarray:
        """Matrix ``P[j, i] = pi_X`` at ``X_i`` with the marker set to ``z_values[j]``."""
        z_values = np.asarray(z_values, dtype=float)
        X = np.asarray(X, dtype=float)
        parts = self.additive_parts(marker_index, z_values, X)
        if parts is not None:
            return _kernels_py.benefit_matrix(parts.a, parts.b, parts.benefit, parts.link,
                                              parts.nodes, parts.weights, parts.delta, parts.scale)
        out = np.empty((len(z_values), X.shape[0]))
        Xz = X.copy()
        for j, z in enumerate(z_values):
            Xz[:, marker_index] = z
            out[j] = self(Xz)
        return out


def _split(coef: np.ndarray, marker_index: int, X: np.ndarray):
    """Coefficient on the marker and the linear contribution of the other columns."""
    rest = np.delete(np.arange(X.shape[1]), marker_index)
    return coef[marker_index], X[:, rest] @ coef[rest]


class LinearBenefitSurface(BenefitSurface):
    """``pi_X(x) = psi(intercept + coef' phi(x))`` for a fixed basis ``phi``."""

    approach = "direct"
    parameter = "gamma"

    def __init__(self, intercept: float, coef, link: str, basis=None, value: float = 1.0):
        self.intercept = float(intercept)
        self.coef = np.asarray(coef, dtype=float)
        self.link = link
        self.basis = basis
        self.value = float(value)

    def linear_predictor(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        feats = X if self.basis is None else self.basis(X)
        return self.intercept + feats @ self.coef

    def __call__(self, X) -> np.ndarray:
        return _kernels_py._psi(self.linear_predictor(X), LINK_CODES[self.link])

    def additive_parts(self, marker_index, z_values, X):
        if self.basis is not None:
            return None
        slope, rest = _split(self.coef, marker_index, np.asarray(X, dtype=float))
        a = (self.intercept + slope * np.asarray(z_values, dtype=float))[:, None]
        return AdditiveParts(np.ascontiguousarray(a), np.ascontiguousarray(rest[:, None]),
                             BENEFIT_DIRECT, LINK_CODES[self.link],
                             np.zeros(1), np.ones(1))


class ArmBenefitSurface(BenefitSurface):
    """Benefit probability from per-arm linear predictors ``c_t + v_t' x``.

    Potential outcomes are independent given ``x`` and a latent shift ``u``
    that enters both arms; ``nodes``/``weights`` integrate ``u`` out (a single
    zero node means no latent effect).
    """

    approach = "indirect"
    parameter = "theta_u"

    def __init__(self, const, slopes, link: str, benefit, nodes, weights,
                 sigma: float | None = None, value: float = 0.0):
        self.const = np.asarray(const, dtype=float)      # (2,)
        self.slopes = np.asarray(slopes, dtype=float)    # (2, d)
        self.link = link
        self.benefit = benefit
        self.code = BENEFIT_CODES[benefit.kind]
        self.nodes = np.asarray(nodes, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.sigma = sigma
        self.value = float(value)
        if self.code == BENEFIT_GAP:
            # the latent shift cancels in y1 - y0 under an identity link
            self.nodes, self.weights = np.zeros(1), np.ones(1)

    @property
    def _gap_args(self):
        if self.code == BENEFIT_GAP:
            return self.benefit.delta, self.sigma * np.sqrt(2.0)
        return 0.0, 1.0

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        e0 = self.const[0] + X @ self.slopes[0]
        e1 = self.const[1] + X @ self.slopes[1]
        delta, scale = self._gap_args
        link = LINK_CODES[self.link]
        out = np.zeros(X.shape[0])
        for u, w in zip(self.nodes, self.weights):
            out += w * _kernels_py._benefit(e0 + u, e1 + u, self.code, link, delta, scale)
        return out

    def additive_parts(self, marker_index, z_values, X):
        X = np.asarray(X, dtype=float)
        z_values = np.asarray(z_values, dtype=float)
        a = np.empty((len(z_values), 2))
        b = np.empty((X.shape[0], 2))
        for t in (0, 1):
            slope, rest = _split(self.slopes[t], marker_index, X)
            a[:, t] = self.const[t] + slope * z_values
            b[:, t] = rest
        delta, scale = self._gap_args
        return AdditiveParts(a, b, self.code, LINK_CODES[self.link],
                             self.nodes, self.weights, delta, scale)
