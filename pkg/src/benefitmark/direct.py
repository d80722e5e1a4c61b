"""Direct estimation of the benefit probability from cross-arm subject pairs.

A control subject ``i`` and an experimental subject ``j`` with similar
covariates form an artificial potential-outcome pair ``(Y_i, Y_j)``. A
pairwise helper model

    P(B_ij = 1) = psi(b1 + bX'(X_i + X_j)/2 + bdX'(X_j - X_i))

is fitted to the closest pairs; the benefit model ``psi(a1 + aX'x)`` then
takes ``(a1, aX) = gamma * (b1, bX)``, where ``gamma = 1`` corresponds to
conditional independence of the potential outcomes given ``X`` and any
``gamma > 2**-0.5`` is admissible in a sensitivity analysis.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .data import GAMMA_BOUND, BenefitDefinition, TrialDataset
from .errors import DegenerateError, ValidationError
from .glm import LOGIT, LinkFamily, inverse_link, solve_estimating_equation
from .kernels import pair_sq_distances
from .surface import LinearBenefitSurface


@dataclass(frozen=True)
class PairSet:
    """Kept (control, experimental) pairs as parallel arrays of dataset row indices."""

    i: np.ndarray
    j: np.ndarray
    distance: np.ndarray
    b: np.ndarray
    fraction_kept: float

    def __len__(self):
        return len(self.i)


def _standardized(X: np.ndarray) -> np.ndarray:
    sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    keep = sd > 0
    return (X[:, keep] - X[:, keep].mean(axis=0)) / sd[keep]


def _smallest_k(d2: np.ndarray, k: int) -> np.ndarray:
    """Flat indices of the ``k`` smallest values; ties resolved by index."""
    if k >= len(d2):
        return np.arange(len(d2))
    threshold = np.partition(d2, k - 1)[k - 1]
    below = np.flatnonzero(d2 < threshold)
    at = np.flatnonzero(d2 == threshold)[: k - len(below)]
    return np.union1d(below, at)


def build_pairs(data: TrialDataset, benefit: BenefitDefinition, fraction: float = 0.01,
                epsilon: float | None = None) -> PairSet:
    """Cross-arm pairs closest in standardized covariate distance.

    Keeps the ``ceil(fraction * n0 * n1)`` closest pairs, or every pair with
    distance strictly below ``epsilon`` when that is given. Distances use
    each covariate scaled to unit sample standard deviation; constant
    covariates are ignored.
    """
    if not 0 < fraction <= 1:
        raise ValidationError("fraction must lie in (0, 1]")
    idx0 = np.flatnonzero(data.treatment == 0)
    idx1 = np.flatnonzero(data.treatment == 1)
    if len(idx0) == 0 or len(idx1) == 0:
        raise DegenerateError("empty treatment arm")
    Xs = np.ascontiguousarray(_standardized(data.covariates))
    total = len(idx0) * len(idx1)
    if Xs.shape[1] == 0:
        d2 = np.zeros(total)
    else:
        d2 = pair_sq_distances(np.ascontiguousarray(Xs[idx0]), np.ascontiguousarray(Xs[idx1]))
    if epsilon is not None:
        flat = np.flatnonzero(d2 < epsilon * epsilon)
    else:
        k = math.ceil(round(fraction * total, 9))
        flat = _smallest_k(d2, k)
    if len(flat) == 0:
        raise DegenerateError("pair selection kept zero pairs")
    i = idx0[flat // len(idx1)]
    j = idx1[flat % len(idx1)]
    b = benefit.indicator(data.outcome[i], data.outcome[j])
    return PairSet(i, j, np.sqrt(d2[flat]), b, len(flat) / total)


def saturated_basis(X: np.ndarray) -> np.ndarray:
    """All products of distinct covariate columns (main effects first)."""
    X = np.atleast_2d(X)
    d = X.shape[1]
    cols = [X[:, list(c)].prod(axis=1)
            for r in range(1, d + 1) for c in itertools.combinations(range(d), r)]
    return np.column_stack(cols)


@dataclass(frozen=True)
class HelperFit:
    """Pairwise helper-model coefficients."""

    beta_1: float
    beta_x: np.ndarray
    beta_dx: np.ndarray
    link: LinkFamily = LOGIT
    basis: object = None
    n_pairs: int = 0


def pair_design(pairs: PairSet, data: TrialDataset, basis=None,
                difference_terms: bool = True) -> np.ndarray:
    Xi = data.covariates[pairs.i]
    Xj = data.covariates[pairs.j]
    if basis is not None:
        Xi, Xj = basis(Xi), basis(Xj)
    cols = [np.ones((len(pairs), 1)), (Xi + Xj) / 2.0]
    if difference_terms:
        cols.append(Xj - Xi)
    return np.hstack(cols)


def fit_direct(pairs: PairSet, data: TrialDataset, link: LinkFamily = LOGIT, *,
               basis=None, difference_terms: bool = True) -> HelperFit:
    """Fit the helper model on raw-scale covariates by solving the pairwise score equation.

    ``basis`` maps covariate rows to model features (``saturated_basis`` gives
    one free parameter per stratum of binary covariates). Dropping the
    difference terms is only sensible when pairs are matched exactly.
    """
    if len(pairs) == 0:
        raise DegenerateError("no pairs to fit")
    design = pair_design(pairs, data, basis, difference_terms)
    beta = solve_estimating_equation(design, pairs.b.astype(float), link)
    q = (design.shape[1] - 1) // (2 if difference_terms else 1)
    beta_dx = beta[1 + q:] if difference_terms else np.zeros(0)
    return HelperFit(float(beta[0]), beta[1:1 + q], beta_dx, link, basis, len(pairs))


def alpha_from_helper(helper: HelperFit) -> tuple[float, np.ndarray]:
    """Benefit-model coefficients under conditional independence: ``(b1, bX)``."""
    return helper.beta_1, helper.beta_x


@dataclass(frozen=True)
class DirectBenefitFit:
    helper: HelperFit
    gamma: float
    alpha_1: float = field(init=False)
    alpha_x: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.gamma > GAMMA_BOUND:
            raise ValidationError(
                f"gamma below identifiability bound: {self.gamma} <= 2^-1/2")
        object.__setattr__(self, "alpha_1", self.gamma * self.helper.beta_1)
        object.__setattr__(self, "alpha_x", self.gamma * self.helper.beta_x)

    def surface(self) -> LinearBenefitSurface:
        return LinearBenefitSurface(self.alpha_1, self.alpha_x, self.helper.link.link,
                                    self.helper.basis, value=self.gamma)


def direct_pi_x(fit: DirectBenefitFit, x, link: LinkFamily | None = None):
    """``psi(gamma * b1 + gamma * bX' x)``; accepts one row or a matrix of rows."""
    if not fit.gamma > GAMMA_BOUND:
        raise ValidationError("gamma below identifiability bound")
    link = link or fit.helper.link
    x = np.asarray(x, dtype=float)
    feats = x if fit.helper.basis is None else fit.helper.basis(np.atleast_2d(x))
    eta = fit.alpha_1 + feats @ fit.alpha_x
    out = inverse_link(eta, link)
    return float(np.ravel(out)[0]) if x.ndim == 1 else out


def stratum_estimate(data: TrialDataset, benefit: BenefitDefinition) -> dict:
    """Counting estimator ``mean_{i in S0k, j in S1k} B_ij`` for each distinct covariate row."""
    out = {}
    rows = [tuple(r) for r in data.covariates]
    for key in sorted(set(rows)):
        mask = np.array([r == key for r in rows])
        y0 = data.outcome[mask & (data.treatment == 0)]
        y1 = data.outcome[mask & (data.treatment == 1)]
        if len(y0) and len(y1):
            out[key] = float(benefit.indicator(y0[:, None], y1[None, :]).mean())
    return out
