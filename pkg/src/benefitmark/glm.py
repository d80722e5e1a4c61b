"""Generalized linear models: links, IRLS fitting and the pairwise estimating equation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConvergenceError, RankDeficientError, SeparationError, ValidationError

SCORE_TOL = 1e-8
STEP_TOL = 1e-6
MAX_ITER = 100
SEPARATION_BOUND = 30.0


@dataclass(frozen=True)
class LinkFamily:
    link: str = "logit"
    outcome_family: str = "bernoulli"

    def __post_init__(self):
        ok = {("logit", "bernoulli"), ("probit", "bernoulli"), ("identity", "gaussian")}
        if (self.link, self.outcome_family) not in ok:
            raise ValidationError(
                f"link {self.link!r} cannot be paired with family {self.outcome_family!r}")

    @classmethod
    def for_outcome(cls, outcome_kind: str, link: str = "logit") -> "LinkFamily":
        if outcome_kind == "continuous":
            return cls("identity", "gaussian")
        return cls(link, "bernoulli")


LOGIT = LinkFamily("logit", "bernoulli")
PROBIT = LinkFamily("probit", "bernoulli")
IDENTITY = LinkFamily("identity", "gaussian")


def _link_name(link) -> str:
    return link.link if isinstance(link, LinkFamily) else str(link)


def inverse_link(eta, link):
    """Mean as a function of the linear predictor: logistic, normal CDF or identity."""
    name = _link_name(link)
    if name == "logit":
        return special.expit(eta)
    if name == "probit":
        return special.ndtr(eta)
    if name == "identity":
        return np.asarray(eta, dtype=float) * 1.0 if np.ndim(eta) else float(eta)
    raise ValidationError(f"unknown link {name!r}")


def link_function(mu, link):
    name = _link_name(link)
    if name == "logit":
        return special.logit(mu)
    if name == "probit":
        return special.ndtri(mu)
    return np.asarray(mu, dtype=float)


def log_mu(eta, link):
    """``log psi(eta)`` and ``log(1 - psi(eta))`` without cancellation."""
    name = _link_name(link)
    if name == "logit":
        return special.log_expit(eta), special.log_expit(-eta)
    return special.log_ndtr(eta), special.log_ndtr(-eta)


def _bernoulli_terms(eta, link):
    """Return ``mu``, ``dmu/deta`` and ``(dmu/deta) / (mu (1 - mu))``."""
    name = _link_name(link)
    if name == "logit":
        mu = special.expit(eta)
        dmu = mu * (1.0 - mu)
        return mu, dmu, np.ones_like(mu)
    mu = special.ndtr(eta)
    log_phi = -0.5 * eta * eta - 0.5 * np.log(2 * np.pi)
    dmu = np.exp(log_phi)
    ratio = np.exp(log_phi - special.log_ndtr(eta) - special.log_ndtr(-eta))
    return mu, dmu, ratio


def column_sums(design: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``design' v`` with each column summed exactly.

    Plain BLAS accumulation error grows like ``sqrt(n) eps sum|x v|``, which
    passes the score tolerance for a few hundred thousand rows.
    """
    return np.array([math.fsum(col) for col in (design * v[:, None]).T])


def bernoulli_score(beta, design, response, link, weights=None) -> np.ndarray:
    """Bernoulli score ``sum_i w_i x_i (y_i - mu_i) mu_i' / (mu_i (1 - mu_i))``."""
    eta = design @ beta
    mu, _, ratio = _bernoulli_terms(eta, link)
    w = np.ones_like(mu) if weights is None else weights
    return column_sums(design, w * (response - mu) * ratio)


def _bernoulli_loglik(eta, y, w, link) -> float:
    lp, lq = log_mu(eta, link)
    return float(np.sum(w * (y * lp + (1.0 - y) * lq)))


@dataclass(frozen=True)
class GlmFit:
    coefficients: np.ndarray
    dispersion: float | None
    converged: bool
    iterations: int
    log_likelihood: float
    max_score: float
    family: LinkFamily


def _check_design(design: np.ndarray, response: np.ndarray, weights: np.ndarray):
    n, p = design.shape
    if response.shape != (n,):
        raise ValidationError("response length must equal design rows")
    if weights.shape != (n,) or np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValidationError("weights must be a nonnegative vector of length n")
    if not (np.all(np.isfinite(design)) and np.all(np.isfinite(response))):
        raise ValidationError("design and response must be finite")
    active = weights > 0
    if int(active.sum()) < p:
        raise RankDeficientError(f"need at least {p} observations with positive weight, got {int(active.sum())}")
    rank = np.linalg.matrix_rank(design[active])
    if rank < p:
        raise RankDeficientError(f"design matrix has rank {rank} < {p} columns")


def _fit_gaussian(X, y, w, family) -> GlmFit:
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    resid = y - X @ beta
    total = w.sum()
    sigma2 = float(np.sum(w * resid**2) / total)
    if sigma2 <= 0:
        raise ConvergenceError("gaussian fit has zero residual variance")
    score = X.T @ (w * resid) / sigma2
    loglik = -0.5 * total * (np.log(2 * np.pi * sigma2) + 1.0)
    max_score = float(np.max(np.abs(score)))
    return GlmFit(beta, sigma2, True, 1, float(loglik), max_score, family)


def fit_glm(design, response, family: LinkFamily = LOGIT, weights=None, *,
            ridge: float = 0.0, max_iter: int = MAX_ITER) -> GlmFit:
    """Maximum-likelihood GLM fit by iteratively reweighted least squares.

    Bernoulli fits start with one working-response step, then take Fisher
    scoring steps ``H^-1 U`` from an exactly summed score, halving on any
    deviance increase. A fit is converged once every score component is at most
    ``1e-8`` and the last step was negligible; a coefficient running past 30
    while the deviance still falls is reported as separation.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim != 2:
        raise ValidationError("design must be a 2-D matrix")
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    _check_design(X, y, w)
    if family.outcome_family == "gaussian":
        return _fit_gaussian(X, y, w, family)
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("bernoulli response must be 0/1")

    p = X.shape[1]
    mu0 = (w * y + 0.5) / (w + 1.0)
    eta = link_function(mu0, family)
    beta = None
    score = None
    loglik = -np.inf
    for it in range(1, max_iter + 1):
        mu, dmu, ratio = _bernoulli_terms(eta, family)
        irls_w = w * dmu * ratio
        H = X.T @ (irls_w[:, None] * X)
        if ridge:
            H = H + ridge * np.eye(p)
        try:
            if beta is None:
                target = np.linalg.solve(H, X.T @ (irls_w * eta + w * (y - mu) * ratio))
            else:
                target = beta + np.linalg.solve(H, score)
        except np.linalg.LinAlgError:
            raise RankDeficientError("weighted information matrix is singular") from None
        if beta is None:
            new, new_ll = target, _bernoulli_loglik(X @ target, y, w, family)
        else:
            step = target - beta
            new, new_ll = target, _bernoulli_loglik(X @ target, y, w, family)
            halvings = 0
            while new_ll < loglik - 1e-12 * abs(loglik) and halvings < 30:
                step = step / 2.0
                new = beta + step
                new_ll = _bernoulli_loglik(X @ new, y, w, family)
                halvings += 1
        rel = np.inf if beta is None else np.max(np.abs(new - beta)) / (1.0 + np.max(np.abs(new)))
        improving = new_ll > loglik
        beta, loglik = new, new_ll
        eta = X @ beta
        if np.max(np.abs(beta)) > SEPARATION_BOUND and improving:
            raise SeparationError(
                "coefficients diverging with decreasing deviance (complete or quasi-complete separation)")
        score = bernoulli_score(beta, X, y, family, w)
        max_score = float(np.max(np.abs(score)))
        # a small score alone is not enough: under separation the score
        # vanishes while coefficients keep walking off.
        if max_score <= SCORE_TOL and rel <= STEP_TOL:
            return GlmFit(beta, None, True, it, loglik, max_score, family)
    raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations")


def solve_estimating_equation(pairs_design, pair_responses, link: LinkFamily = LOGIT) -> np.ndarray:
    """Root of the pairwise Bernoulli-score equation over subject pairs.

    The equation ``sum (d pi / d beta) (B - pi) / (pi (1 - pi)) = 0`` is the
    Bernoulli score, so the root is the GLM fit of the pair table. Pairs
    share subjects; only the point estimate is meaningful here.
    """
    if link.outcome_family != "bernoulli":
        raise ValidationError("the pairwise equation needs a logit or probit link")
    return fit_glm(pairs_design, pair_responses, link).coefficients
