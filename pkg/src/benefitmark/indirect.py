"""Indirect estimation of the benefit probability through an outcome model.

The outcome GLM has mean ``psi(t1 + tT T + tX'X + tTX'(T X_I))`` for a set
``I`` of interaction columns. Randomization makes each arm's fitted model the
potential-outcome distribution given ``X``; assuming the two potential
outcomes independent given ``X`` gives the benefit probability as a product
of the arm marginals. For the sensitivity analysis a latent standard normal
``U`` with fixed coefficient ``theta_u`` enters both arms, the remaining
coefficients are refitted by marginal maximum likelihood, and the benefit
probability is averaged over ``U``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .data import BenefitDefinition, TrialDataset
from .errors import ConvergenceError, FitError, ValidationError
from .glm import LOGIT, LinkFamily, fit_glm, log_mu
from .surface import ArmBenefitSurface

DEFAULT_NODES = 32


def gauss_hermite_normal(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``E[g(U)]`` with ``U ~ N(0, 1)``."""
    if k < 2:
        raise ValidationError("quadrature needs at least 2 nodes")
    nodes, w = special.roots_hermitenorm(k)
    return nodes, w / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class OutcomeModelFit:
    theta_1: float
    theta_t: float
    theta_x: np.ndarray
    theta_tx: np.ndarray
    link: LinkFamily
    interaction_columns: tuple
    covariate_names: tuple
    dispersion: float | None = None
    log_likelihood: float = float("nan")

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate([[self.theta_1, self.theta_t], self.theta_x, self.theta_tx])

    def arm_predictors(self):
        """Per-arm constants ``c_t`` and slope vectors ``v_t``."""
        v1 = self.theta_x.copy()
        for k, name in enumerate(self.interaction_columns):
            v1[self.covariate_names.index(name)] += self.theta_tx[k]
        const = np.array([self.theta_1, self.theta_1 + self.theta_t])
        return const, np.vstack([self.theta_x, v1])


@dataclass(frozen=True)
class MixedModelFit:
    theta_star: OutcomeModelFit
    theta_u_star: float
    quadrature_nodes: int
    converged: bool = True
    iterations: int = 0

    @property
    def coefficients(self) -> np.ndarray:
        return self.theta_star.coefficients


def outcome_design(data: TrialDataset, interactions) -> np.ndarray:
    t = data.treatment.astype(float)
    cols = [data.column_index(c) for c in interactions]
    return np.column_stack([np.ones(data.n), t, data.covariates,
                            t[:, None] * data.covariates[:, cols]])


def _resolve_link(data: TrialDataset, link) -> LinkFamily:
    if isinstance(link, LinkFamily):
        fam = link
    else:
        fam = LinkFamily.for_outcome(data.outcome_kind, link)
    want = "gaussian" if data.outcome_kind == "continuous" else "bernoulli"
    if fam.outcome_family != want:
        raise ValidationError(f"{data.outcome_kind} outcome needs a {want} family")
    return fam


def _unpack(coef, data, fam, interactions, dispersion, loglik) -> OutcomeModelFit:
    d = data.covariates.shape[1]
    return OutcomeModelFit(float(coef[0]), float(coef[1]), np.array(coef[2:2 + d]),
                           np.array(coef[2 + d:]), fam, tuple(interactions),
                           data.covariate_names, dispersion, loglik)


def fit_outcome_model(data: TrialDataset, link=LOGIT, interactions=()) -> OutcomeModelFit:
    """Maximum-likelihood outcome GLM with treatment, covariates and chosen interactions."""
    fam = _resolve_link(data, link)
    interactions = tuple(interactions)
    fit = fit_glm(outcome_design(data, interactions), data.outcome, fam)
    return _unpack(fit.coefficients, data, fam, interactions, fit.dispersion, fit.log_likelihood)


def _check_kinds(fam: LinkFamily, benefit: BenefitDefinition):
    if benefit.outcome_kind == "binary" and fam.outcome_family != "bernoulli":
        raise ValidationError(f"benefit kind {benefit.kind} needs a binary outcome model")
    if benefit.outcome_kind == "continuous" and fam.outcome_family != "gaussian":
        raise ValidationError("continuous_gap benefit needs a gaussian outcome model")


def ci_surface(fit: OutcomeModelFit, benefit: BenefitDefinition) -> ArmBenefitSurface:
    _check_kinds(fit.link, benefit)
    const, slopes = fit.arm_predictors()
    sigma = np.sqrt(fit.dispersion) if fit.dispersion is not None else None
    return ArmBenefitSurface(const, slopes, fit.link.link, benefit, [0.0], [1.0], sigma, 0.0)


def mixed_surface(fit: MixedModelFit, benefit: BenefitDefinition) -> ArmBenefitSurface:
    inner = fit.theta_star
    _check_kinds(inner.link, benefit)
    const, slopes = inner.arm_predictors()
    if fit.theta_u_star == 0:
        # integrand constant in u: no quadrature, so this matches ci_surface exactly
        nodes, weights = np.zeros(1), np.ones(1)
    else:
        nodes, weights = gauss_hermite_normal(fit.quadrature_nodes)
    sigma = np.sqrt(inner.dispersion) if inner.dispersion is not None else None
    # U is symmetric, so only |theta_u| is identified
    return ArmBenefitSurface(const, slopes, inner.link.link, benefit,
                             abs(fit.theta_u_star) * nodes, weights, sigma, fit.theta_u_star)


def _scalar_or_rows(surface, x):
    x = np.asarray(x, dtype=float)
    out = surface(x)
    return float(out[0]) if x.ndim == 1 else out


def ci_pi_x(fit: OutcomeModelFit, x, benefit: BenefitDefinition):
    """Benefit probability with the potential outcomes independent given ``x``."""
    return _scalar_or_rows(ci_surface(fit, benefit), x)


def mixed_pi_x(fit: MixedModelFit, x, benefit: BenefitDefinition):
    """Benefit probability averaged over the latent effect by Gauss-Hermite quadrature."""
    return _scalar_or_rows(mixed_surface(fit, benefit), x)


def _node_derivatives(eta, y, fam: LinkFamily, log_sigma):
    """Per-node log-likelihood and its first/second derivatives in (eta[, log sigma])."""
    yy = y[:, None]
    if fam.outcome_family == "gaussian":
        s2 = np.exp(2.0 * log_sigma)
        r = yy - eta
        ll = -0.5 * np.log(2 * np.pi) - log_sigma - 0.5 * r * r / s2
        d1 = np.stack([r / s2, -1.0 + r * r / s2], axis=-1)
        d2 = np.empty(eta.shape + (2, 2))
        d2[..., 0, 0] = -1.0 / s2
        d2[..., 0, 1] = d2[..., 1, 0] = -2.0 * r / s2
        d2[..., 1, 1] = -2.0 * r * r / s2
        return ll, d1, d2
    lp, lq = log_mu(eta, fam)
    ll = yy * lp + (1.0 - yy) * lq
    if fam.link == "logit":
        mu = special.expit(eta)
        a = yy - mu
        c = -mu * (1.0 - mu)
    else:
        q = 2.0 * yy - 1.0
        v = q * eta
        m = np.exp(-0.5 * v * v - 0.5 * np.log(2 * np.pi) - special.log_ndtr(v))
        a = q * m
        c = -m * (v + m)
    return ll, a[..., None], c[..., None, None]


def marginal_loglik(params, X, y, fam, s, nodes, weights, need_derivs=True):
    """Marginal log-likelihood over ``U`` and, optionally, its gradient and Hessian."""
    p = X.shape[1]
    beta = params[:p]
    log_sigma = params[p] if fam.outcome_family == "gaussian" else 0.0
    eta = (X @ beta)[:, None] + s * nodes[None, :]
    ll, d1, d2 = _node_derivatives(eta, y, fam, log_sigma)
    lw = ll + np.log(weights)[None, :]
    total = special.logsumexp(lw, axis=1)
    value = float(total.sum())
    if not need_derivs:
        return value
    r = np.exp(lw - total[:, None])                       # posterior node weights
    abar = np.einsum("nk,nkc->nc", r, d1)
    M = (np.einsum("nk,nkcd->ncd", r, d2 + d1[..., :, None] * d1[..., None, :])
         - abar[:, :, None] * abar[:, None, :])
    grad = [X.T @ abar[:, 0]]
    if fam.outcome_family == "gaussian":
        grad.append([abar[:, 1].sum()])
        H = np.empty((p + 1, p + 1))
        H[:p, :p] = X.T @ (M[:, 0, 0][:, None] * X)
        H[:p, p] = H[p, :p] = X.T @ M[:, 0, 1]
        H[p, p] = M[:, 1, 1].sum()
    else:
        H = X.T @ (M[:, 0, 0][:, None] * X)
    return value, np.concatenate(grad), H


def ascent_step(H: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Newton step for a maximum, with curvature made negative where it is not.

    Where ``H`` is not negative definite each eigen-direction is scaled by the
    absolute curvature, so the step climbs out of saddle points at the rate
    Newton would descend into them.
    """
    curv, vecs = np.linalg.eigh(-H)
    if curv[0] > 0:
        return vecs @ ((vecs.T @ grad) / curv)
    floor = 1e-8 * max(np.max(np.abs(curv)), 1.0)
    return vecs @ ((vecs.T @ grad) / np.maximum(np.abs(curv), floor))


def fit_mixed_model(data: TrialDataset, link=LOGIT, interactions=(), theta_u_star: float = 0.0,
                    quadrature_nodes: int = DEFAULT_NODES, *, start=None,
                    max_iter: int = 200, tol: float = 1e-8) -> MixedModelFit:
    """Marginal maximum likelihood for the outcome model with a fixed latent coefficient.

    Newton iterations with the exact Hessian of the quadrature-approximated
    marginal log-likelihood; the gaussian family also estimates the
    conditional log standard deviation. At large ``theta_u_star`` the
    approximated likelihood can have saddle points, so steps use
    :func:`ascent_step` and convergence requires negative definite curvature.
    """
    if not (theta_u_star >= 0 and np.isfinite(theta_u_star)):
        raise ValidationError("theta_u_star must be finite and >= 0")
    nodes, weights = gauss_hermite_normal(quadrature_nodes)
    fam = _resolve_link(data, link)
    interactions = tuple(interactions)
    X = outcome_design(data, interactions)
    y = data.outcome
    s = float(theta_u_star)
    gaussian = fam.outcome_family == "gaussian"
    if start is None:
        glm = fit_glm(X, y, fam)
        params = glm.coefficients.copy()
        if gaussian:
            cond = glm.dispersion - s * s
            if cond <= 0:
                raise FitError(
                    f"theta_u_star={s} implies latent variance above the outcome variance {glm.dispersion:.4g}")
            params = np.append(params, 0.5 * np.log(cond))
        else:
            params *= np.sqrt(1.0 + (0.588 * s) ** 2 if fam.link == "logit" else 1.0 + s * s)
    else:
        params = np.asarray(start, dtype=float).copy()
    value, grad, H = marginal_loglik(params, X, y, fam, s, nodes, weights)
    for it in range(1, max_iter + 1):
        step = ascent_step(H, grad)
        scale = 1.0
        for _ in range(40):
            cand = params + scale * step
            cand_value = marginal_loglik(cand, X, y, fam, s, nodes, weights, need_derivs=False)
            if np.isfinite(cand_value) and cand_value >= value - 1e-12 * abs(value):
                break
            scale /= 2.0
        else:
            raise ConvergenceError("marginal likelihood line search failed")
        rel = np.max(np.abs(cand - params)) / (1.0 + np.max(np.abs(cand)))
        params = cand
        value, grad, H = marginal_loglik(params, X, y, fam, s, nodes, weights)
        # a stationary point only counts once the curvature shows it is a maximum
        if np.max(np.abs(grad)) <= tol and rel <= 1e-6 and np.linalg.eigvalsh(H)[-1] < 0:
            break
        if np.max(np.abs(params)) > 1e3:
            raise ConvergenceError("marginal likelihood coefficients diverging")
    else:
        raise ConvergenceError(f"marginal likelihood did not converge in {max_iter} iterations")
    coef = params[:X.shape[1]]
    dispersion = float(np.exp(2.0 * params[-1])) if gaussian else None
    inner = _unpack(coef, data, fam, interactions, dispersion, value)
    return MixedModelFit(inner, s, quadrature_nodes, True, it)
