"""NumPy implementations of the compiled kernels in ``_kernels.pyx``."""
import numpy as np
from scipy import special

_CHUNK = 1 << 21


def _psi(eta, link):
    if link == 0:
        return special.expit(eta)
    if link == 1:
        return special.ndtr(eta)
    return eta


def _benefit(e0, e1, benefit, link, delta, scale):
    if benefit == 0:
        return _psi(e0, link)
    if benefit == 3:
        return special.ndtr((e1 - e0 - delta) / scale)
    p0 = _psi(e0, link)
    p1 = _psi(e1, link)
    if benefit == 1:
        return 1.0 - p0 * (1.0 - p1)
    return p1 * (1.0 - p0)


def _rows(m, n, k=1):
    return max(1, _CHUNK // max(1, n * k))


def benefit_matrix(a, b, benefit, link, nodes, weights, delta, scale):
    """``v[j, i] = sum_k w_k benefit(a[j] + b[i] + u_k)`` for all pairs."""
    m, n = a.shape[0], b.shape[0]
    out = np.empty((m, n))
    step = _rows(m, n, len(nodes))
    two = a.shape[1] > 1
    for lo in range(0, m, step):
        hi = min(m, lo + step)
        e0 = a[lo:hi, 0, None] + b[None, :, 0]
        e1 = a[lo:hi, 1, None] + b[None, :, 1] if two else np.zeros_like(e0)
        acc = np.zeros_like(e0)
        for u, w in zip(nodes, weights):
            acc += w * _benefit(e0 + u, e1 + u, benefit, link, delta, scale)
        out[lo:hi] = acc
    return out


def nw_matrix(z_eval, z_obs, bandwidths, values):
    z_eval = np.asarray(z_eval, dtype=float)
    z_obs = np.asarray(z_obs, dtype=float)
    m, n, L = len(z_eval), len(z_obs), len(bandwidths)
    num = np.zeros((m, L))
    den = np.zeros((m, L))
    step = _rows(m, n)
    for lo in range(0, m, step):
        hi = min(m, lo + step)
        d = z_obs[None, :] - z_eval[lo:hi, None]
        for l, lam in enumerate(bandwidths):
            r = d * (1.0 / lam)
            w = np.exp(-0.5 * r * r)
            num[lo:hi, l] = np.sum(w * values[lo:hi], axis=1)
            den[lo:hi, l] = np.sum(w, axis=1)
    return num, den


def nw_benefit(z_eval, z_obs, bandwidths, a, b, benefit, link, nodes, weights, delta, scale):
    values = benefit_matrix(np.asarray(a), np.asarray(b), benefit, link,
                            np.asarray(nodes), np.asarray(weights), delta, scale)
    return nw_matrix(z_eval, z_obs, bandwidths, values)


def pair_sq_distances(x0, x1):
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    out = np.zeros((x0.shape[0], x1.shape[0]))
    for c in range(x0.shape[1]):
        d = x0[:, c, None] - x1[None, :, c]
        out += d * d
    return out.ravel()
