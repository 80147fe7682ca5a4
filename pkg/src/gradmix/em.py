"""Expectation-Maximisation for the full-covariance Gaussian mixture.

Serves as the baseline the gradient methods are compared against. It starts
from the same means and weights as the gradient fits, with identity
covariances, so both routes begin at the same log-likelihood.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .models import ModelSpec, params_from_gmm
from .optim import FitResult

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class EmConfig:
    max_iter: int = 1000
    tol: float = 1e-6
    ridge: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def gaussian_log_densities(X, means, covs):
    """``log N(x_i | mu_k, Sigma_k)`` as an ``(n, K)`` array."""
    n, p = X.shape
    K = means.shape[0]
    out = np.empty((n, K))
    for k in range(K):
        L = np.linalg.cholesky(covs[k])
        z = np.linalg.solve(L, (X - means[k]).T)
        out[:, k] = -0.5 * (p * LOG_2PI + 2.0 * np.sum(np.log(np.diag(L))) + np.sum(z * z, axis=0))
    return out


def e_step(X, weights, means, covs):
    """Responsibilities ``(n, K)`` and the mean log-likelihood."""
    joint = gaussian_log_densities(X, means, covs) + np.log(weights)
    per_point = logsumexp(joint, axis=1)
    gamma = np.exp(joint - per_point[:, None])
    return gamma, float(np.mean(per_point))


def weighted_scatter(X, gamma_k, mean_k):
    """Unregularised weighted scatter ``sum_i g_ik (x_i - mu)(x_i - mu)^T / N_k``."""
    d = X - mean_k
    return (gamma_k[:, None] * d).T @ d / gamma_k.sum()


def m_step(X, gamma, ridge):
    n, p = X.shape
    nk = gamma.sum(axis=0)
    weights = nk / n
    means = (gamma.T @ X) / nk[:, None]
    covs = np.stack([weighted_scatter(X, gamma[:, k], means[k]) for k in range(gamma.shape[1])])
    covs += ridge * np.eye(p)
    return weights, means, covs


def em_fit_gmm(X, K, means0, weights0=None, cfg=None):
    """Run EM from the given means/weights with identity starting covariances.

    The returned :class:`FitResult` carries the final parameters as a GMM
    ParamSet vector, so it is interchangeable with the gradient fits.
    """
    cfg = cfg or EmConfig()
    start = time.perf_counter()
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if K > n:
        raise ValueError(f"K={K} exceeds the number of observations n={n}")
    means = np.array(means0, dtype=float).reshape(K, p)
    weights = np.full(K, 1.0 / K) if weights0 is None else np.array(weights0, dtype=float)
    covs = np.repeat(np.eye(p)[None], K, axis=0)
    gamma, value = e_step(X, weights, means, covs)
    trajectory = [value]
    converged = False
    reseeds = 0
    for _ in range(cfg.max_iter):
        nk = gamma.sum(axis=0)
        empty = np.flatnonzero(nk < 1e-10)
        if empty.size:
            gamma = _reseed(X, gamma, weights, means, covs, empty)
            reseeds += empty.size
        weights, means, covs = m_step(X, gamma, cfg.ridge)
        gamma, value = e_step(X, weights, means, covs)
        trajectory.append(value)
        if abs(trajectory[-1] - trajectory[-2]) < cfg.tol:
            converged = True
            break
    spec = ModelSpec("GMM", K, p)
    theta = params_from_gmm(spec, weights, means, covs).theta
    wall_ms = (time.perf_counter() - start) * 1000.0
    info = {"method": "EM", "ridge": cfg.ridge, "reseeds": reseeds,
            "weights": weights, "means": means, "covariances": covs}
    return FitResult(theta, trajectory, len(trajectory) - 1, converged, wall_ms, False, info)


def _reseed(X, gamma, weights, means, covs, empty):
    """Move each empty component onto the worst-explained point."""
    joint = gaussian_log_densities(X, means, covs) + np.log(weights)
    fit = logsumexp(joint, axis=1)
    gamma = gamma.copy()
    for k in empty:
        i = int(np.argmin(fit))
        log.info("EM component %d emptied; re-seeding at observation %d", k, i)
        gamma[i, :] = 0.0
        gamma[i, k] = 1.0
        fit[i] = np.inf
    return gamma
