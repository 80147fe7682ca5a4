"""Gradient-ascent maximisers over flat parameter vectors.

All methods maximise: GD and Adam step along the gradient with a fixed
learning rate, Newton-CG solves the negated Hessian system with conjugate
gradients on Hessian-vector products and backtracks to guarantee
non-decrease. Every run stops when ``|L_t - L_{t-1}| < tol`` or after
``max_iter`` updates.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

METHODS = ("GD", "ADAM", "NEWTON_CG")


@dataclass
class OptConfig:
    method: str = "ADAM"
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iter: int = 1000
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        self.method = self.method.upper().replace("-", "_")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")

    def to_dict(self):
        return asdict(self)


@dataclass
class FitResult:
    theta: np.ndarray
    trajectory: list
    iters: int
    converged: bool
    wall_ms: float
    diverged: bool = False
    info: dict = field(default_factory=dict)

    @property
    def final_loglik(self):
        return self.trajectory[-1]


def hessian_vector_product(objective: Callable, theta, v):
    """Central difference of gradients along ``v``.

    ``objective(theta)`` must return ``(value, gradient)``.
    """
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.shape != theta.shape:
        raise ValueError("v must have the same shape as theta")
    vnorm = float(np.linalg.norm(v))
    if vnorm == 0.0:
        return np.zeros_like(theta)
    eps = math.sqrt(np.finfo(float).eps) * (1.0 + float(np.linalg.norm(theta))) / max(vnorm, 1e-12)
    _, gp = objective(theta + eps * v)
    _, gm = objective(theta - eps * v)
    if not (np.all(np.isfinite(gp)) and np.all(np.isfinite(gm))):
        raise FloatingPointError("non-finite gradient in Hessian-vector product")
    return (gp - gm) / (2.0 * eps)


def _safe_eval(objective, theta):
    try:
        value, grad = objective(theta)
    except (ArithmeticError, np.linalg.LinAlgError, FloatingPointError):
        return None, None
    if not (math.isfinite(value) and np.all(np.isfinite(grad))):
        return None, None
    return value, grad


def _newton_direction(objective, theta, grad):
    """Approximately solve ``(-H) d = g`` by truncated CG.

    Returns the gradient itself if the first search direction already has
    non-positive curvature.
    """
    n = theta.size
    gnorm = float(np.linalg.norm(grad))
    forcing = 0.5 * min(1.0, math.sqrt(gnorm)) * gnorm
    d = np.zeros(n)
    r = grad.copy()
    s = r.copy()
    rr = float(r @ r)
    for i in range(n):
        Hs = -hessian_vector_product(objective, theta, s)
        curv = float(s @ Hs)
        if curv <= 0:
            return grad.copy() if i == 0 else d
        step = rr / curv
        d = d + step * s
        r = r - step * Hs
        rr_new = float(r @ r)
        if math.sqrt(rr_new) < forcing:
            break
        s = r + (rr_new / rr) * s
        rr = rr_new
    return d


def _backtrack(objective, theta, value, direction, max_halvings=20):
    t = 1.0
    for _ in range(max_halvings + 1):
        cand = theta + t * direction
        v, g = _safe_eval(objective, cand)
        if v is not None and v >= value:
            return cand, v, g
        t *= 0.5
    return None, None, None


def fit(objective: Callable, theta0, cfg: OptConfig) -> FitResult:
    """Maximise ``objective`` (returning ``(value, gradient)``) from ``theta0``."""
    start = time.perf_counter()
    theta = np.array(theta0, dtype=float)
    value, grad = _safe_eval(objective, theta)
    if value is None:
        raise FloatingPointError("objective is not finite at the starting point")
    trajectory = [value]
    converged = diverged = False
    m = np.zeros_like(theta)
    v2 = np.zeros_like(theta)
    fallbacks = 0
    it = 0
    while it < cfg.max_iter:
        it += 1
        if cfg.method == "GD":
            cand = theta + cfg.lr * grad
        elif cfg.method == "ADAM":
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
            v2 = cfg.beta2 * v2 + (1.0 - cfg.beta2) * grad * grad
            m_hat = m / (1.0 - cfg.beta1**it)
            v_hat = v2 / (1.0 - cfg.beta2**it)
            cand = theta + cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        else:
            try:
                direction = _newton_direction(objective, theta, grad)
            except FloatingPointError:
                direction = grad.copy()
            if float(direction @ grad) <= 0:
                direction = grad.copy()
                fallbacks += 1
            cand, new_value, new_grad = _backtrack(objective, theta, value, direction)
            if cand is None:
                cand, new_value, new_grad = _backtrack(objective, theta, value, grad.copy())
                fallbacks += 1
            if cand is None:
                # no non-decreasing step exists along either direction
                trajectory.append(value)
                converged = True
                break
        if cfg.method != "NEWTON_CG":
            new_value, new_grad = _safe_eval(objective, cand)
            if new_value is None:
                diverged = True
                break
        theta, value, grad = cand, new_value, new_grad
        trajectory.append(value)
        if abs(trajectory[-1] - trajectory[-2]) < cfg.tol:
            converged = True
            break
    wall_ms = (time.perf_counter() - start) * 1000.0
    info = {"method": cfg.method}
    if cfg.method == "ADAM":
        info.update(beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    if cfg.method == "NEWTON_CG":
        info["gradient_fallbacks"] = fallbacks
    return FitResult(theta, trajectory, len(trajectory) - 1, converged, wall_ms, diverged, info)
