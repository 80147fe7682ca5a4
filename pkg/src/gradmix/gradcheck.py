"""Random composite expressions for checking reverse mode against oracles.

Builders work on any operand type that supports arithmetic and the
elementary functions in :mod:`gradmix.autodiff` (VarRef, Dual or float).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


def rel_err(a, b):
    """``max|a - b| / max|b|`` (norm-relative error)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.max(np.abs(b))
    return float(np.max(np.abs(a - b)) / scale) if scale > 0 else float(np.max(np.abs(a)))


def _positive(e):
    # maps any real into [1, inf) so log/sqrt/div/lgamma stay in domain
    return lambda xs: 1.0 + e(xs) * e(xs)


def random_expression(rng, n_inputs, depth):
    """Random expression tree of at most ``depth`` levels over ``n_inputs`` inputs."""
    if depth <= 1 or rng.random() < 0.15:
        i = int(rng.integers(n_inputs))
        if rng.random() < 0.5:
            return lambda xs: xs[i]
        c = float(rng.uniform(-1.5, 1.5))
        return lambda xs: xs[i] * c + 0.5
    kind = rng.choice(["add", "sub", "mul", "div", "sin", "cos", "exp", "log", "sqrt",
                       "lgamma", "pow"])
    a = random_expression(rng, n_inputs, depth - 1)
    if kind in ("add", "sub", "mul", "div"):
        b = random_expression(rng, n_inputs, depth - 1)
        if kind == "add":
            return lambda xs: a(xs) + b(xs)
        if kind == "sub":
            return lambda xs: a(xs) - b(xs)
        if kind == "mul":
            return lambda xs: a(xs) * b(xs)
        pb = _positive(b)
        return lambda xs: a(xs) / pb(xs)
    if kind == "sin":
        return lambda xs: ad.sin(a(xs))
    if kind == "cos":
        return lambda xs: ad.cos(a(xs))
    if kind == "exp":
        # bounded argument keeps nested exponentials finite
        return lambda xs: ad.exp(ad.sin(a(xs)))
    pa = _positive(a)
    if kind == "log":
        return lambda xs: ad.log(pa(xs))
    if kind == "sqrt":
        return lambda xs: ad.sqrt(pa(xs))
    if kind == "lgamma":
        return lambda xs: ad.lgamma(pa(xs))
    power = float(rng.uniform(-1.5, 1.5))
    return lambda xs: pa(xs) ** power


def check_expressions(count=50, n_inputs=3, max_depth=8, h=1e-5, seed=0):
    """Reverse mode vs central differences on random expressions.

    Returns the list of per-expression norm-relative errors.
    """
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(count):
        f = random_expression(rng, n_inputs, int(rng.integers(2, max_depth + 1)))
        x = rng.uniform(-2.0, 2.0, size=n_inputs)
        _, g = ad.value_and_grad(f, list(x))
        fd = ad.finite_diff_grad(lambda v: f(list(v)), x, h)
        errors.append(rel_err(g, fd))
    return errors
