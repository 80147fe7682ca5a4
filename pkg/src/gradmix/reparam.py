"""Maps from unconstrained coordinates onto constrained parameter sets.

Every function here accepts either tape handles (:class:`VarRef`) or plain
numpy arrays. With arrays the map is evaluated on a scratch tape and plain
values are returned, so the same code path serves optimisation and export.
"""

from __future__ import annotations

import functools
import warnings

import numpy as np

from .autodiff import Tape, VarRef

__all__ = [
    "MCLUST_CONSTRAINTS",
    "PGMM_FAMILIES",
    "ConfigurationError",
    "NearSingularWarning",
    "weights_from_logits",
    "log_weights_from_logits",
    "cov_from_factor",
    "tril_from_vector",
    "cayley_orthogonal",
    "skew_from_vector",
    "dof_from_log",
    "mclust_cov",
    "mclust_factor",
    "mclust_layout",
    "pgmm_cov",
    "pgmm_layout",
    "loadings_from_vector",
    "loading_free_count",
]

MCLUST_CONSTRAINTS = ("EII", "VII", "EEI", "VVI", "EEE", "VVV")
PGMM_FAMILIES = ("CCC", "CCU", "CUC", "CUU", "UCC", "UCU", "UUC", "UUU")


class ConfigurationError(ValueError):
    pass


class NearSingularWarning(RuntimeWarning):
    pass


def _lifted(n_arrays=1):
    """Run the wrapped map on a scratch tape when called with plain arrays.

    The first ``n_arrays`` positional arguments are the array operands.
    """

    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            arrays = args[:n_arrays]
            if any(isinstance(a, VarRef) for a in arrays):
                return fn(*args, **kwargs)
            tape = Tape()
            lifted = [None if a is None else tape.const(a) for a in arrays]
            return _unwrap(fn(*lifted, *args[n_arrays:], **kwargs))

        return wrapper

    return deco


def _unwrap(out):
    if isinstance(out, VarRef):
        return out.value
    if isinstance(out, tuple):
        return tuple(_unwrap(o) for o in out)
    if isinstance(out, list):
        return [_unwrap(o) for o in out]
    return out


def _lse(a, axis=-1):
    return a.tape.logsumexp(a, axis=axis)


@_lifted()
def log_weights_from_logits(alpha):
    """``log pi_k = alpha_k - logsumexp(alpha)``."""
    lse = _lse(alpha, axis=-1)
    if alpha.ndim > 1:
        lse = lse.reshape(lse.shape + (1,))
    return alpha - lse


@_lifted()
def weights_from_logits(alpha):
    return alpha.tape.apply("exp", log_weights_from_logits(alpha))


def tril_indices(p):
    return np.tril_indices(p)


@_lifted()
def tril_from_vector(vec, p):
    """Lower-triangular ``p x p`` matrices from their row-major packed entries.

    ``vec`` has shape ``(..., p(p+1)/2)``.
    """
    rows, cols = np.tril_indices(p)
    lead = vec.shape[:-1]
    if lead:
        key = (Ellipsis, rows, cols)
    else:
        key = (rows, cols)
    return vec.tape.scatter(vec, lead + (p, p), key)


@_lifted()
def cov_from_factor(V):
    """``Sigma = V V^T`` and ``log det Sigma = 2 sum log |V_ii|`` (batched)."""
    tape = V.tape
    sigma = tape.matmul(V, tape.transpose(V))
    diag = tape.diagonal(V)
    logdet = None
    if np.any(np.abs(diag.value) < 1e-10):
        warnings.warn("covariance factor has a near-zero diagonal", NearSingularWarning, stacklevel=3)
    if np.all(diag.value != 0):
        logdet = 2.0 * tape.sum(tape.apply("log", tape.apply("abs", diag)), axis=-1)
    return sigma, logdet


@_lifted()
def skew_from_vector(vec, p):
    """Skew-symmetric matrix with the packed strict upper triangle ``vec``."""
    rows, cols = np.triu_indices(p, k=1)
    lead = vec.shape[:-1]
    key = (Ellipsis, rows, cols) if lead else (rows, cols)
    upper = vec.tape.scatter(vec, lead + (p, p), key)
    return upper - vec.tape.transpose(upper)


@_lifted()
def cayley_orthogonal(A, skew=False):
    """Cayley transform ``O = (I + Z)^{-1} (I - Z)`` with ``Z = (A - A^T)/2``.

    With ``skew=True`` the argument is taken to be ``Z`` itself.
    """
    tape = A.tape
    Z = A if skew else 0.5 * (A - tape.transpose(A))
    eye = np.eye(A.shape[-1])
    return tape.solve(eye + Z, eye - Z)


@_lifted()
def dof_from_log(nu_log):
    return nu_log.tape.apply("exp", nu_log)


# MClust ---------------------------------------------------------------------


def _check_mclust(constraint):
    if constraint not in MCLUST_CONSTRAINTS:
        raise ConfigurationError(
            f"unknown MClust constraint {constraint!r}; expected one of {MCLUST_CONSTRAINTS}"
        )


def mclust_layout(constraint, K, p):
    """Shapes of the (volume, shape, orientation) blocks for a constraint.

    Volume is one log-scale per group, shape is ``p - 1`` free log-values
    (the last is minus their sum, giving unit geometric mean) and
    orientation is the packed strict upper triangle of a skew matrix.
    Letter ``E`` gives a single shared block, ``V`` one per component and
    ``I`` none.
    """
    _check_mclust(constraint)
    vol, shp, ori = constraint

    def rows(letter):
        return {"E": 1, "V": K, "I": 0}[letter]

    return {
        "volume": (rows(vol), 1),
        "shape": (rows(shp) if p > 1 else 0, p - 1),
        "orient": (rows(ori) if p > 1 else 0, p * (p - 1) // 2),
    }


def _expand(block, K):
    # broadcast a shared (1, ...) block across the K components
    if block.shape[0] == K:
        return block
    return block.tape.concatenate([block] * K, axis=0)


@_lifted(3)
def mclust_factor(volume, shape, orient, constraint, K, p):
    """Per-component factor ``F_k = sqrt(lambda_k) D_k A_k^{1/2}``.

    Returns ``(F, logdet)`` with ``Sigma_k = F_k F_k^T``. Because the shape
    has unit geometric mean, ``log det Sigma_k = p log lambda_k``.
    """
    _check_mclust(constraint)
    tape = volume.tape
    log_vol = _expand(volume, K)  # (K, 1)
    if shape is not None and shape.shape[0] > 0:
        s = _expand(shape, K)  # (K, p-1)
        last = -tape.sum(s, axis=-1, keepdims=True)
        log_shape = tape.concatenate([s, last], axis=-1)  # (K, p)
        log_scale = log_shape + log_vol
    else:
        log_scale = log_vol + tape.const(np.zeros((K, p)))
    scale = tape.apply("exp", 0.5 * log_scale)  # (K, p) square roots of eigenvalues
    logdet = p * log_vol.reshape((K,))
    if orient is not None and orient.shape[0] > 0:
        Z = skew_from_vector(_expand(orient, K), p)
        D = cayley_orthogonal(Z, skew=True)  # (K, p, p)
        F = D * scale.reshape((K, 1, p))
    else:
        eye = tape.const(np.eye(p))
        F = eye * scale.reshape((K, 1, p))
    return F, logdet


@_lifted(3)
def mclust_cov(volume, shape, orient, constraint, K, p):
    """Component covariances ``lambda_k D_k A_k D_k^T`` for an MClust constraint."""
    F, _ = mclust_factor(volume, shape, orient, constraint, K, p)
    return F.tape.matmul(F, F.tape.transpose(F))


# PGMM -----------------------------------------------------------------------


def _check_pgmm(family, p, q):
    if family not in PGMM_FAMILIES:
        raise ConfigurationError(f"unknown PGMM family {family!r}; expected one of {PGMM_FAMILIES}")
    if not 1 <= q < p:
        raise ConfigurationError(f"latent dimension q={q} must satisfy 1 <= q < p={p}")


def loading_free_count(p, q):
    """Free entries of a ``p x q`` loading matrix modulo rotation."""
    return p * q - q * (q - 1) // 2


def loading_indices(p, q):
    """Positions of the free entries: lower-trapezoidal (``i >= j``)."""
    rows, cols = np.tril_indices(p, k=0, m=q)
    return rows, cols


def pgmm_layout(family, K, p, q):
    """Shapes of the (loadings, noise) blocks for a PGMM family.

    First letter ties the loadings across components (C) or not (U);
    second ties the noise; third makes the noise isotropic (C) or a full
    diagonal (U).
    """
    _check_pgmm(family, p, q)
    lam, omg, iso = family
    return {
        "loadings": (1 if lam == "C" else K, loading_free_count(p, q)),
        "noise": (1 if omg == "C" else K, 1 if iso == "C" else p),
    }


@_lifted()
def loadings_from_vector(vec, p, q):
    rows, cols = loading_indices(p, q)
    lead = vec.shape[:-1]
    key = (Ellipsis, rows, cols) if lead else (rows, cols)
    return vec.tape.scatter(vec, lead + (p, q), key)


@_lifted(2)
def pgmm_cov(loadings, noise, family, K, p, q, log_noise=True):
    """``Sigma_k = Lambda_k Lambda_k^T + Omega_k`` for a PGMM family.

    ``loadings`` has shape ``(1 or K, pq - q(q-1)/2)`` and ``noise`` shape
    ``(1 or K, 1 or p)``. The noise block holds log-variances unless
    ``log_noise`` is false.
    """
    _check_pgmm(family, p, q)
    tape = loadings.tape
    Lam = loadings_from_vector(_expand(loadings, K), p, q)  # (K, p, q)
    low_rank = tape.matmul(Lam, tape.transpose(Lam))
    omega = tape.apply("exp", noise) if log_noise else noise
    omega = _expand(omega, K)  # (K, 1 or p)
    omega = omega + tape.const(np.zeros((K, p)))  # isotropic -> p copies
    eye = tape.const(np.eye(p))
    return low_rank + eye * omega.reshape((K, 1, p))
