"""Mixture-model log-likelihoods over flat unconstrained parameter vectors.

Five families share one objective: the mean log-likelihood

    L(theta) = (1/n) sum_i logsumexp_k [log pi_k + log f_k(x_i)]

where ``f_k`` is Gaussian (GMM, MCLUST, PGMM, MFA) or multivariate
Student-t (TMM). Families differ only in how component covariances are built
from their unconstrained blocks, see :mod:`gradmix.reparam`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2

from . import reparam
from .autodiff import NumericDomainError, Tape, VarRef
from .reparam import ConfigurationError

log = logging.getLogger(__name__)

FAMILIES = ("GMM", "MCLUST", "PGMM", "MFA", "TMM")
DIAG_FLOOR = 1e-6
TMM_INIT_DOF = 30.0
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ModelSpec:
    """Model family, constraint and problem size.

    ``constraint`` is an MClust code (``EII``, ``VVV``, ...) for MCLUST or a
    PGMM family code (``CCC`` ... ``UUU``) for PGMM. ``q`` is the latent
    dimension for PGMM and MFA.
    """

    family: str
    K: int
    p: int
    constraint: str | None = None
    q: int | None = None

    def __post_init__(self):
        family = self.family.upper()
        object.__setattr__(self, "family", family)
        if family not in FAMILIES:
            raise ConfigurationError(f"unknown model family {self.family!r}")
        if self.K < 1:
            raise ConfigurationError("K must be >= 1")
        if self.p < 1:
            raise ConfigurationError("p must be >= 1")
        if family == "MCLUST":
            constraint = (self.constraint or "VVV").upper()
            if constraint not in reparam.MCLUST_CONSTRAINTS:
                raise ConfigurationError(f"unknown MClust constraint {self.constraint!r}")
            object.__setattr__(self, "constraint", constraint)
        elif family == "PGMM":
            constraint = (self.constraint or "UUU").upper()
            if constraint not in reparam.PGMM_FAMILIES:
                raise ConfigurationError(f"unknown PGMM family {self.constraint!r}")
            object.__setattr__(self, "constraint", constraint)
        elif self.constraint is not None:
            raise ConfigurationError(f"{family} takes no constraint")
        if family in ("PGMM", "MFA"):
            if self.q is None:
                raise ConfigurationError(f"{family} needs a latent dimension q")
            if not 1 <= self.q < self.p:
                raise ConfigurationError(f"q={self.q} must satisfy 1 <= q < p={self.p}")
        elif self.q is not None:
            raise ConfigurationError(f"{family} takes no latent dimension")

    def to_dict(self):
        return {"family": self.family, "K": self.K, "p": self.p,
                "constraint": self.constraint, "q": self.q}


@dataclass
class Dataset:
    X: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("data must be a non-empty n x p matrix")
        if not np.all(np.isfinite(X)):
            raise ValueError("data contains non-finite entries")
        self.X = X
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape != (X.shape[0],):
                raise ValueError("labels must have one entry per row")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


# parameter layout -------------------------------------------------------------


def param_layout(spec):
    """Ordered ``{name: shape}`` of the blocks of the flat parameter vector."""
    K, p = spec.K, spec.p
    layout = {"alpha": (K,), "mu": (K, p)}
    if spec.family in ("GMM", "TMM"):
        layout["chol"] = (K, p * (p + 1) // 2)
        if spec.family == "TMM":
            layout["log_dof"] = (K,)
    elif spec.family == "MCLUST":
        for name, shape in reparam.mclust_layout(spec.constraint, K, p).items():
            if shape[0] > 0 and shape[1] > 0:
                layout[name] = shape
    else:
        family = spec.constraint if spec.family == "PGMM" else "UUU"
        layout.update(reparam.pgmm_layout(family, K, p, spec.q))
    return layout


def layout_slices(spec):
    out, start = {}, 0
    for name, shape in param_layout(spec).items():
        size = int(np.prod(shape))
        out[name] = (slice(start, start + size), shape)
        start += size
    return out


def layout_size(spec):
    return sum(int(np.prod(s)) for s in param_layout(spec).values())


def covariance_param_count(spec):
    K, p = spec.K, spec.p
    if spec.family in ("GMM", "TMM"):
        return K * p * (p + 1) // 2
    if spec.family == "MCLUST":
        return sum(r * c for r, c in reparam.mclust_layout(spec.constraint, K, p).values())
    family = spec.constraint if spec.family == "PGMM" else "UUU"
    lam, omg, iso = family
    load = reparam.loading_free_count(p, spec.q)
    n_load = load if lam == "C" else K * load
    n_noise = (1 if omg == "C" else K) * (1 if iso == "C" else p)
    return n_load + n_noise


def param_count(spec):
    """Number of free parameters: weights, means, covariances (and TMM dofs)."""
    d = (spec.K - 1) + spec.K * spec.p + covariance_param_count(spec)
    if spec.family == "TMM":
        d += spec.K
    return d


@dataclass
class ParamSet:
    """Flat unconstrained vector plus the spec that gives it meaning."""

    spec: ModelSpec
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).copy()
        if self.theta.shape != (layout_size(self.spec),):
            raise ValueError(
                f"theta has length {self.theta.size}, layout needs {layout_size(self.spec)}"
            )

    def __getitem__(self, name):
        sl, shape = layout_slices(self.spec)[name]
        return self.theta[sl].reshape(shape)

    def named(self):
        return {name: self[name].copy() for name in param_layout(self.spec)}

    @classmethod
    def from_named(cls, spec, blocks):
        parts = []
        for name, shape in param_layout(spec).items():
            arr = np.asarray(blocks[name], dtype=float)
            if arr.shape != shape:
                raise ValueError(f"block {name!r} has shape {arr.shape}, expected {shape}")
            parts.append(arr.reshape(-1))
        return cls(spec, np.concatenate(parts))

    def constrained(self):
        return constrained_params(self.spec, self.theta)


@dataclass
class Assignment:
    responsibilities: np.ndarray
    labels: np.ndarray = field(init=False)

    def __post_init__(self):
        self.labels = np.argmax(self.responsibilities, axis=1)


# likelihood -------------------------------------------------------------------


def _blocks(spec, theta):
    out = {}
    for name, (sl, shape) in layout_slices(spec).items():
        out[name] = theta[sl].reshape(shape)
    return out


def _guarded_factor(chol, p):
    """Lower factor with diagonal ``|V_ii| + DIAG_FLOOR`` and its log-determinant."""
    tape = chol.tape
    V = reparam.tril_from_vector(chol, p)
    diag = tape.diagonal(V)
    floored = tape.apply("abs", diag) + DIAG_FLOOR
    if np.min(np.abs(diag.value)) < 10 * DIAG_FLOOR:
        log.debug("covariance diagonal floor active (min |V_ii| = %.3g)", np.min(np.abs(diag.value)))
    eye = np.eye(p)
    K = chol.shape[0]
    V = V + eye * (floored - diag).reshape((K, 1, p))
    logdet = 2.0 * tape.sum(tape.apply("log", floored), axis=-1)
    return V, logdet


def _covariance_structure(spec, blocks):
    """Return ``("factor", F, logdet)`` or ``("full", Sigma, None)``."""
    K, p = spec.K, spec.p
    if spec.family in ("GMM", "TMM"):
        V, logdet = _guarded_factor(blocks["chol"], p)
        return "factor", V, logdet
    if spec.family == "MCLUST":
        F, logdet = reparam.mclust_factor(
            blocks["volume"], blocks.get("shape"), blocks.get("orient"), spec.constraint, K, p
        )
        return "factor", F, logdet
    family = spec.constraint if spec.family == "PGMM" else "UUU"
    sigma = reparam.pgmm_cov(blocks["loadings"], blocks["noise"], family, K, p, spec.q)
    return "full", sigma, None


def _mahalanobis(kind, mat, logdet, diff):
    """Squared Mahalanobis distances (K, n) and log-determinants (K,)."""
    tape = diff.tape
    if kind == "factor":
        W = tape.solve(mat, diff)
        delta = tape.sum(W * W, axis=1)
    else:
        W = tape.solve(mat, diff)
        delta = tape.sum(diff * W, axis=1)
        logdet = tape.logabsdet(mat)
    return delta, logdet


def component_log_densities(spec, theta, X):
    """Per-component log densities, shape ``(K, n)``, on ``theta``'s tape."""
    tape = theta.tape
    blocks = _blocks(spec, theta)
    K, p = spec.K, spec.p
    n = X.shape[0]
    Xt = tape.const(np.ascontiguousarray(X.T)[None, :, :])  # (1, p, n)
    diff = Xt - blocks["mu"].reshape((K, p, 1))  # (K, p, n)
    kind, mat, logdet = _covariance_structure(spec, blocks)
    delta, logdet = _mahalanobis(kind, mat, logdet, diff)
    logdet = logdet.reshape((K, 1))
    if spec.family != "TMM":
        return -0.5 * (delta + logdet + p * LOG_2PI)
    nu = reparam.dof_from_log(blocks["log_dof"]).reshape((K, 1))
    half = 0.5 * (nu + p)
    lgamma = lambda v: tape.apply("lgamma", v)  # noqa: E731
    lognorm = (lgamma(half) - lgamma(0.5 * nu)
               - 0.5 * p * tape.apply("log", nu * math.pi) - 0.5 * logdet)
    return lognorm - half * tape.apply("log1p", delta / nu)


def joint_log_terms(spec, theta, X):
    """``log pi_k + log f_k(x_i)`` with shape ``(K, n)``."""
    blocks = _blocks(spec, theta)
    logw = reparam.log_weights_from_logits(blocks["alpha"]).reshape((spec.K, 1))
    return component_log_densities(spec, theta, X) + logw


def _check_dims(spec, theta_value, X):
    if X.shape[1] != spec.p:
        raise ValueError(f"data has dimension {X.shape[1]}, model expects p={spec.p}")
    if np.shape(theta_value) != (layout_size(spec),):
        raise ValueError("parameter vector does not match the model layout")


def loglik(spec, theta, data, tape=None):
    """Mean log-likelihood as a tape node.

    ``theta`` may be a VarRef (array-valued), a :class:`ParamSet` or a flat
    array; in the latter cases it is registered on ``tape`` (a new tape if
    none is given) as an input.
    """
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if isinstance(theta, ParamSet):
        theta = theta.theta
    if not isinstance(theta, VarRef):
        tape = tape or Tape()
        theta = tape.var(np.asarray(theta, dtype=float))
    _check_dims(spec, theta.value, X)
    try:
        terms = joint_log_terms(spec, theta, X)
        per_point = theta.tape.logsumexp(terms, axis=0)
        return theta.tape.sum(per_point) / X.shape[0]
    except NumericDomainError as exc:
        k = _diagnose_component(spec, theta.value, X)
        where = f"component {k}" if k is not None else "mixture"
        err = NumericDomainError(f"non-finite log-likelihood in {where}: {exc}")
        err.component = k
        raise err from exc


def _diagnose_component(spec, theta, X):
    try:
        params = constrained_params(spec, theta)
    except NumericDomainError:
        return None
    with np.errstate(all="ignore"):
        for k in range(spec.K):
            cov = params["covariances"][k]
            diff = X - params["means"][k]
            try:
                if not np.all(np.isfinite(cov)) or np.linalg.eigvalsh(cov).min() <= 0:
                    return k
                maha = np.sum(diff * np.linalg.solve(cov, diff.T).T, axis=1)
            except np.linalg.LinAlgError:
                return k
            if not np.all(np.isfinite(maha)):
                return k
    return None


def loglik_value(spec, theta, data):
    if isinstance(theta, ParamSet):
        theta = theta.theta
    return float(loglik(spec, np.asarray(theta, dtype=float), data).value)


def make_objective(spec, data):
    """Return ``f(theta) -> (mean loglik, gradient)`` for the optimisers."""
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)

    def objective(theta):
        tape = Tape()
        t = tape.var(np.asarray(theta, dtype=float))
        out = loglik(spec, t, X)
        res = tape.backward(out, [t])
        return res.value, res.grads[0]

    return objective


def make_value(spec, data):
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    return lambda theta: loglik_value(spec, theta, X)


def responsibilities(spec, theta, data):
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if isinstance(theta, ParamSet):
        theta = theta.theta
    tape = Tape()
    t = tape.const(np.asarray(theta, dtype=float))
    _check_dims(spec, t.value, X)
    terms = np.asarray(joint_log_terms(spec, t, X).value)  # (K, n)
    log_gamma = terms - np.logaddexp.reduce(terms, axis=0, keepdims=True)
    return Assignment(np.exp(log_gamma).T)


def constrained_params(spec, theta):
    """Weights, means, covariances (and family extras) as plain arrays."""
    if isinstance(theta, ParamSet):
        theta = theta.theta
    tape = Tape()
    t = tape.const(np.asarray(theta, dtype=float))
    blocks = _blocks(spec, t)
    K, p = spec.K, spec.p
    out = {
        "weights": np.asarray(reparam.weights_from_logits(blocks["alpha"]).value),
        "means": np.asarray(blocks["mu"].value).copy(),
    }
    kind, mat, _ = _covariance_structure(spec, blocks)
    if kind == "factor":
        F = np.asarray(mat.value)
        out["covariances"] = F @ np.swapaxes(F, -1, -2)
    else:
        out["covariances"] = np.asarray(mat.value)
    if spec.family == "TMM":
        out["dof"] = np.exp(np.asarray(blocks["log_dof"].value))
    if spec.family in ("PGMM", "MFA"):
        lam = reparam.loadings_from_vector(np.asarray(blocks["loadings"].value), p, spec.q)
        if lam.shape[0] == 1:
            lam = np.repeat(lam, K, axis=0)
        noise = np.exp(np.asarray(blocks["noise"].value)) * np.ones((K, p))
        out["loadings"] = lam
        out["noise"] = noise
    return out


# initialisation -----------------------------------------------------------------


def kmeans_means(X, K, seed):
    """Lloyd's k-means with k-means++ seeding; deterministic for a seed."""
    rng = np.random.default_rng(seed)
    centroids, _ = kmeans2(X, K, minit="++", seed=rng, iter=100)
    return np.asarray(centroids, dtype=float)


def init_params(spec, data, strategy="kmeans", seed=0):
    """Initial ParamSet: data-driven means, uniform weights, identity covariances.

    PGMM/MFA loadings start at ``0.1`` on their leading diagonal rather than
    zero, since ``Lambda = 0`` is a stationary point of the likelihood.
    """
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    n = X.shape[0]
    K, p = spec.K, spec.p
    if K > n:
        raise ValueError(f"K={K} exceeds the number of observations n={n}")
    if X.shape[1] != p:
        raise ValueError(f"data has dimension {X.shape[1]}, model expects p={p}")
    if strategy == "kmeans":
        means = kmeans_means(X, K, seed)
    elif strategy == "random":
        rng = np.random.default_rng(seed)
        means = X[rng.choice(n, size=K, replace=False)].copy()
    else:
        raise ValueError(f"unknown initialisation strategy {strategy!r}")
    return default_params(spec, means)


def default_params(spec, means):
    K, p = spec.K, spec.p
    layout = param_layout(spec)
    blocks = {name: np.zeros(shape) for name, shape in layout.items()}
    blocks["mu"] = np.asarray(means, dtype=float).reshape(K, p)
    if "chol" in blocks:
        rows, cols = np.tril_indices(p)
        blocks["chol"][:, rows == cols] = 1.0
    if "log_dof" in blocks:
        blocks["log_dof"][:] = math.log(TMM_INIT_DOF)
    if "loadings" in blocks:
        rows, cols = reparam.loading_indices(p, spec.q)
        blocks["loadings"][:, rows == cols] = 0.1
    return ParamSet.from_named(spec, blocks)


def params_from_gmm(spec, weights, means, covariances):
    """Full-covariance GMM ParamSet from constrained-space values."""
    if spec.family != "GMM":
        raise ConfigurationError("params_from_gmm builds GMM parameter sets only")
    rows, cols = np.tril_indices(spec.p)
    chol = np.linalg.cholesky(np.asarray(covariances, dtype=float))
    # the density adds DIAG_FLOOR back onto the diagonal
    chol = chol - DIAG_FLOOR * np.eye(spec.p)
    return ParamSet.from_named(spec, {
        "alpha": np.log(np.asarray(weights, dtype=float)),
        "mu": np.asarray(means, dtype=float),
        "chol": chol[:, rows, cols],
    })
