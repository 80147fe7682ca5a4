"""Seeded synthetic mixtures and the optimiser benchmark sweep."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np

from . import em as em_mod
from . import metrics, models, optim

log = logging.getLogger(__name__)

COVARIANCE_MODES = ("FULL", "EEI", "VVI")
DIRICHLET_CONCENTRATION = 0.3
MIN_COMPONENT_MASS = 0.05
BENCH_METHODS = ("GD", "ADAM", "NEWTON_CG", "EM")


@dataclass(frozen=True)
class SimSpec:
    n: int
    p: int
    K: int
    scale: float = 5.0
    seed: int = 0
    covariance_mode: str = "FULL"
    imbalance: bool = False
    noise_features: int = 0

    def __post_init__(self):
        mode = self.covariance_mode.upper()
        object.__setattr__(self, "covariance_mode", mode)
        if mode not in COVARIANCE_MODES:
            raise ValueError(f"unknown covariance mode {self.covariance_mode!r}")
        if self.K < 1 or self.n < self.K:
            raise ValueError("need n >= K >= 1")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.noise_features < 0:
            raise ValueError("noise_features must be >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass
class MixtureTruth:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def to_params(self):
        """Generating parameters as a full-covariance GMM ParamSet."""
        K, p = self.means.shape
        return models.params_from_gmm(models.ModelSpec("GMM", K, p), self.weights,
                                      self.means, self.covariances)

    def to_dict(self):
        return {"weights": self.weights.tolist(), "means": self.means.tolist(),
                "covariances": self.covariances.tolist()}


def stream(*key):
    """Independent PCG64 stream keyed by a tuple of non-negative integers."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in key])))


def _draw_weights(rng, K, imbalance):
    if not imbalance or K == 1:
        return np.full(K, 1.0 / K)
    while True:
        w = rng.dirichlet(np.full(K, DIRICHLET_CONCENTRATION))
        if w.min() >= MIN_COMPONENT_MASS:
            return w


def _draw_covariances(rng, K, p, mode):
    # Gram form of randn(K, p, p) / sqrt(p), so every draw is PSD
    if mode == "FULL":
        G = rng.standard_normal((K, p, p)) / np.sqrt(p)
        return G @ np.swapaxes(G, -1, -2)
    if mode == "EEI":
        G = rng.standard_normal((p, p)) / np.sqrt(p)
        diag = np.sum(G * G, axis=1)
        return np.repeat(np.diag(diag)[None], K, axis=0)
    G = rng.standard_normal((K, p, p)) / np.sqrt(p)
    diag = np.sum(G * G, axis=2)
    return np.stack([np.diag(d) for d in diag])


def sample_mixture(spec: SimSpec):
    """Draw a labelled dataset and its generating parameters.

    Returns ``(Dataset, MixtureTruth)``. Noise features, if any, are appended
    after the ``p`` informative columns; the truth covers the informative
    columns only.
    """
    rng = stream(spec.seed, spec.n, spec.p, spec.K)
    K, p = spec.K, spec.p
    means = rng.random((K, p)) * spec.scale
    covs = _draw_covariances(rng, K, p, spec.covariance_mode)
    weights = _draw_weights(rng, K, spec.imbalance)
    labels = rng.choice(K, size=spec.n, p=weights)
    X = np.empty((spec.n, p))
    z = rng.standard_normal((spec.n, p))
    for k in range(K):
        idx = labels == k
        # eigen square root handles singular draws that Cholesky would reject
        vals, vecs = np.linalg.eigh(covs[k])
        root = vecs * np.sqrt(np.clip(vals, 0.0, None))
        X[idx] = means[k] + z[idx] @ root.T
    if spec.noise_features:
        X = np.hstack([X, rng.standard_normal((spec.n, spec.noise_features))])
    return models.Dataset(X, labels), MixtureTruth(weights, means, covs)


# benchmark -------------------------------------------------------------------


@dataclass
class BenchRecord:
    n: int
    p: int
    K: int
    seed: int
    method: str
    loglik: float
    ari: float
    iters: int
    wall_ms: float
    converged: bool
    error: str = ""

    FIELDS = ("n", "p", "K", "seed", "method", "loglik", "ari", "iters", "wall_ms", "converged")

    def key(self):
        return (self.n, self.p, self.K, self.seed, BENCH_METHODS.index(self.method))

    def row(self):
        return [getattr(self, f) for f in self.FIELDS]


@dataclass
class BenchConfig:
    scale: float = 5.0
    gd_lr: float = 3e-4
    adam_lr: float = 3e-4
    beta1: float = 0.9
    max_iter: int = 1000
    tol: float = 1e-6
    ridge: float = 1e-6
    init: str = "kmeans"
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def fit_one(X, K, theta0, method, cfg: BenchConfig):
    """Fit a full-covariance GMM with one method from a shared start."""
    p = X.shape[1]
    spec = models.ModelSpec("GMM", K, p)
    if method == "EM":
        start = models.ParamSet(spec, theta0)
        return em_mod.em_fit_gmm(X, K, start["mu"],
                                 cfg=em_mod.EmConfig(cfg.max_iter, cfg.tol, cfg.ridge))
    lr = cfg.gd_lr if method == "GD" else cfg.adam_lr
    ocfg = optim.OptConfig(method=method, lr=lr, beta1=cfg.beta1, max_iter=cfg.max_iter, tol=cfg.tol)
    return optim.fit(models.make_objective(spec, X), theta0, ocfg)


def run_cell(cell):
    """Simulate one (n, p, K, seed) dataset and fit every requested method."""
    n, p, K, seed, methods, cfg = cell
    data, _ = sample_mixture(SimSpec(n, p, K, scale=cfg.scale, seed=seed))
    spec = models.ModelSpec("GMM", K, p)
    init_seed = int(stream(seed, n, p, K, 1).integers(2**31))
    theta0 = models.init_params(spec, data, cfg.init, init_seed).theta
    records = []
    for method in methods:
        try:
            res = fit_one(data.X, K, theta0, method, cfg)
            labels = models.responsibilities(spec, res.theta, data).labels
            records.append(BenchRecord(
                n, p, K, seed, method, res.final_loglik * n, metrics.ari(labels, data.labels),
                res.iters, round(res.wall_ms, 3), res.converged and not res.diverged,
                "diverged" if res.diverged else "",
            ))
        except (ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
            log.warning("fit failed for cell %s method %s: %s", (n, p, K, seed), method, exc)
            records.append(BenchRecord(n, p, K, seed, method, float("nan"), float("nan"),
                                       0, 0.0, False, str(exc)))
    return records


def _limit_threads():
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")


def benchmark_sweep(ns, ps, Ks, seeds, methods=BENCH_METHODS, cfg=None, jobs=1):
    """Run the grid and return records sorted by (n, p, K, seed, method)."""
    cfg = cfg or BenchConfig()
    methods = [m.upper().replace("-", "_") for m in methods]
    for m in methods:
        if m not in BENCH_METHODS:
            raise ValueError(f"unknown method {m!r}")
    seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    cells = [(n, p, K, s, tuple(methods), cfg) for n, p, K, s in product(ns, ps, Ks, seeds)]
    if not cells or not methods:
        raise ValueError("benchmark grid is empty")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_limit_threads) as pool:
            chunks = list(pool.map(run_cell, cells))
    else:
        chunks = [run_cell(c) for c in cells]
    records = [r for chunk in chunks for r in chunk]
    return sorted(records, key=BenchRecord.key)


def summarize(records):
    """Quartile summary per (p, K, n, method)."""
    groups = {}
    for r in records:
        groups.setdefault((r.p, r.K, r.n, r.method), []).append(r)
    rows = []
    for (p, K, n, method), rs in sorted(groups.items(),
                                        key=lambda kv: (*kv[0][:3], BENCH_METHODS.index(kv[0][3]))):
        ll = np.array([r.loglik for r in rs if np.isfinite(r.loglik)])
        ar = np.array([r.ari for r in rs if np.isfinite(r.ari)])
        q = np.percentile(ll, [0, 25, 50, 75, 100]) if ll.size else [float("nan")] * 5
        rows.append({
            "p": p, "K": K, "n": n, "method": method, "count": len(rs),
            "loglik_min": q[0], "loglik_q1": q[1], "loglik_median": q[2],
            "loglik_q3": q[3], "loglik_max": q[4],
            "ari_median": float(np.median(ar)) if ar.size else float("nan"),
            "converged": sum(r.converged for r in rs),
        })
    return rows
