"""Model-selection criteria and partition agreement.

AIC and BIC use the penalty-positive convention, lower is better:
``aic = 2d - 2 log L`` and ``bic = d log n - 2 log L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class EvalReport:
    total_loglik: float
    aic: float
    bic: float
    n: int
    d: int
    ari: float | None = None

    def to_dict(self):
        return {"total_loglik": self.total_loglik, "aic": self.aic, "bic": self.bic,
                "ari": self.ari, "n": self.n, "d": self.d}


def aic(total_loglik, d):
    return 2.0 * d - 2.0 * total_loglik


def bic(total_loglik, d, n):
    if n < 1:
        raise ValueError("n must be >= 1")
    return d * math.log(n) - 2.0 * total_loglik


def _comb2(x):
    return x * (x - 1) // 2


def ari(labels_a, labels_b):
    """Adjusted Rand index from exact integer pair counts."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label vectors must be 1-D and of equal length")
    n = a.size
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max(initial=-1) + 1, ib.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    index = sum(_comb2(int(c)) for c in table.ravel())
    sum_a = sum(_comb2(int(c)) for c in table.sum(axis=1))
    sum_b = sum(_comb2(int(c)) for c in table.sum(axis=0))
    total = _comb2(n)
    if total == 0:
        return 1.0
    # ARI = (index - expected) / (max - expected), scaled by total to stay integral
    num = index * total - sum_a * sum_b
    den = (sum_a + sum_b) * total - 2 * sum_a * sum_b
    if den == 0:
        # both partitions trivial (all-in-one or all-singletons) and identical
        return 1.0
    return 2.0 * num / den


def evaluate(total_loglik, d, n, labels=None, true_labels=None):
    score = None
    if labels is not None and true_labels is not None:
        score = ari(labels, true_labels)
    return EvalReport(total_loglik, aic(total_loglik, d), bic(total_loglik, d, n), n, d, score)
