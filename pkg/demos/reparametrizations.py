"""Unconstrained coordinates for constrained parameters.

Every mixture parameter lives in some constrained set: weights on the simplex,
covariances in the positive definite cone, orientations in the orthogonal
group, degrees of freedom on the positive half-line. Each map below turns an
arbitrary real vector into a valid value, so plain gradient ascent never
leaves the feasible set.
"""

import numpy as np

from gradmix import reparam

rng = np.random.default_rng(0)

alpha = rng.normal(scale=3, size=4)
w = reparam.weights_from_logits(alpha)
print("logits ", np.round(alpha, 3))
print("weights", np.round(w, 4), "sum", w.sum())
print("shifting the logits by 100 changes nothing:",
      np.allclose(reparam.weights_from_logits(alpha + 100), w))

V = reparam.tril_from_vector(rng.normal(size=6), 3)
sigma, logdet = reparam.cov_from_factor(V)
print("\nV V^T eigenvalues", np.round(np.linalg.eigvalsh(sigma), 4), " log det", round(float(logdet), 4))

A = rng.normal(size=(3, 3))
O = reparam.cayley_orthogonal(A)
print("\nCayley: |O^T O - I| =", np.abs(O.T @ O - np.eye(3)).max(), " det", round(np.linalg.det(O), 12))

print("\nnu = exp(nu'):", [round(float(reparam.dof_from_log(v)), 3) for v in (-2.0, 0.0, 3.4)])

# MClust: lambda D A D^T with tied or free volume, shape and orientation
K, p = 3, 3
for code in reparam.MCLUST_CONSTRAINTS:
    lay = reparam.mclust_layout(code, K, p)
    blocks = [rng.normal(scale=0.5, size=lay[b]) if lay[b][0] else None
              for b in ("volume", "shape", "orient")]
    covs = reparam.mclust_cov(*blocks, code, K, p)
    free = sum(r * c for r, c in lay.values())
    same = np.allclose(covs[0], covs[1])
    print(f"{code}: {free:>2} covariance parameters, components equal={same}, "
          f"diagonal={np.allclose(covs[0], np.diag(np.diag(covs[0])))}")

# PGMM: Lambda Lambda^T + Omega, eight ways of tying loadings and noise
print()
for family in reparam.PGMM_FAMILIES:
    lay = reparam.pgmm_layout(family, 4, 8, 2)
    print(f"{family}: {sum(r * c for r, c in lay.values()):>3} covariance parameters at K=4 p=8 q=2")
