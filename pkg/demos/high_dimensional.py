"""More dimensions than observations.

With n=30 points in p=40 dimensions every weighted scatter matrix is singular,
so the EM M-step only works with a ridge. The Cholesky-factor coordinates keep
every gradient iterate positive definite without one.
"""

import numpy as np

from gradmix import ModelSpec, SimSpec, init_params, sample_mixture
from gradmix.em import e_step, em_fit_gmm, m_step
from gradmix.models import constrained_params, make_objective
from gradmix.optim import OptConfig, fit

n, p, K = 30, 40, 2
data, _ = sample_mixture(SimSpec(n=n, p=p, K=K, seed=0))
spec = ModelSpec("GMM", K, p)
start = init_params(spec, data, seed=0)

gamma, _ = e_step(data.X, np.full(K, 0.5), start["mu"], np.repeat(np.eye(p)[None], K, axis=0))
_, _, raw = m_step(data.X, gamma, ridge=0.0)
print("unridged M-step: smallest eigenvalue per component",
      [f"{np.linalg.eigvalsh(c).min():.1e}" for c in raw])

res = fit(make_objective(spec, data), start.theta, OptConfig("ADAM", lr=0.01, max_iter=1000))
covs = constrained_params(spec, res.theta)["covariances"]
print(f"Adam: mean log L {res.trajectory[0]:.2f} -> {res.final_loglik:.2f} in {res.iters} steps")
print("  smallest eigenvalue per component", [f"{np.linalg.eigvalsh(c).min():.1e}" for c in covs])

ridged = em_fit_gmm(data.X, K, start["mu"])
print(f"EM with ridge {ridged.info['ridge']:g}: mean log L {ridged.final_loglik:.2f}"
      f" after {ridged.iters} iterations")
print("the likelihood is unbounded here, so a larger value means a more degenerate fit")
