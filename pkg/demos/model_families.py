"""Fitting every model family to one simulated dataset.

Simulates a three-component mixture with shared diagonal covariances, fits
each family with Adam from the same k-means start and ranks them by BIC.
"""

import numpy as np

from gradmix import ModelSpec, OptConfig, SimSpec, fit_mixture, sample_mixture

data, truth = sample_mixture(SimSpec(n=400, p=4, K=3, seed=4, scale=8.0, covariance_mode="EEI"))
print("true weights", np.round(truth.weights, 3))

specs = [ModelSpec("GMM", 3, 4), ModelSpec("TMM", 3, 4), ModelSpec("MFA", 3, 4, q=1)]
specs += [ModelSpec("MCLUST", 3, 4, c) for c in ("EII", "VII", "EEI", "VVI", "EEE", "VVV")]
specs += [ModelSpec("PGMM", 3, 4, c, 1) for c in ("CCC", "CCU", "UUU")]

cfg = OptConfig(method="ADAM", lr=0.02, max_iter=600, tol=1e-7)
rows = []
for spec in specs:
    fitted = fit_mixture(spec, data, cfg)
    name = spec.family + (f"/{spec.constraint}" if spec.constraint else "")
    rows.append((fitted.report.bic, name, fitted.report.d, fitted.report.total_loglik,
                 fitted.report.ari, fitted.result.iters))

print(f"\n{'model':<12}{'d':>4}{'log L':>11}{'BIC':>11}{'ARI':>7}{'iters':>7}")
for bic, name, d, ll, ari, iters in sorted(rows):
    print(f"{name:<12}{d:>4}{ll:>11.2f}{bic:>11.2f}{ari:>7.3f}{iters:>7}")
