"""One-call workflow: pick a model, initialise, fit, export."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import em, metrics, models, optim


@dataclass
class MixtureFit:
    spec: models.ModelSpec
    params: models.ParamSet
    result: optim.FitResult
    assignment: models.Assignment
    report: metrics.EvalReport

    @property
    def labels(self):
        return self.assignment.labels

    def export(self):
        """Constrained parameters, labels and criteria as plain python objects."""
        out = {k: np.asarray(v).tolist() for k, v in self.params.constrained().items()}
        out["labels"] = self.labels.tolist()
        out["trajectory"] = list(self.result.trajectory)
        out.update(self.report.to_dict())
        return out


def fit_mixture(spec, data, config=None, init="kmeans", seed=0, theta0=None):
    """Fit ``spec`` to ``data``.

    ``config`` is an :class:`~gradmix.optim.OptConfig` for the gradient
    methods or an :class:`~gradmix.em.EmConfig` for EM (GMM only).
    """
    if not isinstance(data, models.Dataset):
        data = models.Dataset(data)
    config = config or optim.OptConfig()
    start = (models.ParamSet(spec, theta0) if theta0 is not None
             else models.init_params(spec, data, init, seed))
    if isinstance(config, em.EmConfig):
        if spec.family != "GMM":
            raise ValueError("EM is implemented for the full-covariance GMM only")
        result = em.em_fit_gmm(data.X, spec.K, start["mu"],
                               models.reparam.weights_from_logits(start["alpha"]), config)
    else:
        result = optim.fit(models.make_objective(spec, data), start.theta, config)
    params = models.ParamSet(spec, result.theta)
    assignment = models.responsibilities(spec, params, data)
    report = metrics.evaluate(result.final_loglik * data.n, models.param_count(spec), data.n,
                              assignment.labels, data.labels)
    return MixtureFit(spec, params, result, assignment, report)
