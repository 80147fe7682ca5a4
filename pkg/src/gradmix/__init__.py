"""Model-based clustering by automatic-differentiation gradient ascent."""

__version__ = "0.1.0"

from .autodiff import Dual, Tape, VarRef, backward, finite_diff_grad, forward_grad, value_and_grad
from .em import EmConfig, em_fit_gmm
from .fitting import MixtureFit, fit_mixture
from .metrics import EvalReport, aic, ari, bic
from .models import (
    Assignment,
    Dataset,
    ModelSpec,
    ParamSet,
    init_params,
    loglik,
    param_count,
    responsibilities,
)
from .optim import FitResult, OptConfig
from .simulate import SimSpec, benchmark_sweep, sample_mixture

__all__ = [
    "Assignment", "Dataset", "Dual", "EmConfig", "EvalReport", "FitResult", "MixtureFit",
    "ModelSpec", "OptConfig", "ParamSet", "SimSpec", "Tape", "VarRef", "aic", "ari",
    "backward", "benchmark_sweep", "bic", "em_fit_gmm", "finite_diff_grad", "fit_mixture",
    "forward_grad", "init_params", "loglik", "param_count", "responsibilities",
    "sample_mixture", "value_and_grad",
]
