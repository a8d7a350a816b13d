"""Newton-Stein method for generalized linear models.

A second-order optimizer whose curvature estimate comes from a Stein-type
identity: the covariance is estimated once from a sub-sample and
eigen-thresholded, and each iteration needs only two scalar averages over the
data plus an O(p r) factored solve.
"""
from .data import (SpikedModelSpec, generate_spiked, load_dataset, save_dataset,
                   standardize)
from .errors import (DegenerateSpectrum, DenominatorNearZero, InfeasibleStart,
                     NewSteinError, ParseError, SingularHessian)
from .family import FAMILIES, LEAST_SQUARES, LOGISTIC, POISSON, CumulantFamily, get_family
from .glm import Dataset, gradient, hessian, neg_log_likelihood
from .kernels import BACKEND
from .optimizers import (IterationTrace, OptimizerConfig, baseline_optimize, grad_norm_at,
                         newst_optimize, optimize, project_ball)
from .stein import (apply_scaling, build_scaling, eigen_threshold, mu_hat,
                    stein_expectation_check, subsample_covariance)
from .theory import (IterationBoundInput, fit_composite, iteration_bound, step_size_suggest,
                     suggest_rank, suggest_sample_size)

__version__ = "0.1.0"
