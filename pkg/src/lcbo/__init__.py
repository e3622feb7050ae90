"""Local constrained Bayesian optimization with GP gradient surrogates."""

from .acquisition import AcquisitionConfig, acquisition_value, grad_var_trace, minimize_acquisition
from .algorithm import (
    BatchSchedule,
    IterationRecord,
    LCBOConfig,
    StepMode,
    exploit_step,
    kkt_residuals,
    penalized_grad,
    penalty_value,
    run,
)
from .domain import BoxDomain, normal_cone_dist_sq, project, scale_to_unit, unscale_from_unit
from .gp import Dataset, GPModel, HyperPriors, Standardizer, fit, fit_hyperparameters
from .kernels import KernelFamily, KernelSpec, kernel_cross_hessian, kernel_eval, kernel_grad1

__version__ = "0.1.0"
