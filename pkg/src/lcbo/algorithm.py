"""Single-loop penalty method driven by GP gradient surrogates.

Each iteration spends ``b1`` repeated evaluations at the iterate and ``b2``
evaluations at points chosen by the exploration acquisition, refreshes the
windowed GPs, and takes one normalized projected step along the gradient of
the quadratic penalty built from posterior means.  Internally every point
lives in the unit box; records report points in original units.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .acquisition import AcquisitionConfig, optimize_acquisition
from .benchmarks.problem import ConstraintSense, ProblemDef, noisy_observe
from .domain import BoxDomain, normal_cone_dist_sq, project, scale_to_unit, unscale_from_unit
from .gp import Dataset, GPFitError, GPModel, HyperPriors, Standardizer, fit, fit_hyperparameters
from .kernels import KernelFamily, KernelSpec

logger = logging.getLogger(__name__)

GRAD_EPS = 1e-12
STREAMS = ("cold_start", "noise", "acquisition", "problem")


class BatchSchedule(str, enum.Enum):
    FIXED = "fixed"
    LARGE = "large"
    GROWING = "growing"
    THEORETICAL = "theoretical"


class StepMode(str, enum.Enum):
    DECAYING = "decaying"
    CONSTANT = "constant"


class GradientSource(str, enum.Enum):
    MODEL = "model"
    ANALYTIC = "analytic"


def spawn_streams(seed) -> dict[str, np.random.Generator]:
    """Independent named generators derived from one seed.

    The rule is fixed: ``SeedSequence(seed).spawn(4)`` in the order of
    :data:`STREAMS`, so any stream can be rebuilt in isolation.
    """
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


def batch_sizes(schedule, k: int, d: int, fixed=(2, 5)) -> tuple[int, int]:
    """``(b1, b2)``: repeats at the iterate and acquisition points at iteration ``k`` (1-based)."""
    schedule = BatchSchedule(schedule)
    if schedule is BatchSchedule.FIXED:
        return int(fixed[0]), int(fixed[1])
    if schedule is BatchSchedule.LARGE:
        return 5, d
    if schedule is BatchSchedule.GROWING:
        return math.floor(math.log(k + 1) + 1), math.floor(0.5 * k + 5)
    return k, d * k * k


@dataclass(frozen=True)
class LCBOConfig:
    step_scale: float = 0.25
    step_mode: StepMode = StepMode.DECAYING
    penalty_scale: float = 10.0
    penalty_exponent: float = 0.25
    batch_schedule: BatchSchedule = BatchSchedule.FIXED
    fixed_batch: tuple[int, int] = (2, 5)
    # None: max(2 d, current batch size)
    window: int | None = None
    local_radius: float = 0.1
    lse_temperature: float = 20.0
    acq_restarts: int = 10
    acq_steps: int = 100
    acq_step_length: float = 0.01
    refit_period: int = 5
    # None: use the problem's ground-truth hyperparameters when it has them
    ground_truth: bool | None = None
    noise_var: float = 0.01
    kernel: KernelSpec = KernelSpec(KernelFamily.RBF, 0.5, 1.0)
    priors: HyperPriors | None = HyperPriors()
    # None: take the sense from the problem
    constraint_sense: ConstraintSense | None = None
    max_oracle_calls: int | None = None
    max_iterations: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "step_mode", StepMode(self.step_mode))
        object.__setattr__(self, "batch_schedule", BatchSchedule(self.batch_schedule))
        if self.constraint_sense is not None:
            object.__setattr__(self, "constraint_sense", ConstraintSense(self.constraint_sense))
        if not (self.step_scale > 0 and self.penalty_scale > 0):
            raise ValueError("step_scale and penalty_scale must be positive")
        if self.penalty_exponent < 0:
            raise ValueError("penalty_exponent must be non-negative so the penalty never decreases")
        if self.refit_period < 1:
            raise ValueError("refit_period must be a positive integer")
        if self.window is not None and self.window < 1:
            raise ValueError("window must be a positive integer")
        if min(self.fixed_batch) < 0 or sum(self.fixed_batch) < 1:
            raise ValueError("fixed_batch needs non-negative sizes with a positive total")

    def penalty(self, k: int) -> float:
        return self.penalty_scale * k**self.penalty_exponent

    def step_size(self, k: int) -> float:
        if self.step_mode is StepMode.DECAYING:
            return self.step_scale / math.sqrt(k)
        return self.step_scale

    def batch(self, k: int, d: int) -> tuple[int, int]:
        return batch_sizes(self.batch_schedule, k, d, self.fixed_batch)

    def window_size(self, k: int, d: int) -> int:
        if self.window is not None:
            return self.window
        return max(2 * d, sum(self.batch(k, d)))

    def acquisition(self, batch_size: int) -> AcquisitionConfig:
        return AcquisitionConfig(
            batch_size=batch_size,
            local_radius=self.local_radius,
            lse_temperature=self.lse_temperature,
            restarts=self.acq_restarts,
            max_steps=self.acq_steps,
            step_length=self.acq_step_length,
        )


@dataclass(frozen=True, eq=False)
class IterationRecord:
    k: int
    x: np.ndarray  # iterate x_k the batch was built around
    x_next: np.ndarray
    eta: float
    rho: float
    Z: np.ndarray  # evaluated batch, original units, repeats first
    observations: np.ndarray
    grad_hat: np.ndarray  # penalized gradient in unit coordinates
    multiplier: np.ndarray  # lambda_{k+1} from posterior means at x_next
    r_s_hat: float
    r_f_hat: float
    r_s_true: float
    r_f_true: float
    oracle_calls: int  # cumulative, this run only
    specs: tuple[KernelSpec, ...] = field(repr=False)

    @property
    def batch_size(self) -> int:
        return self.Z.shape[0]


# ----------------------------------------------------------------------
# penalty, step, residuals
# ----------------------------------------------------------------------


def _hinge(c, sense):
    c = np.asarray(c, dtype=float)
    return c if ConstraintSense(sense) is ConstraintSense.EQUALITY else np.maximum(c, 0.0)


def penalty_value(f_val: float, c_vals, rho: float, sense=ConstraintSense.EQUALITY) -> float:
    if not rho > 0:
        raise ValueError("rho must be positive")
    v = _hinge(c_vals, sense)
    return float(f_val + 0.5 * rho * (v @ v))


def penalized_grad_from_means(f_grad, c_vals, c_jac, rho: float, sense=ConstraintSense.EQUALITY) -> np.ndarray:
    c_jac = np.asarray(c_jac, dtype=float).reshape(len(np.atleast_1d(c_vals)), -1)
    return np.asarray(f_grad, dtype=float) + rho * c_jac.T @ _hinge(np.atleast_1d(c_vals), sense)


def penalized_grad(model: GPModel, x, rho: float, sense=ConstraintSense.EQUALITY) -> np.ndarray:
    """Surrogate gradient of the penalty from GP posterior means, in the model's input coordinates."""
    means, grads = model.mean_and_grad(x)
    return penalized_grad_from_means(grads[0], means[1:], grads[1:], rho, sense)


def exploit_step(x_k, grad_hat, eta: float, box: BoxDomain, normalize: bool = True) -> np.ndarray:
    """Projected step ``P(x - eta * g / ||g||)``; stays put on a vanishing gradient."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    x_k = np.asarray(x_k, dtype=float)
    g = np.asarray(grad_hat, dtype=float)
    norm = np.linalg.norm(g)
    if norm <= GRAD_EPS:
        return x_k.copy()
    direction = g / norm if normalize else g
    return project(box, x_k - eta * direction)


def multiplier_estimate(c_vals, rho: float, sense=ConstraintSense.EQUALITY) -> np.ndarray:
    return rho * _hinge(np.atleast_1d(c_vals), sense)


def kkt_from_parts(x, lam, f_grad, c_vals, c_jac, box: BoxDomain, sense=ConstraintSense.EQUALITY):
    """Stationarity and feasibility residuals from explicit gradients (original units)."""
    x = np.asarray(x, dtype=float).ravel()
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    c_vals = np.atleast_1d(np.asarray(c_vals, dtype=float))
    c_jac = np.asarray(c_jac, dtype=float).reshape(c_vals.shape[0], x.shape[0])
    lagrangian_grad = np.asarray(f_grad, dtype=float) + c_jac.T @ lam
    r_s = normal_cone_dist_sq(box, x, lagrangian_grad)
    v = _hinge(c_vals, sense)
    return r_s, float(v @ v)


def kkt_residuals(
    x,
    lam,
    box: BoxDomain,
    source=GradientSource.ANALYTIC,
    *,
    problem: ProblemDef | None = None,
    model: GPModel | None = None,
    sense=None,
) -> tuple[float, float]:
    """KKT residuals at ``x`` (original units) with values and gradients from ``source``.

    ``model`` must work in unit coordinates of ``box``; its gradients are
    rescaled to original units before the cone distance is taken.
    """
    source = GradientSource(source)
    x = np.asarray(x, dtype=float).ravel()
    if sense is None:
        sense = problem.sense if problem is not None else ConstraintSense.EQUALITY
    if source is GradientSource.ANALYTIC:
        if problem is None or not problem.has_gradients:
            raise ValueError("analytic residuals need a problem with gradient oracles")
        f_grad, c_jac = problem.gradients(x)
        c_vals = problem.values(x)[0, 1:]
    else:
        if model is None:
            raise ValueError("model residuals need a fitted GP model")
        means, grads = model.mean_and_grad(scale_to_unit(box, x))
        grads = grads / box.width
        f_grad, c_vals, c_jac = grads[0], means[1:], grads[1:]
    return kkt_from_parts(x, lam, f_grad, c_vals, c_jac, box, sense)


# ----------------------------------------------------------------------
# main loop
# ----------------------------------------------------------------------


def _initial_standardizer(problem: ProblemDef, ground_truth: bool) -> Standardizer:
    p = problem.num_outputs
    if ground_truth and problem.prior_mean is not None:
        return Standardizer(np.asarray(problem.prior_mean, dtype=float), np.ones(p))
    return Standardizer.identity(p)


def run(
    problem: ProblemDef,
    config: LCBOConfig,
    seed=0,
    initial_X=None,
    initial_Y=None,
    x1=None,
) -> list[IterationRecord]:
    """Run the optimizer until the next batch would exceed the oracle budget.

    ``initial_X``/``initial_Y`` (original units, noisy observations) seed the
    dataset and are not charged to ``config.max_oracle_calls``; ``x1``
    defaults to the centre of the domain.
    """
    streams = spawn_streams(seed)
    rng_noise, rng_acq = streams["noise"], streams["acquisition"]
    box = problem.domain
    d = problem.dim
    m = problem.num_constraints
    unit = BoxDomain.unit(d)
    sense = config.constraint_sense or problem.sense

    ground_truth = config.ground_truth
    if ground_truth is None:
        ground_truth = problem.ground_truth_specs is not None
    if ground_truth and problem.ground_truth_specs is None:
        raise ValueError(f"problem {problem.name!r} has no ground-truth hyperparameters")
    specs = tuple(problem.ground_truth_specs) if ground_truth else (config.kernel,) * (m + 1)
    standardizer = _initial_standardizer(problem, ground_truth)

    dataset = Dataset.empty(d, m + 1, config.noise_var)
    if initial_X is not None:
        dataset = dataset.append(scale_to_unit(box, np.atleast_2d(initial_X)), initial_Y)
    x = project(unit, scale_to_unit(box, x1)) if x1 is not None else np.full(d, 0.5)

    records: list[IterationRecord] = []
    calls = 0
    k = 0
    while True:
        k += 1
        if config.max_iterations is not None and k > config.max_iterations:
            break
        b1, b2 = config.batch(k, d)
        cost = (b1 + b2) * (m + 1)
        if config.max_oracle_calls is not None and calls + cost > config.max_oracle_calls:
            break
        dataset = dataset.with_window(config.window_size(k, d))

        if (k - 1) % config.refit_period == 0:
            specs, standardizer = _refresh(dataset, specs, standardizer, config, ground_truth, problem)
        model = fit(dataset, specs, standardizer)

        batches = [np.repeat(x[None, :], b1, axis=0)]
        if b2 > 0:
            batches.append(optimize_acquisition(model, x, config.acquisition(b2), rng_acq, unit).Z)
        Z = np.vstack(batches)
        Z_orig = unscale_from_unit(box, Z)
        obs = noisy_observe(problem, Z_orig, rng_noise)
        calls += cost
        dataset = dataset.append(Z, obs)
        model = fit(dataset, specs, standardizer)

        rho = config.penalty(k)
        eta = config.step_size(k)
        grad_hat = penalized_grad(model, x, rho, sense)
        x_next = exploit_step(x, grad_hat, eta, unit)
        x_next_orig = unscale_from_unit(box, x_next)

        means, _ = model.mean_and_grad(x_next)
        lam_hat = multiplier_estimate(means[1:], rho, sense)
        r_s_hat, r_f_hat = kkt_residuals(x_next_orig, lam_hat, box, GradientSource.MODEL, model=model, sense=sense)
        r_s_true = r_f_true = math.nan
        if problem.has_gradients:
            c_true = problem.values(x_next_orig)[0, 1:]
            lam_true = multiplier_estimate(c_true, rho, sense)
            r_s_true, r_f_true = kkt_residuals(
                x_next_orig, lam_true, box, GradientSource.ANALYTIC, problem=problem, sense=sense
            )

        records.append(
            IterationRecord(
                k=k,
                x=unscale_from_unit(box, x),
                x_next=x_next_orig,
                eta=eta,
                rho=rho,
                Z=Z_orig,
                observations=obs,
                grad_hat=grad_hat,
                multiplier=lam_hat,
                r_s_hat=r_s_hat,
                r_f_hat=r_f_hat,
                r_s_true=r_s_true,
                r_f_true=r_f_true,
                oracle_calls=calls,
                specs=specs,
            )
        )
        x = x_next
    return records


def _refresh(dataset, specs, standardizer, config, ground_truth, problem):
    """Periodic refresh of output standardization and (unless ground truth) hyperparameters."""
    if ground_truth:
        return specs, standardizer
    if dataset.n >= 2:
        standardizer = Standardizer.from_data(dataset.Y, x_lower=problem.domain.lower, x_upper=problem.domain.upper)
        try:
            model = fit_hyperparameters(fit(dataset, specs, standardizer), config.priors)
            specs = model.specs
        except (GPFitError, np.linalg.LinAlgError, ValueError) as exc:
            logger.warning("hyperparameter refit failed, keeping previous values: %s", exc)
    return specs, standardizer


def iterations_within_budget(config: LCBOConfig, d: int, num_outputs: int, max_oracle_calls: int) -> int:
    """Number of iterations a run can afford, from the batch schedule alone."""
    calls, k = 0, 0
    while True:
        b1, b2 = config.batch(k + 1, d)
        cost = (b1 + b2) * num_outputs
        if calls + cost > max_oracle_calls:
            return k
        calls += cost
        k += 1
