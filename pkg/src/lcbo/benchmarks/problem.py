from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from ..domain import BoxDomain
from ..kernels import KernelSpec


class ConstraintSense(str, enum.Enum):
    EQUALITY = "equality"
    INEQUALITY = "inequality"


@dataclass(frozen=True, eq=False)
class ProblemDef:
    """A constrained black-box problem with noiseless ground truth.

    ``evaluate`` maps an (n, d) array of points in original units to an
    (n, m+1) array whose first column is the objective.  ``gradients``, when
    present, returns ``(grad_f (d,), jac_c (m, d))`` at a single point.
    """

    name: str
    domain: BoxDomain
    num_constraints: int
    sense: ConstraintSense
    evaluate: Callable[[np.ndarray], np.ndarray]
    noise_sd: float = 0.1
    gradients: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    ground_truth_specs: tuple[KernelSpec, ...] | None = None
    prior_mean: tuple[float, ...] | None = None
    eq_tol: float = 1e-2
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sense", ConstraintSense(self.sense))

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def num_outputs(self) -> int:
        return self.num_constraints + 1

    @property
    def has_gradients(self) -> bool:
        return self.gradients is not None

    def values(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.asarray(self.evaluate(X), dtype=float).reshape(X.shape[0], self.num_outputs)

    def violation(self, c) -> np.ndarray:
        """Per-constraint violation, zero when satisfied."""
        c = np.asarray(c, dtype=float)
        if self.sense is ConstraintSense.EQUALITY:
            return np.abs(c)
        return np.maximum(c, 0.0)

    def is_feasible(self, values) -> np.ndarray:
        """Feasibility of rows of ``values`` (objective column included)."""
        values = np.atleast_2d(values)
        c = values[:, 1:]
        if self.sense is ConstraintSense.EQUALITY:
            return np.all(np.abs(c) <= self.eq_tol, axis=1)
        return np.all(c <= 0.0, axis=1)


def lse_aggregate(margins: Sequence[float], alpha: float = 20.0) -> float:
    """Smooth maximum ``log(sum(exp(alpha * g))) / alpha``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    g = np.asarray(margins, dtype=float)
    return float(logsumexp(alpha * g, axis=-1) / alpha)


def noisy_observe(problem: ProblemDef, x, rng: np.random.Generator) -> np.ndarray:
    """Noisy observations of every output; ``m + 1`` normal draws per point, in output order."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    truth = problem.values(X)
    out = truth + problem.noise_sd * rng.normal(size=truth.shape)
    return out[0] if single else out
