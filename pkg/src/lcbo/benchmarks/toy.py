"""Analytic toy problems with known KKT points."""

from __future__ import annotations

import numpy as np

from ..domain import BoxDomain
from .problem import ConstraintSense, ProblemDef

CIRCLE_RADIUS_SQ = 0.5
CIRCLE_SOLUTION = np.array([-0.5, -0.5])
CIRCLE_MULTIPLIER = np.array([1.0])


def _circle_values(X):
    X = np.atleast_2d(X)
    f = X[:, 0] + X[:, 1]
    c = X[:, 0] ** 2 + X[:, 1] ** 2 - CIRCLE_RADIUS_SQ
    return np.column_stack([f, c])


def _circle_gradients(x):
    x = np.asarray(x, dtype=float).ravel()
    return np.ones(2), (2.0 * x)[None, :]


def make_toy_circle(noise_sd: float = 0.01, eq_tol: float = 1e-2) -> ProblemDef:
    """min x1 + x2  s.t.  x1^2 + x2^2 - 0.5 = 0  on [-1, 1]^2.

    The solution is x* = (-0.5, -0.5) with multiplier 1.
    """
    return ProblemDef(
        name="toy_circle",
        domain=BoxDomain(-np.ones(2), np.ones(2)),
        num_constraints=1,
        sense=ConstraintSense.EQUALITY,
        evaluate=_circle_values,
        noise_sd=noise_sd,
        gradients=_circle_gradients,
        eq_tol=eq_tol,
        tags={"optimum": -1.0},
    )
