"""Box search spaces: projection, min-max scaling and normal-cone distances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVE_TOL = 1e-9


@dataclass(frozen=True)
class BoxDomain:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        if not np.all(lower < upper):
            raise ValueError("every lower bound must be strictly below its upper bound")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit(cls, d: int) -> "BoxDomain":
        return cls(np.zeros(d), np.ones(d))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x, tol: float = ACTIVE_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lower + self.width * rng.random((n, self.dim))


def _check_dim(box: BoxDomain, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != box.dim:
        raise ValueError(f"expected points of dimension {box.dim}, got {x.shape[-1]}")
    return x


def project(box: BoxDomain, x) -> np.ndarray:
    """Euclidean projection onto the box (coordinatewise clamp)."""
    x = _check_dim(box, x)
    return np.clip(x, box.lower, box.upper)


def scale_to_unit(box: BoxDomain, x) -> np.ndarray:
    x = _check_dim(box, x)
    return (x - box.lower) / box.width


def unscale_from_unit(box: BoxDomain, u) -> np.ndarray:
    u = _check_dim(box, u)
    return box.lower + u * box.width


def normal_cone_dist_sq(box: BoxDomain, x, g, tol: float = ACTIVE_TOL) -> float:
    """Squared distance from ``g`` to the negative normal cone ``-N_X(x)``.

    For a box the cone separates by coordinate: a free coordinate contributes
    ``g_i**2``; at an active lower bound only ``g_i < 0`` is penalised, since
    a positive component would push ``-g`` out of the box; symmetrically at an
    active upper bound only ``g_i > 0`` counts.  ``tol`` is applied in
    normalized coordinates.
    """
    x = _check_dim(box, x).ravel()
    g = np.asarray(g, dtype=float).ravel()
    if g.shape != x.shape:
        raise ValueError("g must have the same dimension as x")
    u = (x - box.lower) / box.width
    if np.any(u < -tol) or np.any(u > 1.0 + tol):
        raise ValueError("x lies outside the box")
    at_lower = u <= tol
    at_upper = u >= 1.0 - tol
    residual = np.where(at_lower, np.minimum(g, 0.0), g)
    residual = np.where(at_upper, np.maximum(g, 0.0), residual)
    # a degenerate coordinate active at both bounds leaves no residual
    residual = np.where(at_lower & at_upper, 0.0, residual)
    return float(residual @ residual)
