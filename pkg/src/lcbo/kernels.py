"""Stationary isotropic kernels with analytic first and mixed second derivatives.

Every kernel here is radial, ``k(x, x') = outputscale * phi(||x - x'|| / lengthscale)``,
so the derivative blocks needed for gradient posteriors reduce to a couple of
scalar profiles of the distance.  All batched routines broadcast over leading
point dimensions and return arrays shaped ``(n1, n2, ...)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

SQRT5 = np.sqrt(5.0)


class KernelFamily(str, enum.Enum):
    RBF = "rbf"
    MATERN25 = "matern25"


@dataclass(frozen=True)
class KernelSpec:
    """Hyperparameters of a stationary kernel.

    Parameters
    ----------
    family : KernelFamily
        ``RBF`` (squared exponential) or ``MATERN25`` (Matern, nu = 5/2).
    lengthscale : float
        Shared (isotropic) lengthscale in input units.
    outputscale : float
        Prior variance ``k(x, x)``.
    """

    family: KernelFamily = KernelFamily.RBF
    lengthscale: float = 1.0
    outputscale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        for name in ("lengthscale", "outputscale"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive and finite, got {value!r}")

    def with_params(self, lengthscale=None, outputscale=None) -> "KernelSpec":
        return KernelSpec(
            self.family,
            self.lengthscale if lengthscale is None else float(lengthscale),
            self.outputscale if outputscale is None else float(outputscale),
        )

    # ------------------------------------------------------------------
    # batched evaluation
    # ------------------------------------------------------------------

    def _profiles(self, U):
        """Return (k, a, b) with grad1 = a * u and cross_hessian = b * I - c * u u^T.

        ``U`` holds differences ``x - x'`` with the coordinate axis last.
        """
        ell = self.lengthscale
        kappa = self.outputscale
        r2 = np.sum(U * U, axis=-1)
        if self.family is KernelFamily.RBF:
            k = kappa * np.exp(-0.5 * r2 / ell**2)
            a = -k / ell**2
            b = k / ell**2
            c = k / ell**4
        else:
            s = SQRT5 * np.sqrt(r2) / ell
            e = kappa * np.exp(-s)
            k = e * (1.0 + s + s * s / 3.0)
            a2 = 5.0 / ell**2
            a = -a2 * (1.0 + s) * e / 3.0
            b = a2 * (1.0 + s) * e / 3.0
            c = a2 * a2 * e / 3.0
        return k, a, b, c

    def __call__(self, X1, X2) -> np.ndarray:
        """Gram matrix ``k(X1, X2)`` of shape ``(n1, n2)``."""
        X1, X2 = _as_points(X1, X2)
        U = X1[..., :, None, :] - X2[..., None, :, :]
        return self._profiles(U)[0]

    def grad1(self, X1, X2) -> np.ndarray:
        """Gradient of ``k`` in its first argument, shape ``(n1, n2, d)``."""
        X1, X2 = _as_points(X1, X2)
        U = X1[..., :, None, :] - X2[..., None, :, :]
        _, a, _, _ = self._profiles(U)
        return a[..., None] * U

    def cross_hessian(self, X1, X2) -> np.ndarray:
        """Mixed derivative ``d^2 k / dx dx'^T``, shape ``(n1, n2, d, d)``."""
        X1, X2 = _as_points(X1, X2)
        U = X1[..., :, None, :] - X2[..., None, :, :]
        _, _, b, c = self._profiles(U)
        d = U.shape[-1]
        eye = np.eye(d)
        return b[..., None, None] * eye - c[..., None, None] * U[..., :, None] * U[..., None, :]

    def dlog_lengthscale(self, X1, X2) -> np.ndarray:
        """Derivative of the Gram matrix with respect to ``log(lengthscale)``."""
        X1, X2 = _as_points(X1, X2)
        U = X1[..., :, None, :] - X2[..., None, :, :]
        r2 = np.sum(U * U, axis=-1)
        ell = self.lengthscale
        if self.family is KernelFamily.RBF:
            return self.outputscale * np.exp(-0.5 * r2 / ell**2) * r2 / ell**2
        s = SQRT5 * np.sqrt(r2) / ell
        return self.outputscale * (s * s / 3.0) * (1.0 + s) * np.exp(-s)

    def prior_grad_trace(self, d: int) -> float:
        """Trace of the prior gradient covariance in ``d`` dimensions."""
        per_dim = 1.0 if self.family is KernelFamily.RBF else 5.0 / 3.0
        return d * per_dim * self.outputscale / self.lengthscale**2


def _as_points(X1, X2):
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    if X1.ndim == 1:
        X1 = X1[None, :]
    if X2.ndim == 1:
        X2 = X2[None, :]
    if X1.shape[-1] != X2.shape[-1]:
        raise ValueError(f"dimension mismatch: {X1.shape[-1]} vs {X2.shape[-1]}")
    return X1, X2


def _check_pair(x, x2):
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {x2.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x2))):
        raise ValueError("kernel inputs must be finite")
    return x, x2


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    x, x2 = _check_pair(x, x2)
    return float(spec(x, x2)[0, 0])


def kernel_grad1(spec: KernelSpec, x, x2) -> np.ndarray:
    x, x2 = _check_pair(x, x2)
    return spec.grad1(x, x2)[0, 0]


def kernel_cross_hessian(spec: KernelSpec, x, x2) -> np.ndarray:
    x, x2 = _check_pair(x, x2)
    return spec.cross_hessian(x, x2)[0, 0]
