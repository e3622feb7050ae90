"""Local exploration: pick a batch that shrinks gradient uncertainty at the iterate.

For every output the acquisition is the trace of the posterior gradient
covariance at ``x_k`` after conditioning on the existing inputs plus a
hypothetical batch ``Z``.  Posterior covariances never involve the observed
responses, so nothing here reads ``Y``.  Outputs are combined through a
LogSumExp smooth maximum and the batch is optimized jointly with projected
Adam over a local box around ``x_k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .domain import BoxDomain
from .gp import DEFAULT_NOISE_VAR, GPModel
from .kernels import KernelSpec


@dataclass(frozen=True)
class AcquisitionConfig:
    batch_size: int = 5
    local_radius: float = 0.1
    lse_temperature: float = 20.0
    restarts: int = 10
    max_steps: int = 100
    step_length: float = 0.01

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0 < self.local_radius <= 1:
            raise ValueError("local_radius must lie in (0, 1]")
        if not self.lse_temperature > 0:
            raise ValueError("lse_temperature must be positive")
        if self.restarts < 1 or self.max_steps < 0 or not self.step_length > 0:
            raise ValueError("restarts >= 1, max_steps >= 0 and step_length > 0 required")


@dataclass(frozen=True)
class AcquisitionResult:
    Z: np.ndarray
    value: float
    start_values: np.ndarray
    final_values: np.ndarray


def _trace_batched(spec: KernelSpec, X, Z, x, noise_var, with_grad=True):
    """Posterior gradient-covariance trace at ``x`` for a stack of batches.

    ``X`` is (n, d) and shared, ``Z`` is (R, b, d).  Returns traces (R,) and,
    optionally, their gradients with respect to ``Z`` (R, b, d).
    """
    R, b, d = Z.shape
    n = X.shape[0]
    P = np.concatenate([np.broadcast_to(X, (R, n, d)), Z], axis=1)  # R x N x d
    N = n + b
    K = spec(P, P) + noise_var * np.eye(N)
    G = spec.grad1(x, P)[:, 0]  # R x N x d, rows are grad_1 k(x, p_l)
    B = np.linalg.inv(K)
    B = 0.5 * (B + np.swapaxes(B, -1, -2))
    A = G @ np.swapaxes(G, -1, -2)
    trace = spec.prior_grad_trace(d) - np.einsum("rij,rij->r", B, A)
    if not with_grad:
        return trace, None
    M = B @ A @ B
    Mz = M[:, n:, :]  # R x b x N
    dK = spec.grad1(Z, P)  # R x b x N x d, grad_1 k(z_j, p_l)
    term_k = 2.0 * np.einsum("rjl,rjld->rjd", Mz, dK)
    GB = np.einsum("rld,rlj->rjd", G, B[:, :, n:])  # sum_l B_{l,p} g_l
    J = spec.cross_hessian(x, Z)[:, 0]  # R x b x d x d, d/dz of grad_1 k(x, z)
    term_a = -2.0 * np.einsum("rjde,rjd->rje", J, GB)
    return trace, term_k + term_a


def grad_var_trace(spec: KernelSpec, X_existing, Z, x_k, noise_var: float = DEFAULT_NOISE_VAR) -> float:
    x_k = np.asarray(x_k, dtype=float).ravel()
    d = x_k.shape[0]
    X = np.asarray(X_existing, dtype=float).reshape(-1, d)
    Z = np.asarray(Z, dtype=float).reshape(1, -1, d)
    return float(_trace_batched(spec, X, Z, x_k, noise_var, with_grad=False)[0][0])


def _value_batched(specs, X, Z, x, temperature, noise_var, with_grad=True):
    # outputs sharing hyperparameters share the trace
    unique = {}
    for spec in specs:
        if spec not in unique:
            unique[spec] = _trace_batched(spec, X, Z, x, noise_var, with_grad)
    traces = np.stack([unique[s][0] for s in specs], axis=-1)  # R x (m+1)
    value = logsumexp(temperature * traces, axis=-1) / temperature
    if not with_grad:
        return value, None
    w = softmax(temperature * traces, axis=-1)
    grad = sum(w[:, i, None, None] * unique[s][1] for i, s in enumerate(specs))
    return value, grad


def acquisition_value(
    specs, X_existing, Z, x_k, lse_temperature: float = 20.0, noise_var: float = DEFAULT_NOISE_VAR
) -> float:
    """LogSumExp over outputs of the gradient-variance traces."""
    x_k = np.asarray(x_k, dtype=float).ravel()
    d = x_k.shape[0]
    X = np.asarray(X_existing, dtype=float).reshape(-1, d)
    Z = np.asarray(Z, dtype=float).reshape(1, -1, d)
    value, _ = _value_batched(tuple(specs), X, Z, x_k, lse_temperature, noise_var, with_grad=False)
    return float(value[0])


def acquisition_value_and_grad(specs, X_existing, Z, x_k, lse_temperature=20.0, noise_var=DEFAULT_NOISE_VAR):
    x_k = np.asarray(x_k, dtype=float).ravel()
    d = x_k.shape[0]
    X = np.asarray(X_existing, dtype=float).reshape(-1, d)
    Z = np.asarray(Z, dtype=float)
    shape = Z.shape
    value, grad = _value_batched(tuple(specs), X, Z.reshape(1, -1, d), x_k, lse_temperature, noise_var)
    return float(value[0]), grad[0].reshape(shape)


def optimize_acquisition(
    model: GPModel,
    x_k,
    config: AcquisitionConfig,
    rng: np.random.Generator,
    box: BoxDomain | None = None,
) -> AcquisitionResult:
    """Multi-start projected Adam on the batch acquisition.

    All restarts run as one stacked problem.  Each restart keeps the best
    iterate it has visited (its start included), and the winner is the
    restart with the smallest value, ties broken lexicographically.
    """
    x_k = np.asarray(x_k, dtype=float).ravel()
    d = x_k.shape[0]
    box = BoxDomain.unit(d) if box is None else box
    lo = np.maximum(box.lower, x_k - config.local_radius)
    hi = np.minimum(box.upper, x_k + config.local_radius)
    R, b = config.restarts, config.batch_size
    X = model.dataset.X
    specs, temp, noise = model.specs, config.lse_temperature, model.noise_var

    Z = lo + (hi - lo) * rng.random((R, b, d))
    value, grad = _value_batched(specs, X, Z, x_k, temp, noise)
    start_values = value.copy()
    best_Z, best_val = Z.copy(), value.copy()

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m1 = np.zeros_like(Z)
    m2 = np.zeros_like(Z)
    for t in range(1, config.max_steps + 1):
        m1 = beta1 * m1 + (1 - beta1) * grad
        m2 = beta2 * m2 + (1 - beta2) * grad * grad
        step = (m1 / (1 - beta1**t)) / (np.sqrt(m2 / (1 - beta2**t)) + eps)
        Z = np.clip(Z - config.step_length * step, lo, hi)
        value, grad = _value_batched(specs, X, Z, x_k, temp, noise)
        improved = value < best_val
        best_val = np.where(improved, value, best_val)
        best_Z[improved] = Z[improved]

    order = np.lexsort(tuple(best_Z.reshape(R, -1).T[::-1]) + (best_val,))
    winner = order[0]
    return AcquisitionResult(best_Z[winner], float(best_val[winner]), start_values, best_val)


def minimize_acquisition(model: GPModel, x_k, config: AcquisitionConfig, box: BoxDomain | None, rng) -> np.ndarray:
    """Batch ``Z2`` (b2 x d) minimizing the acquisition around ``x_k``."""
    return optimize_acquisition(model, x_k, config, rng, box).Z
