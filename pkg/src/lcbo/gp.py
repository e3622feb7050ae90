"""Exact GP posteriors over function values and gradients.

Outputs (objective first, then constraints) are modelled by independent
zero-mean GPs that share the input locations.  Inputs are expected in the
normalized unit box; raw observations are stored in the :class:`Dataset`
and mapped to the GP scale through a :class:`Standardizer`, so every
posterior quantity is reported back in original output units.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .kernels import KernelSpec

logger = logging.getLogger(__name__)

DEFAULT_NOISE_VAR = 0.01
JITTER_START = 1e-10
JITTER_MAX = 1e-4


class GPFitError(RuntimeError):
    """Raised when the Gram matrix cannot be factorized even with maximal jitter."""


@dataclass(frozen=True)
class Dataset:
    """Observed inputs ``X`` (n x d) and raw outputs ``Y`` (n x (m+1)).

    When ``window`` is set only the most recent ``window`` rows are kept.
    """

    X: np.ndarray
    Y: np.ndarray
    noise_var: float = DEFAULT_NOISE_VAR
    window: int | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("dataset entries must be finite")
        if not self.noise_var > 0:
            raise ValueError("noise_var must be positive")
        if self.window is not None:
            if self.window < 1:
                raise ValueError("window must be a positive integer")
            X, Y = X[-self.window :], Y[-self.window :]
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @classmethod
    def empty(cls, dim: int, num_outputs: int, noise_var=DEFAULT_NOISE_VAR, window=None):
        return cls(np.empty((0, dim)), np.empty((0, num_outputs)), noise_var, window)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def num_outputs(self) -> int:
        return self.Y.shape[1]

    def append(self, Z, Yz) -> "Dataset":
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        Yz = np.atleast_2d(np.asarray(Yz, dtype=float))
        return replace(self, X=np.vstack([self.X, Z]), Y=np.vstack([self.Y, Yz]))

    def with_window(self, window: int | None) -> "Dataset":
        return replace(self, window=window)


@dataclass(frozen=True)
class Standardizer:
    """Affine output map ``y_gp = (y - y_mean) / y_scale`` plus the input box.

    ``x_lower``/``x_upper`` record the min-max box that produced the unit
    inputs; they are informational for the GP itself.
    """

    y_mean: np.ndarray
    y_scale: np.ndarray
    x_lower: np.ndarray | None = None
    x_upper: np.ndarray | None = None

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.y_mean, dtype=float))
        scale = np.atleast_1d(np.asarray(self.y_scale, dtype=float))
        if mean.shape != scale.shape:
            raise ValueError("y_mean and y_scale must have equal shape")
        if not np.all(scale > 0):
            raise ValueError("y_scale must be strictly positive")
        object.__setattr__(self, "y_mean", mean)
        object.__setattr__(self, "y_scale", scale)

    @classmethod
    def identity(cls, num_outputs: int) -> "Standardizer":
        return cls(np.zeros(num_outputs), np.ones(num_outputs))

    @classmethod
    def from_data(cls, Y, center=True, scale=True, min_scale=1e-8, **box) -> "Standardizer":
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        p = Y.shape[1]
        mean = Y.mean(axis=0) if center and Y.shape[0] > 0 else np.zeros(p)
        if scale and Y.shape[0] > 1:
            sd = Y.std(axis=0, ddof=1)
            sd = np.where(sd > min_scale, sd, 1.0)
        else:
            sd = np.ones(p)
        return cls(mean, sd, **box)

    def transform(self, Y):
        return (np.asarray(Y, dtype=float) - self.y_mean) / self.y_scale


@dataclass(frozen=True, eq=False)
class GPModel:
    specs: tuple[KernelSpec, ...]
    dataset: Dataset
    standardizer: Standardizer
    factors: tuple[np.ndarray, ...] = field(repr=False)
    alphas: tuple[np.ndarray, ...] = field(repr=False)
    jitter: float = 0.0

    @property
    def num_outputs(self) -> int:
        return len(self.specs)

    @property
    def noise_var(self) -> float:
        return self.dataset.noise_var

    def _check_output(self, output: int):
        if not 0 <= output < self.num_outputs:
            raise IndexError(f"output index {output} out of range [0, {self.num_outputs})")

    def posterior_value(self, x, output: int = 0) -> tuple[float, float]:
        """Posterior mean and variance of output ``output`` at a single point."""
        self._check_output(output)
        mean, var = self.predict(np.atleast_2d(x), output)
        return float(mean[0]), float(var[0])

    def predict(self, Xs, output: int = 0) -> tuple[np.ndarray, np.ndarray]:
        self._check_output(output)
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        spec = self.specs[output]
        mean = np.zeros(Xs.shape[0])
        var = np.full(Xs.shape[0], spec.outputscale)
        if self.dataset.n:
            Ks = spec(Xs, self.dataset.X)
            mean = Ks @ self.alphas[output]
            V = solve_triangular(self.factors[output], Ks.T, lower=True)
            var = np.maximum(var - np.sum(V * V, axis=0), 0.0)
        a, s = self.standardizer.y_mean[output], self.standardizer.y_scale[output]
        return a + s * mean, var * s**2

    def posterior_grad(self, x, output: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and covariance of the gradient at ``x``."""
        self._check_output(output)
        x = np.asarray(x, dtype=float).ravel()
        spec = self.specs[output]
        cov = spec.cross_hessian(x, x)[0, 0]
        grad = np.zeros(x.shape[0])
        if self.dataset.n:
            G = spec.grad1(x, self.dataset.X)[0]  # n x d
            grad = G.T @ self.alphas[output]
            V = solve_triangular(self.factors[output], G, lower=True)
            cov = cov - V.T @ V
        s = self.standardizer.y_scale[output]
        return s * grad, s**2 * cov

    def mean_and_grad(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means (m+1,) and mean gradients (m+1, d) of every output."""
        x = np.asarray(x, dtype=float).ravel()
        means = np.zeros(self.num_outputs)
        grads = np.zeros((self.num_outputs, x.shape[0]))
        for i, spec in enumerate(self.specs):
            if self.dataset.n:
                means[i] = spec(x, self.dataset.X)[0] @ self.alphas[i]
                grads[i] = spec.grad1(x, self.dataset.X)[0].T @ self.alphas[i]
        std = self.standardizer
        return std.y_mean + std.y_scale * means, std.y_scale[:, None] * grads

    def log_marginal_likelihood(self, output: int = 0) -> float:
        self._check_output(output)
        if self.dataset.n == 0:
            return 0.0
        y = self.standardizer.transform(self.dataset.Y)[:, output]
        L = self.factors[output]
        return float(
            -0.5 * y @ self.alphas[output]
            - np.sum(np.log(np.diag(L)))
            - 0.5 * y.size * np.log(2 * np.pi)
        )


def cholesky_with_jitter(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K``, escalating diagonal jitter on failure."""
    jitter = 0.0
    while True:
        try:
            Kj = K if jitter == 0.0 else K + jitter * np.eye(K.shape[0])
            return np.linalg.cholesky(Kj), jitter
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX * 1.0000001:
                raise GPFitError("Gram matrix is not positive definite even with jitter 1e-4")


def fit(dataset: Dataset, specs: Sequence[KernelSpec], standardizer: Standardizer | None = None) -> GPModel:
    """Factorize ``k(X, X) + noise_var * I`` for every output."""
    specs = tuple(specs)
    if len(specs) != dataset.num_outputs:
        raise ValueError(f"expected {dataset.num_outputs} kernel specs, got {len(specs)}")
    if standardizer is None:
        standardizer = Standardizer.identity(dataset.num_outputs)
    Yt = standardizer.transform(dataset.Y)
    factors, alphas = [], []
    max_jitter = 0.0
    n = dataset.n
    cache = {}
    for i, spec in enumerate(specs):
        if spec not in cache:
            if n:
                K = spec(dataset.X, dataset.X) + dataset.noise_var * np.eye(n)
                cache[spec] = cholesky_with_jitter(K)
            else:
                cache[spec] = (np.empty((0, 0)), 0.0)
        L, jitter = cache[spec]
        max_jitter = max(max_jitter, jitter)
        factors.append(L)
        alphas.append(cho_solve((L, True), Yt[:, i]) if n else np.empty(0))
    return GPModel(specs, dataset, standardizer, tuple(factors), tuple(alphas), max_jitter)


# ----------------------------------------------------------------------
# hyperparameter fitting
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class GammaPrior:
    """Gamma density with shape ``concentration`` and inverse scale ``rate``."""

    concentration: float
    rate: float

    def logpdf(self, v):
        return (self.concentration - 1.0) * np.log(v) - self.rate * v

    def dlogpdf_dlog(self, v):
        return (self.concentration - 1.0) - self.rate * v

    @property
    def mode(self) -> float:
        return max(self.concentration - 1.0, 0.0) / self.rate


@dataclass(frozen=True)
class NormalPrior:
    loc: float
    scale: float

    def logpdf(self, v):
        return -0.5 * ((v - self.loc) / self.scale) ** 2

    def dlogpdf_dlog(self, v):
        return -(v - self.loc) * v / self.scale**2

    @property
    def mode(self) -> float:
        return self.loc


@dataclass(frozen=True)
class HyperPriors:
    lengthscale: GammaPrior | NormalPrior | None = GammaPrior(3.0, 3.0)
    outputscale: GammaPrior | NormalPrior | None = NormalPrior(2.0, 1.0)


LOG_BOUNDS = ((np.log(1e-3), np.log(1e2)), (np.log(1e-4), np.log(1e4)))


def _neg_log_posterior(theta, spec, X, y, noise_var, priors):
    """Negative penalized log marginal likelihood and its gradient in log space."""
    ell, kappa = np.exp(theta)
    s = spec.with_params(ell, kappa)
    n = X.shape[0]
    Kf = s(X, X)
    try:
        L, _ = cholesky_with_jitter(Kf + noise_var * np.eye(n))
    except GPFitError:
        return np.inf, np.zeros(2)
    alpha = cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2 * np.pi)
    W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
    grad = np.array([0.5 * np.sum(W * s.dlog_lengthscale(X, X)), 0.5 * np.sum(W * Kf)])
    if priors is not None:
        for j, (prior, v) in enumerate(((priors.lengthscale, ell), (priors.outputscale, kappa))):
            if prior is not None:
                lml += prior.logpdf(v)
                grad[j] += prior.dlogpdf_dlog(v)
    return -lml, -grad


def log_posterior(model: GPModel, output: int, priors: HyperPriors | None) -> float:
    """Penalized log marginal likelihood of one output at its current hyperparameters."""
    spec = model.specs[output]
    y = model.standardizer.transform(model.dataset.Y)[:, output]
    theta = np.log([spec.lengthscale, spec.outputscale])
    value, _ = _neg_log_posterior(theta, spec, model.dataset.X, y, model.noise_var, priors)
    return -value


def fit_hyperparameters(
    model: GPModel,
    priors: HyperPriors | None = HyperPriors(),
    restarts: int = 3,
    max_steps: int = 100,
    seed: int = 0,
) -> GPModel:
    """MAP estimate of lengthscale and outputscale, one output at a time.

    Observation noise is never touched.  Each output is optimized with
    L-BFGS-B in log-parameter space from the current values plus
    ``restarts - 1`` random starts; the current values are kept unless a
    start strictly improves on them, so the penalized likelihood never drops.
    """
    ds = model.dataset
    if ds.n < 2:
        raise ValueError("fit_hyperparameters needs at least two observations")
    rng = np.random.default_rng(seed)
    Yt = model.standardizer.transform(ds.Y)
    new_specs = []
    for i, spec in enumerate(model.specs):
        y = Yt[:, i]
        theta0 = np.log([spec.lengthscale, spec.outputscale])
        starts = [theta0] + [
            np.log([rng.uniform(0.05, 2.0), rng.uniform(0.2, 5.0)])
            for _ in range(max(restarts - 1, 0))
        ]
        best_theta = theta0
        best_val, _ = _neg_log_posterior(theta0, spec, ds.X, y, ds.noise_var, priors)
        for start in starts:
            try:
                res = minimize(
                    _neg_log_posterior,
                    np.clip(start, [b[0] for b in LOG_BOUNDS], [b[1] for b in LOG_BOUNDS]),
                    args=(spec, ds.X, y, ds.noise_var, priors),
                    jac=True,
                    method="L-BFGS-B",
                    bounds=LOG_BOUNDS,
                    options={"maxiter": max_steps},
                )
            except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
                logger.debug("hyperparameter restart failed: %s", exc)
                continue
            if np.isfinite(res.fun) and res.fun < best_val:
                best_val, best_theta = res.fun, res.x
        ell, kappa = np.exp(best_theta)
        new_specs.append(spec.with_params(ell, kappa))
    return fit(ds, new_specs, model.standardizer)
