"""Within-model synthetic problems built from random Fourier feature GP samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..domain import BoxDomain
from ..kernels import KernelFamily, KernelSpec
from .problem import ConstraintSense, ProblemDef

MATERN_NU = 2.5
CONSTRAINT_SHIFT = 0.5


@dataclass(frozen=True, eq=False)
class RFFSample:
    """Deterministic function ``sqrt(2 kappa / M) * sum_j w_j cos(omega_j . x + b_j)``."""

    omega: np.ndarray  # M x d
    phase: np.ndarray  # M
    weights: np.ndarray  # M
    outputscale: float

    @property
    def amplitude(self) -> float:
        return np.sqrt(2.0 * self.outputscale / self.phase.shape[0])

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(X.shape[0])
        for start in range(0, X.shape[0], 4096):
            chunk = X[start : start + 4096]
            out[start : start + 4096] = np.cos(chunk @ self.omega.T + self.phase) @ self.weights
        return self.amplitude * out

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        s = np.sin(self.omega @ x + self.phase) * self.weights
        return -self.amplitude * (s @ self.omega)


def spectral_draws(spec: KernelSpec, num_features: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Frequencies from the spectral density of ``spec``."""
    z = rng.standard_normal((num_features, d)) / spec.lengthscale
    if spec.family is KernelFamily.RBF:
        return z
    if spec.family is KernelFamily.MATERN25:
        # multivariate t with 2 nu degrees of freedom
        chi2 = rng.chisquare(2 * MATERN_NU, size=(num_features, 1))
        return z * np.sqrt(2 * MATERN_NU / chi2)
    raise ValueError(f"no spectral sampler for kernel family {spec.family!r}")


def rff_sample(spec: KernelSpec, num_features: int, d: int, seed) -> RFFSample:
    if num_features < 1:
        raise ValueError("num_features must be at least 1")
    rng = np.random.default_rng(seed)
    omega = spectral_draws(spec, num_features, d, rng)
    phase = rng.uniform(0.0, 2 * np.pi, size=num_features)
    weights = rng.standard_normal(num_features)
    return RFFSample(omega, phase, weights, spec.outputscale)


def default_synthetic_spec(d: int) -> KernelSpec:
    return KernelSpec(KernelFamily.RBF, lengthscale=0.2 * np.sqrt(d), outputscale=1.0)


def make_synthetic(
    d: int,
    seed: int,
    num_features: int = 1024,
    spec: KernelSpec | None = None,
    noise_sd: float = 0.1,
    num_constraints: int = 2,
    probe_size: int = 10_000,
    max_regenerations: int = 20,
) -> ProblemDef:
    """Objective and shifted constraints ``c_i(x) + 0.5 <= 0`` from independent GP samples on [0, 1]^d.

    Draws are regenerated (with a bumped sub-seed) until a uniform probe of
    ``probe_size`` points finds a feasibility rate strictly inside (0, 1).
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    spec = default_synthetic_spec(d) if spec is None else spec
    m = num_constraints
    for attempt in range(max_regenerations + 1):
        seeds = np.random.SeedSequence([seed, d, attempt]).spawn(m + 2)
        funcs = [rff_sample(spec, num_features, d, s) for s in seeds[: m + 1]]
        if probe_size <= 0:
            break
        probe = np.random.default_rng(seeds[-1]).random((probe_size, d))
        feasible = np.ones(probe_size, dtype=bool)
        for g in funcs[1:]:
            feasible &= g(probe) + CONSTRAINT_SHIFT <= 0
        rate = feasible.mean()
        if 0.0 < rate < 1.0:
            break
    else:
        raise RuntimeError(f"no non-trivial synthetic problem found for d={d}, seed={seed}")

    def evaluate(X):
        cols = [funcs[0](X)] + [g(X) + CONSTRAINT_SHIFT for g in funcs[1:]]
        return np.column_stack(cols)

    def gradients(x):
        return funcs[0].gradient(x), np.stack([g.gradient(x) for g in funcs[1:]])

    return ProblemDef(
        name=f"synthetic{d}",
        domain=BoxDomain.unit(d),
        num_constraints=m,
        sense=ConstraintSense.INEQUALITY,
        evaluate=evaluate,
        noise_sd=noise_sd,
        gradients=gradients,
        ground_truth_specs=(spec,) * (m + 1),
        prior_mean=(0.0,) + (CONSTRAINT_SHIFT,) * m,
        tags={"seed": seed, "attempt": attempt, "num_features": num_features},
    )
