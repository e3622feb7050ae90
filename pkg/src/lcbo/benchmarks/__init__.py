"""Benchmark problems: within-model synthetics, structural design, toy problems."""

from .beam import beam_eval, make_beam
from .problem import ConstraintSense, ProblemDef, lse_aggregate, noisy_observe
from .synthetic import RFFSample, make_synthetic, rff_sample
from .toy import make_toy_circle
from .truss import TrussGeometry, load_truss, make_truss, parse_truss_file, solve_truss, truss_eval

PROBLEMS = ("toy_circle", "synthetic", "truss", "beam")


def get_problem(name: str, *, dim: int | None = None, seed: int = 0, noise_sd: float | None = None) -> ProblemDef:
    """Build a benchmark by name.  ``dim`` and ``seed`` only matter for ``synthetic``."""
    kwargs = {} if noise_sd is None else {"noise_sd": noise_sd}
    if name == "toy_circle":
        return make_toy_circle(**kwargs)
    if name == "synthetic":
        return make_synthetic(25 if dim is None else dim, seed, **kwargs)
    if name == "truss":
        return make_truss(**kwargs)
    if name == "beam":
        return make_beam(**kwargs)
    raise KeyError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")


__all__ = [
    "ConstraintSense",
    "PROBLEMS",
    "ProblemDef",
    "RFFSample",
    "TrussGeometry",
    "beam_eval",
    "get_problem",
    "load_truss",
    "lse_aggregate",
    "make_beam",
    "make_synthetic",
    "make_toy_circle",
    "make_truss",
    "noisy_observe",
    "parse_truss_file",
    "rff_sample",
    "solve_truss",
    "truss_eval",
]
