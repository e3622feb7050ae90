"""Stepped cantilever beam under a tip point load (Euler-Bernoulli, rectangular sections).

Segment 0 is clamped at x = 0 and the load acts at the free end x = L.
"""

from __future__ import annotations

import numpy as np

from ..domain import BoxDomain
from .problem import ConstraintSense, ProblemDef, lse_aggregate

LENGTH = 100.0
YOUNG = 2.9e7
LOAD = 500.0
DISP_MAX = 2.5
STRESS_MAX = 40_000.0
DIM_LO, DIM_HI = 0.5, 5.0
NUM_SEGMENTS = 25
LSE_ALPHA = 20.0


def second_moment(w, h) -> np.ndarray:
    return np.asarray(w, dtype=float) * np.asarray(h, dtype=float) ** 3 / 12.0


def tip_deflection(inertia, length=LENGTH, load=LOAD, young=YOUNG) -> float:
    """Integrate curvature segment by segment, carrying slope and deflection across joints."""
    inertia = np.asarray(inertia, dtype=float)
    seg = length / inertia.shape[0]
    slope = 0.0
    defl = 0.0
    for i, I in enumerate(inertia):
        a = i * seg
        # M(x) = P (L - x); within the segment v'' = M / (E I)
        k = load / (young * I)
        m0 = length - a
        slope_end = slope + k * (m0 * seg - 0.5 * seg**2)
        defl = defl + slope * seg + k * (0.5 * m0 * seg**2 - seg**3 / 6.0)
        slope = slope_end
    return defl


def beam_eval(w, h, alpha: float = LSE_ALPHA, check_bounds: bool = True) -> tuple[float, float, float]:
    """Volume, tip deflection and aggregated stress margin of a stepped beam."""
    w = np.asarray(w, dtype=float)
    h = np.asarray(h, dtype=float)
    if w.shape != h.shape or w.ndim != 1:
        raise ValueError("w and h must be 1-D arrays of equal length")
    if check_bounds and (np.any(w < DIM_LO) or np.any(w > DIM_HI) or np.any(h < DIM_LO) or np.any(h > DIM_HI)):
        raise ValueError(f"segment dimensions must lie in [{DIM_LO}, {DIM_HI}]")
    n = w.shape[0]
    seg = LENGTH / n
    volume = float(np.sum(w * h) * seg)
    I = second_moment(w, h)
    root_moment = LOAD * (LENGTH - seg * np.arange(n))
    stress = root_moment * (h / 2.0) / I
    agg_stress = lse_aggregate(stress / STRESS_MAX - 1.0, alpha)
    return volume, tip_deflection(I), agg_stress


def make_beam(noise_sd: float = 0.1, num_segments: int = NUM_SEGMENTS) -> ProblemDef:
    """Design vector is ``[w_1..w_N, h_1..h_N]``; constraints are tip and stress margins."""
    d = 2 * num_segments

    def evaluate(X):
        rows = []
        for x in np.atleast_2d(X):
            volume, tip, agg = beam_eval(x[:num_segments], x[num_segments:])
            rows.append((volume, tip / DISP_MAX - 1.0, agg))
        return np.array(rows)

    return ProblemDef(
        name="beam",
        domain=BoxDomain(np.full(d, DIM_LO), np.full(d, DIM_HI)),
        num_constraints=2,
        sense=ConstraintSense.INEQUALITY,
        evaluate=evaluate,
        noise_sd=noise_sd,
    )
