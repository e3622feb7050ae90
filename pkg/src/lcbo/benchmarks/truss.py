"""Linear-elastic 3-D bar truss solver and the 25-bar weight minimization benchmark."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..domain import BoxDomain
from .problem import ConstraintSense, ProblemDef, lse_aggregate

LSE_ALPHA = 20.0


class TrussError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TrussGeometry:
    coords: np.ndarray  # nodes x 3
    fixed: np.ndarray  # nodes x 3 bool
    elements: np.ndarray  # members x 2, zero-based node indices
    loads: np.ndarray  # nodes x 3
    E: float
    density: float
    stress_max: float
    disp_max: float
    area_lo: float
    area_hi: float

    @property
    def num_members(self) -> int:
        return self.elements.shape[0]

    @property
    def free_dofs(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed.ravel())

    @property
    def lengths(self) -> np.ndarray:
        d = self.coords[self.elements[:, 1]] - self.coords[self.elements[:, 0]]
        return np.linalg.norm(d, axis=1)

    def with_loads(self, loads) -> "TrussGeometry":
        return TrussGeometry(
            self.coords, self.fixed, self.elements, np.asarray(loads, dtype=float).reshape(self.coords.shape),
            self.E, self.density, self.stress_max, self.disp_max, self.area_lo, self.area_hi,
        )


def parse_truss_file(text: str) -> TrussGeometry:
    """Parse the sectioned, whitespace-delimited truss format (``#`` comments)."""
    sections: dict[str, list[list[str]]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            sections[current] = []
            continue
        if current is None:
            raise ValueError(f"data outside a section: {raw!r}")
        sections[current].append(line.split())
    for name in ("nodes", "elements", "loads", "material", "limits"):
        if name not in sections:
            raise ValueError(f"missing [{name}] section")

    ids = [int(row[0]) for row in sections["nodes"]]
    index = {node_id: i for i, node_id in enumerate(ids)}
    coords = np.array([[float(v) for v in row[1:4]] for row in sections["nodes"]])
    fixed = np.array([[bool(int(v)) for v in row[4:7]] for row in sections["nodes"]])
    elements = np.array([[index[int(row[0])], index[int(row[1])]] for row in sections["elements"]])
    loads = np.zeros_like(coords)
    for row in sections["loads"]:
        loads[index[int(row[0])]] += [float(v) for v in row[1:4]]
    E, rho = (float(v) for v in sections["material"][0][:2])
    smax, umax, alo, ahi = (float(v) for v in sections["limits"][0][:4])
    return TrussGeometry(coords, fixed, elements, loads, E, rho, smax, umax, alo, ahi)


def load_truss(path: str | Path | None = None) -> TrussGeometry:
    if path is None:
        text = resources.files("lcbo.benchmarks").joinpath("data/truss25.txt").read_text()
    else:
        text = Path(path).read_text()
    return parse_truss_file(text)


def _direction_cosines(geom: TrussGeometry):
    d = geom.coords[geom.elements[:, 1]] - geom.coords[geom.elements[:, 0]]
    L = np.linalg.norm(d, axis=1)
    return d / L[:, None], L


def stiffness_matrix(geom: TrussGeometry, areas) -> np.ndarray:
    """Global stiffness of the full structure (3 DOFs per node)."""
    areas = np.asarray(areas, dtype=float)
    cosines, L = _direction_cosines(geom)
    ndof = 3 * geom.coords.shape[0]
    blocks = (geom.E * areas / L)[:, None, None] * cosines[:, :, None] * cosines[:, None, :]
    local = np.block([[blocks, -blocks], [-blocks, blocks]])  # members x 6 x 6
    dofs = np.concatenate([3 * geom.elements[:, :1] + np.arange(3), 3 * geom.elements[:, 1:] + np.arange(3)], axis=1)
    K = np.zeros((ndof, ndof))
    np.add.at(K, (dofs[:, :, None], dofs[:, None, :]), local)
    return K


def solve_truss(geom: TrussGeometry, areas, loads=None) -> tuple[np.ndarray, np.ndarray]:
    """Nodal displacements (nodes x 3) and member stresses for the given areas."""
    areas = np.asarray(areas, dtype=float)
    if areas.shape != (geom.num_members,):
        raise ValueError(f"expected {geom.num_members} areas, got shape {areas.shape}")
    loads = geom.loads if loads is None else np.asarray(loads, dtype=float).reshape(geom.coords.shape)
    K = stiffness_matrix(geom, areas)
    free = geom.free_dofs
    Kff = K[np.ix_(free, free)]
    # a kinematically stable truss has a positive definite reduced stiffness
    try:
        factor = cho_factor(Kff)
    except np.linalg.LinAlgError:
        raise TrussError("reduced stiffness matrix is singular") from None
    diag = np.diag(factor[0])
    if diag.min() <= 1e-7 * diag.max():
        raise TrussError("reduced stiffness matrix is numerically singular")
    u_free = cho_solve(factor, loads.ravel()[free])
    u = np.zeros(K.shape[0])
    u[free] = u_free
    u = u.reshape(-1, 3)
    cosines, L = _direction_cosines(geom)
    elongation = np.einsum("ij,ij->i", u[geom.elements[:, 1]] - u[geom.elements[:, 0]], cosines)
    stresses = geom.E * elongation / L
    return u, stresses


def truss_eval(geom: TrussGeometry, areas, alpha: float = LSE_ALPHA) -> tuple[float, float, float]:
    """Weight and aggregated stress / displacement constraints (feasible when <= 0)."""
    areas = np.asarray(areas, dtype=float)
    if np.any(areas < geom.area_lo * (1 - 1e-12)) or np.any(areas > geom.area_hi * (1 + 1e-12)):
        raise ValueError("areas outside their bounds")
    u, stresses = solve_truss(geom, areas)
    weight = geom.density * float(areas @ geom.lengths)
    free_nodes = ~np.all(geom.fixed, axis=1)
    disp = np.abs(u[free_nodes]).ravel()
    agg_stress = lse_aggregate(np.abs(stresses) / geom.stress_max - 1.0, alpha)
    agg_disp = lse_aggregate(disp / geom.disp_max - 1.0, alpha)
    return weight, agg_stress, agg_disp


def make_truss(noise_sd: float = 0.1, path=None) -> ProblemDef:
    geom = load_truss(path)

    def evaluate(X):
        return np.array([truss_eval(geom, x) for x in np.atleast_2d(X)])

    n = geom.num_members
    return ProblemDef(
        name="truss25",
        domain=BoxDomain(np.full(n, geom.area_lo), np.full(n, geom.area_hi)),
        num_constraints=2,
        sense=ConstraintSense.INEQUALITY,
        evaluate=evaluate,
        noise_sd=noise_sd,
        tags={"geometry": geom},
    )
