"""P1 assembly, Dirichlet elimination, norms and Galerkin solves."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coefficient import CoefficientField, sample_on_elements
from .linalg import SolveReport, as_csr, spd_solve
from .mesh import Level, TriMesh, prolongation


def element_geometry(level: Level) -> tuple[np.ndarray, np.ndarray]:
    """Areas and barycentric-coordinate gradients, shape ``(nt,)`` and ``(nt, 3, 2)``."""
    p = level.coords[level.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * np.abs(det)
    # rows of the inverse Jacobian give gradients of lambda_1, lambda_2
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], axis=1)
    return area, grads


def _scatter(level: Level, local: np.ndarray) -> sp.csr_matrix:
    tri = level.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = level.n_vertices
    return as_csr(sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)))


def stiffness_matrix(level: Level, element_values: np.ndarray) -> sp.csr_matrix:
    area, grads = element_geometry(level)
    local = np.einsum("tid,tjd->tij", grads, grads)
    local *= (np.asarray(element_values) * area)[:, None, None]
    return _scatter(level, local)


def mass_matrix(level: Level) -> sp.csr_matrix:
    area, _ = element_geometry(level)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter(level, area[:, None, None] * ref)


def load_vector(level: Level, g: float) -> np.ndarray:
    """Exact P1 load for a constant source ``g``."""
    area, _ = element_geometry(level)
    b = np.zeros(level.n_vertices)
    np.add.at(b, level.triangles.ravel(), np.repeat(g * area / 3.0, 3))
    return b


def parse_load(g) -> float:
    if isinstance(g, (int, float)) and not isinstance(g, bool):
        return float(g)
    if isinstance(g, str):
        kind, _, value = g.partition(":")
        if kind == "const":
            try:
                return float(value)
            except ValueError:
                pass
    raise ValueError(f"unknown load {g!r}; expected a number or 'const:<value>'")


@dataclass(frozen=True)
class AssembledProblem:
    """Full and Dirichlet-reduced P1 system on one level."""

    level: Level
    free: np.ndarray
    K_full: sp.csr_matrix
    M_full: sp.csr_matrix
    b_full: np.ndarray
    element_values: np.ndarray
    g: float
    K: sp.csr_matrix
    M: sp.csr_matrix
    b: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.level.n_vertices

    def extend(self, v_free: np.ndarray) -> np.ndarray:
        """Full nodal vector from free-dof values (zero on the boundary)."""
        v = np.zeros(self.n_vertices)
        v[self.free] = v_free
        return v

    def check_field(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n_vertices,):
            raise ValueError(
                f"level mismatch: vector has shape {v.shape}, "
                f"problem has {self.n_vertices} vertices"
            )
        return v


def assemble(mesh: TriMesh | Level, level: int, field: CoefficientField, g=1.0) -> AssembledProblem:
    lvl = mesh if isinstance(mesh, Level) else mesh.level(level)
    gval = parse_load(g)
    values = sample_on_elements(field, lvl)
    free = lvl.interior
    K_full = stiffness_matrix(lvl, values)
    M_full = mass_matrix(lvl)
    b_full = load_vector(lvl, gval)
    return AssembledProblem(
        level=lvl,
        free=free,
        K_full=K_full,
        M_full=M_full,
        b_full=b_full,
        element_values=values,
        g=gval,
        K=as_csr(K_full[free][:, free]),
        M=as_csr(M_full[free][:, free]),
        b=b_full[free],
    )


def solve_galerkin(problem: AssembledProblem, tol: float = 1e-10) -> tuple[np.ndarray, SolveReport]:
    """P1 Galerkin solution on the problem's own level, as a full nodal vector."""
    u, report = spd_solve(problem.K, problem.b, tol=tol)
    return problem.extend(u), report


def solve_subspace(problem: AssembledProblem, basis: sp.spmatrix, tol: float = 1e-10):
    """Galerkin solve in ``span(basis columns)`` using the problem's bilinear form.

    ``basis`` maps coefficients to full nodal vectors of the problem level.
    Returns the coefficients, the full nodal representation and the report.
    """
    B = as_csr(basis)[problem.free]
    Ksub = as_csr(B.T @ problem.K @ B)
    Ksub = as_csr(0.5 * (Ksub + Ksub.T))
    c, report = spd_solve(Ksub, B.T @ problem.b, tol=tol)
    return c, problem.extend(B @ c), report


def coarse_p1_basis(mesh: TriMesh, level: int = 0) -> sp.csr_matrix:
    """Prolongated hats of the interior vertices of ``level``, on the fine level."""
    P = prolongation(mesh, level, mesh.level_count - 1)
    return as_csr(P[:, mesh.level(level).interior])


def solve_coarse_p1(problem_fine: AssembledProblem, mesh: TriMesh, level: int = 0, tol: float = 1e-10):
    """Classical P1 solution on a coarse level with the exact fine coefficient.

    The coarse space is a subspace of the fine one, so the coarse Galerkin
    system is ``P^T K_h P`` and needs no coefficient alignment.
    """
    return solve_subspace(problem_fine, coarse_p1_basis(mesh, level), tol=tol)


def energy_norm(problem: AssembledProblem, v: np.ndarray) -> float:
    vf = problem.check_field(v)[problem.free]
    return float(np.sqrt(max(vf @ (problem.K @ vf), 0.0)))


def l2_norm(problem: AssembledProblem, v: np.ndarray) -> float:
    vf = problem.check_field(v)[problem.free]
    return float(np.sqrt(max(vf @ (problem.M @ vf), 0.0)))
