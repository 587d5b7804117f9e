"""Weighted Clement quasi-interpolation onto the coarse P1 space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import coarse_p1_basis, mass_matrix
from .linalg import as_csr
from .mesh import Patch, TriMesh


@dataclass(frozen=True)
class InterpolationMatrix:
    """Rows: interior coarse vertices. Columns: all fine vertices.

    Row ``x`` holds ``int(psi_i * lambda_x) / int(lambda_x)`` so that
    ``P @ v`` gives the nodal values of the interpolant at interior coarse
    vertices.
    """

    P: sp.csr_matrix
    weights: np.ndarray
    coarse_vertices: np.ndarray

    def __matmul__(self, v):
        return self.P @ v

    @property
    def shape(self):
        return self.P.shape


def build_clement(mesh: TriMesh) -> InterpolationMatrix:
    hats = coarse_p1_basis(mesh)
    # mixed integrals int(psi_i lambda_x), exact since lambda_x is P1 on the fine mesh
    mixed = as_csr((mass_matrix(mesh.fine) @ hats).T)
    mixed.eliminate_zeros()
    weights = np.asarray(mixed.sum(axis=1)).ravel()
    P = as_csr(sp.diags(1.0 / weights) @ mixed)
    return InterpolationMatrix(P, weights, mesh.coarse.interior.copy())


def constraint_rows(interp: InterpolationMatrix, patch: Patch) -> sp.csr_matrix:
    """Kernel constraint restricted to the patch's interior fine dofs.

    Rows of ``P`` that vanish on the patch are dropped, so ``C v = 0`` holds
    exactly when the zero extension of ``v`` interpolates to zero.
    """
    dofs = patch.interior_fine_dofs
    if dofs.size == 0:
        raise ValueError(f"patch around vertex {patch.center} has no interior fine dofs")
    C = as_csr(interp.P[:, dofs])
    C.eliminate_zeros()
    keep = np.flatnonzero(np.diff(C.indptr) > 0)
    return C[keep]
