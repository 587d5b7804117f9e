"""Localized correctors of the coarse hat functions.

For an interior coarse vertex ``x`` the corrector ``phi`` lives on the fine
dofs inside the k-layer patch, has vanishing Clement interpolant and solves
``a(phi, w) = a(lambda_x, w)`` for all such ``w``. The kernel condition is
imposed with Lagrange multipliers.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import AssembledProblem, coarse_p1_basis, energy_norm
from .interpolation import InterpolationMatrix, constraint_rows
from .linalg import KKTFactorization, SolverError, as_csr
from .mesh import Patch, TriMesh, node_patch, saturation_layers

CACHE_VERSION = 1


class CorrectorError(SolverError):
    pass


def solve_corrector(problem_fine: AssembledProblem, interp: InterpolationMatrix,
                    patch: Patch, lambda_x: np.ndarray):
    """Return ``(phi, report)`` with ``phi`` a full fine nodal vector."""
    dofs = patch.interior_fine_dofs
    system = PatchSystem(problem_fine, interp, patch)
    phi_loc, report = system.solve(lambda_x[:, None])
    phi = np.zeros(problem_fine.n_vertices)
    phi[dofs] = phi_loc[:, 0]
    return phi, report


class PatchSystem:
    """Factorized constrained stiffness system on one patch."""

    def __init__(self, problem_fine: AssembledProblem, interp: InterpolationMatrix, patch: Patch):
        self.dofs = patch.interior_fine_dofs
        if self.dofs.size == 0:
            raise CorrectorError(f"patch around vertex {patch.center} is empty")
        self.K = problem_fine.K_full
        K_loc = as_csr(self.K[self.dofs][:, self.dofs])
        self.kkt = KKTFactorization(K_loc, constraint_rows(interp, patch))

    def solve(self, hats: np.ndarray):
        """Correctors on the patch dofs for the fine hat columns ``hats``."""
        r = (self.K @ hats)[self.dofs]
        phi, _, report = self.kkt.solve(r)
        return phi, report


@dataclass
class CorrectorSet:
    """Correctors for every interior coarse vertex, one column each.

    ``columns`` is a sparse ``(n_fine, n_coarse_interior)`` matrix ordered
    like ``mesh.coarse.interior``.
    """

    k: int
    coarse_m: int
    fine_m: int
    columns: sp.csc_matrix
    reports: list = field(default_factory=list)
    coefficient_hash: str = ""

    def __len__(self):
        return self.columns.shape[1]

    def __getitem__(self, index: int) -> np.ndarray:
        return self.columns[:, index].toarray().ravel()

    def save(self, path) -> None:
        header = {"version": CACHE_VERSION, "k": self.k, "coarse_m": self.coarse_m,
                  "fine_m": self.fine_m, "coefficient_hash": self.coefficient_hash}
        c = self.columns
        np.savez(path, header=json.dumps(header), data=c.data,
                 indices=c.indices, indptr=c.indptr, shape=np.array(c.shape))

    @classmethod
    def load(cls, path) -> "CorrectorSet":
        with np.load(path) as f:
            header = json.loads(str(f["header"]))
            if header.get("version") != CACHE_VERSION:
                raise ValueError(f"{path}: unsupported cache version {header.get('version')}")
            cols = sp.csc_matrix((f["data"], f["indices"], f["indptr"]),
                                 shape=tuple(f["shape"]))
        return cls(header["k"], header["coarse_m"], header["fine_m"], cols,
                   coefficient_hash=header.get("coefficient_hash", ""))

    def matches(self, mesh: TriMesh, k: int, coefficient_hash: str = "") -> bool:
        return ((self.k, self.coarse_m, self.fine_m, self.coefficient_hash)
                == (k, mesh.coarse.m, mesh.fine.m, coefficient_hash))


def compute_all(problem_fine: AssembledProblem, interp: InterpolationMatrix,
                mesh: TriMesh, k: int, workers: int = 1) -> CorrectorSet:
    """Localized correctors for every interior coarse vertex.

    Vertices whose patches coincide (e.g. saturated patches) share one
    factorization. Failures are collected and raised together.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    hats = as_csc(coarse_p1_basis(mesh))
    vertices = mesh.coarse.interior
    patches = [node_patch(mesh, int(x), k) for x in vertices]
    groups: dict[bytes, list[int]] = {}
    for col, patch in enumerate(patches):
        groups.setdefault(patch.elements.tobytes(), []).append(col)

    def task(cols):
        try:
            system = PatchSystem(problem_fine, interp, patches[cols[0]])
            out = []
            for start in range(0, len(cols), _RHS_BATCH):
                batch = cols[start:start + _RHS_BATCH]
                phi, report = system.solve(hats[:, batch].toarray())
                out += [(c, system.dofs, phi[:, i], report) for i, c in enumerate(batch)]
            return out
        except SolverError as exc:
            return [(c, exc) for c in cols]

    jobs = list(groups.values())
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            done = list(pool.map(task, jobs))
    else:
        done = [task(cols) for cols in jobs]
    results = sorted((item for chunk in done for item in chunk), key=lambda t: t[0])

    failed = [(int(vertices[t[0]]), t[1]) for t in results if len(t) == 2]
    if failed:
        detail = "; ".join(f"vertex {v}: {exc}" for v, exc in failed)
        raise CorrectorError(f"{len(failed)} corrector solve(s) failed: {detail}")

    indptr = np.cumsum([0] + [t[1].size for t in results])
    indices = np.concatenate([t[1] for t in results] or [np.zeros(0, int)])
    data = np.concatenate([t[2] for t in results] or [np.zeros(0)])
    cols = sp.csc_matrix((data, indices, indptr),
                         shape=(mesh.fine.n_vertices, len(vertices)))
    return CorrectorSet(k, mesh.coarse.m, mesh.fine.m, cols, [t[3] for t in results])


_RHS_BATCH = 64


def as_csc(A) -> sp.csc_matrix:
    A = sp.csc_matrix(A)
    A.sort_indices()
    return A


def decay_profile(problem_fine: AssembledProblem, interp: InterpolationMatrix,
                  mesh: TriMesh, x: int, k_max: int | None = None):
    """Truncation error ``|||phi_x - phi_{x,k}|||`` for ``k = 1..k_max``.

    The reference corrector is solved once on the saturated patch. Returns
    the list of ``(k, error)`` pairs and the reference energy.
    """
    k_sat = saturation_layers(mesh, x)
    if k_max is None:
        k_max = k_sat
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    col = int(np.searchsorted(mesh.coarse.interior, x))
    lam = coarse_p1_basis(mesh)[:, col].toarray().ravel()
    phi_global, _ = solve_corrector(problem_fine, interp, node_patch(mesh, x, k_sat), lam)
    profile = []
    for k in range(1, k_max + 1):
        if k >= k_sat:
            profile.append((k, 0.0))
            continue
        phi_k, _ = solve_corrector(problem_fine, interp, node_patch(mesh, x, k), lam)
        profile.append((k, energy_norm(problem_fine, phi_global - phi_k)))
    return profile, energy_norm(problem_fine, phi_global)
