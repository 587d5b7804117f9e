"""Nested uniform triangulations of the unit square.

Every level is the Cartesian grid with ``m`` cells per side, each cell cut
along its bottom-left to top-right diagonal. Red refinement of that pattern
reproduces the same pattern at ``2m``, so a hierarchy is just a list of
grids with doubling ``m``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Level:
    """One uniform level with ``m`` subdivisions per side."""

    m: int

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def n_vertices(self) -> int:
        return (self.m + 1) ** 2

    @property
    def n_triangles(self) -> int:
        return 2 * self.m * self.m

    @cached_property
    def coords(self) -> np.ndarray:
        # row-major by y then x
        t = np.linspace(0.0, 1.0, self.m + 1)
        x, y = np.meshgrid(t, t)
        return np.column_stack([x.ravel(), y.ravel()])

    @cached_property
    def triangles(self) -> np.ndarray:
        m = self.m
        i, j = np.meshgrid(np.arange(m), np.arange(m))
        i, j = i.ravel(), j.ravel()
        v00 = j * (m + 1) + i
        v10 = v00 + 1
        v01 = v00 + m + 1
        v11 = v01 + 1
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
        tri = np.empty((2 * m * m, 3), dtype=np.int64)
        tri[0::2] = lower
        tri[1::2] = upper
        return tri

    @cached_property
    def boundary(self) -> np.ndarray:
        ij = np.rint(self.coords * self.m).astype(np.int64)
        return np.any((ij == 0) | (ij == self.m), axis=1)

    @cached_property
    def interior(self) -> np.ndarray:
        """Sorted ids of the interior vertices."""
        return np.flatnonzero(~self.boundary)

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.coords[self.triangles].mean(axis=1)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Boolean triangle-by-vertex incidence matrix."""
        nt = self.n_triangles
        rows = np.repeat(np.arange(nt), 3)
        data = np.ones(3 * nt, dtype=np.int8)
        return sp.csr_matrix(
            (data, (rows, self.triangles.ravel())), shape=(nt, self.n_vertices)
        )

    def vertex_id(self, i: int, j: int) -> int:
        return j * (self.m + 1) + i

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return a containing triangle and barycentric coordinates per point.

        Points on shared edges get one of the candidate triangles; the
        barycentric coordinates are exact either way.
        """
        m = self.m
        pts = np.asarray(points, dtype=float)
        i = np.clip(np.floor(pts[:, 0] * m).astype(np.int64), 0, m - 1)
        j = np.clip(np.floor(pts[:, 1] * m).astype(np.int64), 0, m - 1)
        s = pts[:, 0] * m - i
        t = pts[:, 1] * m - j
        upper = t > s
        tri = 2 * (j * m + i) + upper.astype(np.int64)
        # lower (v00, v10, v11): weights (1-s, s-t, t)
        # upper (v00, v11, v01): weights (1-t, s, t-s)
        bary = np.where(
            upper[:, None],
            np.column_stack([1.0 - t, s, t - s]),
            np.column_stack([1.0 - s, s - t, t]),
        )
        return tri, bary


@dataclass(frozen=True)
class TriMesh:
    """Hierarchy of nested uniform levels; level 0 is the coarse mesh."""

    levels: tuple[Level, ...]

    @property
    def level_count(self) -> int:
        return len(self.levels)

    @property
    def coarse(self) -> Level:
        return self.levels[0]

    @property
    def fine(self) -> Level:
        return self.levels[-1]

    def level(self, index: int) -> Level:
        if not -self.level_count <= index < self.level_count:
            raise MeshError(f"level {index} out of range for {self.level_count} levels")
        return self.levels[index]

    def parents(self, from_level: int, to_level: int) -> np.ndarray:
        """Map each triangle of ``from_level`` to its ancestor at ``to_level``."""
        fine = self.level(from_level)
        coarse = self.level(to_level)
        if coarse.m > fine.m:
            raise MeshError("to_level must be coarser than from_level")
        tri, _ = coarse.locate(fine.barycenters)
        return tri

    @cached_property
    def fine_parent(self) -> np.ndarray:
        """Coarse ancestor of every fine triangle."""
        return self.parents(self.level_count - 1, 0)


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def build_hierarchy(coarse_m: int, refinements: int) -> TriMesh:
    """Build ``refinements + 1`` nested levels starting from ``coarse_m``.

    >>> build_hierarchy(2, 1).fine.n_vertices
    25
    """
    if coarse_m < 2 or not _is_power_of_two(coarse_m):
        raise MeshError(f"coarse_m must be a power of two >= 2, got {coarse_m}")
    if refinements < 1:
        raise MeshError(f"need at least one refinement, got {refinements}")
    return TriMesh(tuple(Level(coarse_m * 2**r) for r in range(refinements + 1)))


def prolongation(mesh: TriMesh, from_level: int, to_level: int) -> sp.csr_matrix:
    """Sparse map from nodal values on ``from_level`` to ``to_level``.

    Entry ``(i, x)`` is the coarse hat of vertex ``x`` evaluated at fine
    vertex ``i``, so the product represents the same P1 function exactly.
    """
    coarse = mesh.level(from_level)
    fine = mesh.level(to_level)
    if coarse.m > fine.m:
        raise MeshError("from_level must not be finer than to_level")
    if coarse.m == fine.m:
        return sp.identity(coarse.n_vertices, format="csr")
    tri, bary = coarse.locate(fine.coords)
    rows = np.repeat(np.arange(fine.n_vertices), 3)
    cols = coarse.triangles[tri].ravel()
    vals = bary.ravel()
    keep = vals != 0.0
    P = sp.csr_matrix(
        (vals[keep], (rows[keep], cols[keep])),
        shape=(fine.n_vertices, coarse.n_vertices),
    )
    P.sum_duplicates()
    P.sort_indices()
    return P


@dataclass(frozen=True)
class Patch:
    center: int
    k: int
    elements: np.ndarray
    interior_fine_dofs: np.ndarray


def grow_elements(level: Level, elements: np.ndarray) -> np.ndarray:
    """Add every triangle that touches the closure of ``elements``."""
    inc = level.incidence
    touched = np.zeros(level.n_vertices, dtype=bool)
    touched[level.triangles[elements].ravel()] = True
    hit = inc @ touched.astype(np.int8)
    return np.flatnonzero(hit > 0)


def node_patch(mesh: TriMesh, x: int, k: int) -> Patch:
    """k-layer nodal patch around interior coarse vertex ``x``."""
    coarse = mesh.coarse
    if not 0 <= x < coarse.n_vertices:
        raise MeshError(f"vertex {x} out of range")
    if coarse.boundary[x]:
        raise MeshError(f"vertex {x} lies on the boundary")
    if k < 1:
        raise MeshError(f"k must be >= 1, got {k}")
    elements = np.flatnonzero(coarse.incidence[:, x].toarray().ravel())
    for _ in range(k - 1):
        grown = grow_elements(coarse, elements)
        if grown.size == elements.size:
            break
        elements = grown

    return Patch(x, k, elements, patch_fine_interior(mesh, elements))


def patch_fine_interior(mesh: TriMesh, elements: np.ndarray) -> np.ndarray:
    """Fine vertices strictly inside the union of coarse ``elements``."""
    fine = mesh.fine
    in_patch = np.zeros(mesh.coarse.n_triangles, dtype=bool)
    in_patch[elements] = True
    outside = ~in_patch[mesh.fine_parent]
    # a vertex touching any fine triangle outside the patch is on its boundary
    blocked = fine.incidence.T @ outside.astype(np.int8) > 0
    touched = fine.incidence.T @ (~outside).astype(np.int8) > 0
    return np.flatnonzero(touched & ~blocked & ~fine.boundary)


def saturation_layers(mesh: TriMesh, x: int) -> int:
    """Smallest k whose patch around ``x`` covers every coarse triangle."""
    coarse = mesh.coarse
    elements = np.flatnonzero(coarse.incidence[:, x].toarray().ravel())
    k = 1
    while elements.size < coarse.n_triangles:
        elements = grow_elements(coarse, elements)
        k += 1
    return k
