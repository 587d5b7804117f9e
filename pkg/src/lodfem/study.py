"""Single solves, H ladders and decay studies as plain row dictionaries."""
from __future__ import annotations

import hashlib
import math
import time
from pathlib import Path

import numpy as np

from . import fem
from .coefficient import CoefficientField
from .corrector import CorrectorSet, compute_all, decay_profile
from .interpolation import build_clement
from .lod import build_basis, default_layers, errors_vs_reference, solve_lod
from .mesh import Level, TriMesh, build_hierarchy, saturation_layers

SOLVE_COLUMNS = [
    "H", "k", "N_dof",
    "rel_energy_lod", "rel_L2_lod", "rel_L2_interp",
    "rel_energy_p1fem", "rel_L2_p1fem",
    "degenerate", "cg_iter_ref", "cg_iter_lod", "kkt_residual_max",
]
TIMING_COLUMNS = ["t_reference", "t_correctors", "t_lod", "t_p1fem"]
DECAY_COLUMNS = ["vertex", "k", "truncation_error", "global_energy"]


def hierarchy_for(coarse_m: int, fine_m: int) -> TriMesh:
    if fine_m % coarse_m or fine_m <= coarse_m:
        raise ValueError(f"fine_m={fine_m} must be a multiple of coarse_m={coarse_m} and finer")
    ratio = fine_m // coarse_m
    if ratio & (ratio - 1):
        raise ValueError(f"fine_m / coarse_m = {ratio} must be a power of two")
    return build_hierarchy(coarse_m, int(math.log2(ratio)))


def log_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


class Reference:
    """Fine problem and reference solution, shared by every coarse level."""

    def __init__(self, field: CoefficientField, fine_m: int, g: float = 1.0, tol: float = 1e-10):
        t0 = time.perf_counter()
        self.level = Level(fine_m)
        self.problem = fem.assemble(self.level, -1, field, g)
        self.u, self.report = fem.solve_galerkin(self.problem, tol=tol)
        self.seconds = time.perf_counter() - t0


def solve_point(field: CoefficientField, coarse_m: int, fine_m: int, k: int, g: float = 1.0,
                tol: float = 1e-10, workers: int = 1, reference: Reference | None = None,
                cache_dir=None) -> tuple[dict, dict]:
    """One (H, k) solve; returns the CSV row and the fine vectors."""
    mesh = hierarchy_for(coarse_m, fine_m)
    ref = reference or Reference(field, fine_m, g, tol)
    pb = ref.problem
    interp = build_clement(mesh)

    t0 = time.perf_counter()
    correctors = _correctors(pb, interp, mesh, k, workers, cache_dir)
    t1 = time.perf_counter()
    sol = solve_lod(pb, build_basis(mesh, correctors), interp, mesh, k, tol=tol)
    t2 = time.perf_counter()
    _, u_p1, _ = fem.solve_coarse_p1(pb, mesh, tol=tol)
    t3 = time.perf_counter()

    err = errors_vs_reference(pb, ref.u, sol)
    err_p1 = errors_vs_reference(pb, ref.u, u_p1)
    row = {
        "H": 1.0 / coarse_m,
        "k": k,
        "N_dof": (coarse_m - 1) ** 2,
        "rel_energy_lod": err.energy,
        "rel_L2_lod": err.l2,
        "rel_L2_interp": err.l2_interp,
        "rel_energy_p1fem": err_p1.energy,
        "rel_L2_p1fem": err_p1.l2,
        "degenerate": int(fem.energy_norm(pb, ref.u) == 0.0),
        "cg_iter_ref": ref.report.iterations,
        "cg_iter_lod": sol.report.iterations,
        "kkt_residual_max": max((r.residual for r in correctors.reports), default=0.0),
        "t_reference": ref.seconds,
        "t_correctors": t1 - t0,
        "t_lod": t2 - t1,
        "t_p1fem": t3 - t2,
    }
    return row, {"reference": ref.u, "lod": sol.fine, "interpolant": sol.interpolant, "p1fem": u_p1}


def _correctors(pb, interp, mesh, k, workers, cache_dir) -> CorrectorSet:
    if cache_dir is None:
        return compute_all(pb, interp, mesh, k, workers=workers)
    digest = hashlib.sha256(pb.element_values.tobytes()).hexdigest()[:16]
    path = Path(cache_dir) / f"correctors_H{mesh.coarse.m}_h{mesh.fine.m}_k{k}_{digest}.npz"
    if path.exists():
        cached = CorrectorSet.load(path)
        if cached.matches(mesh, k, digest):
            return cached
    cs = compute_all(pb, interp, mesh, k, workers=workers)
    cs.coefficient_hash = digest
    path.parent.mkdir(parents=True, exist_ok=True)
    cs.save(path)
    return cs


def resolve_k(coarse_m: int, k: int | None, factor: float, base: float) -> int:
    return k if k is not None else default_layers(1.0 / coarse_m, factor, base)


def convergence(field: CoefficientField, ladder, fine_m: int, g: float = 1.0, k: int | None = None,
                k_factor: float = 2.0, log_base: float = math.e, tol: float = 1e-10,
                workers: int = 1, cache_dir=None, saturate: bool = False):
    """Rows for every coarse ``m`` in ``ladder`` plus fitted slopes vs ``N_dof``."""
    ref = Reference(field, fine_m, g, tol)
    rows = []
    for coarse_m in ladder:
        if saturate:
            mesh = hierarchy_for(coarse_m, fine_m)
            kk = max(saturation_layers(mesh, int(x)) for x in mesh.coarse.interior)
        else:
            kk = resolve_k(coarse_m, k, k_factor, log_base)
        row, _ = solve_point(field, coarse_m, fine_m, kk, g, tol, workers, ref, cache_dir)
        rows.append(row)
    return rows, fit_slopes(rows)


def fit_slopes(rows) -> dict:
    n = [r["N_dof"] for r in rows]
    out = {}
    if len(rows) < 2:
        return out
    for col in ["rel_energy_lod", "rel_L2_lod", "rel_L2_interp", "rel_energy_p1fem", "rel_L2_p1fem"]:
        vals = [r[col] for r in rows]
        if all(v > 0 and math.isfinite(v) for v in vals):
            out[col] = log_slope(n, vals)
    return out


def decay(field: CoefficientField, coarse_m: int, fine_m: int, vertices=None,
          k_max: int | None = None, g: float = 1.0):
    """Truncation-error rows per vertex and the fitted per-layer contraction."""
    mesh = hierarchy_for(coarse_m, fine_m)
    pb = fem.assemble(mesh, -1, field, g)
    interp = build_clement(mesh)
    if vertices is None:
        vertices = [center_vertex(mesh)]
    rows, factors = [], {}
    for x in vertices:
        profile, energy = decay_profile(pb, interp, mesh, int(x), k_max)
        for kk, e in profile:
            rows.append({"vertex": int(x), "k": kk, "truncation_error": e, "global_energy": energy})
        factors[int(x)] = contraction_factor(profile)
    return rows, factors


def contraction_factor(profile) -> float:
    ks = [k for k, e in profile if e > 0]
    es = [e for k, e in profile if e > 0]
    if len(ks) < 2:
        return math.nan
    return float(math.exp(np.polyfit(ks, np.log(es), 1)[0]))


def center_vertex(mesh: TriMesh) -> int:
    m = mesh.coarse.m
    return mesh.coarse.vertex_id(m // 2, m // 2)
