"""Localized orthogonal decomposition for rough-coefficient elliptic problems."""
from .coefficient import CoefficientField, constant, load_raster, random_cellwise, save_raster
from .corrector import CorrectorSet, compute_all, decay_profile, solve_corrector
from .fem import assemble, energy_norm, l2_norm, solve_coarse_p1, solve_galerkin
from .interpolation import build_clement, constraint_rows
from .lod import build_basis, default_layers, errors_vs_reference, solve_lod
from .mesh import Patch, TriMesh, build_hierarchy, node_patch, prolongation

__version__ = "0.1.0"

__all__ = [
    "CoefficientField", "constant", "load_raster", "random_cellwise", "save_raster",
    "CorrectorSet", "compute_all", "decay_profile", "solve_corrector",
    "assemble", "energy_norm", "l2_norm", "solve_coarse_p1", "solve_galerkin",
    "build_clement", "constraint_rows",
    "build_basis", "default_layers", "errors_vs_reference", "solve_lod",
    "Patch", "TriMesh", "build_hierarchy", "node_patch", "prolongation",
]
