import math

import numpy as np
import pytest

from lodfem.coefficient import constant, random_cellwise
from lodfem.corrector import CorrectorSet, compute_all
from lodfem.fem import assemble, coarse_p1_basis, energy_norm, solve_coarse_p1, solve_galerkin
from lodfem.interpolation import build_clement
from lodfem.linalg import is_symmetric
from lodfem.lod import (ErrorRecord, MultiscaleSolution, build_basis, coarse_interpolant,
                        default_layers, errors_vs_reference, relative, solve_lod)
from lodfem.mesh import build_hierarchy, node_patch, saturation_layers

from oracles import ideal_solution


def setup(coarse_m, refinements, field, g=1.0):
    mesh = build_hierarchy(coarse_m, refinements)
    pb = assemble(mesh, -1, field, g)
    return mesh, pb, build_clement(mesh)


def k_saturated(mesh):
    return max(saturation_layers(mesh, int(x)) for x in mesh.coarse.interior)


@pytest.fixture(scope="module")
def rough():
    mesh, pb, interp = setup(4, 2, random_cellwise(16, 0.05, 2.0, seed=5))
    cs = compute_all(pb, interp, mesh, 2)
    return mesh, pb, interp, cs


def test_default_layers():
    assert default_layers(1 / 4) == math.ceil(2 * math.log(4))
    assert [default_layers(2.0 ** -j) for j in (2, 3, 4, 5)] == [3, 5, 6, 7]
    assert [default_layers(2.0 ** -j, base=2) for j in (2, 3, 4, 5)] == [4, 6, 8, 10]
    assert default_layers(1 / 2, factor=0.1) == 1


def test_no_correctors_is_p1(rough):
    mesh, _, _, _ = rough
    assert (build_basis(mesh, None) != coarse_p1_basis(mesh)).nnz == 0


def test_basis_shape_mismatch(rough):
    mesh, _, _, cs = rough
    other = build_hierarchy(2, 3)
    with pytest.raises(ValueError, match="shape"):
        build_basis(other, cs)


def test_basis_interpolates_like_hats(rough):
    mesh, _, interp, cs = rough
    B = build_basis(mesh, cs)
    hats = coarse_p1_basis(mesh)
    np.testing.assert_allclose((interp.P @ B).toarray(), (interp.P @ hats).toarray(), atol=1e-9)


def test_basis_column_support(rough):
    mesh, _, _, cs = rough
    B = build_basis(mesh, cs).tocsc()
    for col, x in enumerate(mesh.coarse.interior):
        patch = node_patch(mesh, int(x), 2)
        support = B[:, col].indices
        inside = np.isin(mesh.fine_parent, patch.elements)
        allowed = np.unique(mesh.fine.triangles[inside])
        assert np.isin(support, allowed).all()


def test_zero_load_gives_zero():
    mesh, pb, interp = setup(4, 1, constant(1.0), g=0.0)
    cs = compute_all(pb, interp, mesh, 1)
    sol = solve_lod(pb, build_basis(mesh, cs), interp, mesh, 1)
    assert not sol.fine.any() and not sol.coarse.any()
    rec = errors_vs_reference(pb, np.zeros(pb.n_vertices), sol)
    assert rec == ErrorRecord(0.0, 0.0, 0.0)


def test_residual_orthogonal_to_basis(rough):
    mesh, pb, interp, cs = rough
    B = build_basis(mesh, cs)
    sol = solve_lod(pb, B, interp, mesh, 2, tol=1e-12)
    Bf = B[pb.free]
    res = Bf.T @ (pb.K @ sol.fine[pb.free] - pb.b)
    assert np.linalg.norm(res) <= 1e-8 * np.linalg.norm(Bf.T @ pb.b)
    assert isinstance(sol, MultiscaleSolution) and sol.k == 2


def test_stiffness_symmetric(rough):
    mesh, pb, _, cs = rough
    Bf = build_basis(mesh, cs)[pb.free]
    assert is_symmetric(Bf.T @ pb.K @ Bf, rtol=1e-12)


def test_best_approximation(rough):
    mesh, pb, interp, cs = rough
    B = build_basis(mesh, cs)
    uh, _ = solve_galerkin(pb, tol=1e-12)
    sol = solve_lod(pb, B, interp, mesh, tol=1e-12)
    best = energy_norm(pb, uh - sol.fine)
    rng = np.random.default_rng(2)
    for _ in range(20):
        cand = B @ (sol.coarse + 0.05 * rng.standard_normal(sol.coarse.size))
        assert best <= energy_norm(pb, uh - cand)


@pytest.mark.parametrize("coarse_m,refinements", [(2, 2), (4, 1), (4, 2)])
def test_saturated_matches_ideal_oracle(coarse_m, refinements):
    mesh, pb, interp = setup(coarse_m, refinements, random_cellwise(8, 0.05, 2.0, seed=coarse_m))
    uh, _ = solve_galerkin(pb, tol=1e-13)
    cs = compute_all(pb, interp, mesh, k_saturated(mesh))
    sol = solve_lod(pb, build_basis(mesh, cs), interp, mesh, tol=1e-13)
    ideal = ideal_solution(pb, interp, uh)
    assert energy_norm(pb, sol.fine - ideal) <= 1e-8 * energy_norm(pb, ideal)


def test_coarse_2_single_vertex():
    mesh, pb, interp = setup(2, 2, constant(1.0))
    assert mesh.coarse.interior.size == 1
    cs = compute_all(pb, interp, mesh, k_saturated(mesh))
    sol = solve_lod(pb, build_basis(mesh, cs), interp, mesh)
    assert sol.coarse.shape == (1,) and sol.coarse[0] > 0


def test_reference_against_itself_is_exact(rough):
    _, pb, _, _ = rough
    uh, _ = solve_galerkin(pb)
    rec = errors_vs_reference(pb, uh, uh)
    assert rec.energy == 0.0 and rec.l2 == 0.0 and math.isnan(rec.l2_interp)


def test_relative_guard():
    assert relative(3.0, 2.0) == 1.5
    assert relative(3.0, 0.0) == 3.0


def test_interpolant_of_coarse_function_is_not_identity(rough):
    mesh, pb, interp, _ = rough
    # I_H is not a projection, so the coarse interpolant of a hat differs from it
    hat = coarse_p1_basis(mesh)[:, 4].toarray().ravel()
    assert not np.allclose(coarse_interpolant(interp, mesh, hat), hat)
    ones = coarse_interpolant(interp, mesh, np.ones(pb.n_vertices))
    coarse_nodes = [mesh.fine.vertex_id(4 * i, 4 * j) for i in (1, 2, 3) for j in (1, 2, 3)]
    np.testing.assert_allclose(ones[coarse_nodes], 1.0, atol=1e-14)


def test_lod_beats_p1_on_constant_coefficient():
    mesh, pb, interp = setup(8, 3, constant(1.0))
    uh, _ = solve_galerkin(pb)
    k = default_layers(1 / 8)
    cs = compute_all(pb, interp, mesh, k)
    sol = solve_lod(pb, build_basis(mesh, cs), interp, mesh, k)
    _, u_p1, _ = solve_coarse_p1(pb, mesh)
    assert errors_vs_reference(pb, uh, sol).energy < errors_vs_reference(pb, uh, u_p1).energy


def test_cached_set_gives_same_solution(tmp_path, rough):
    mesh, pb, interp, cs = rough
    cs.save(tmp_path / "c.npz")
    back = CorrectorSet.load(tmp_path / "c.npz")
    a = solve_lod(pb, build_basis(mesh, cs), interp, mesh).fine
    b = solve_lod(pb, build_basis(mesh, back), interp, mesh).fine
    assert a.tobytes() == b.tobytes()
