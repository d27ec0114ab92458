import dataclasses

import numpy as np
import pytest

from fracdarcy.hfv import HfvScheme, check_planar_faces, hfv_dof_layout, hfv_mf_flux
from fracdarcy.layout import CELL, FRACTURE_FACE, FRACTURE_NODE, MATRIX_NODE, MATRIX_SIDE
from fracdarcy.mesh import MeshError, build_bundle
from fracdarcy.model import make_case


@pytest.mark.parametrize("n, dofs, eliminated", [(8, 2776, 2264), (16, 19248, 15152)])
def test_dof_counts(n, dofs, eliminated):
    b = build_bundle("cartesian", n)
    lay = hfv_dof_layout(b.mesh, b.fractures)
    assert (lay.n_dofs, lay.n_eliminated) == (dofs, eliminated)


def test_hand_enumerated_small_mesh():
    b = build_bundle("cartesian", 2)
    lay = hfv_dof_layout(b.mesh, b.fractures)
    matrix = sum(lay.count(k) for k in (CELL, MATRIX_NODE, MATRIX_SIDE))
    assert matrix == 8 + 36 + 8
    edges = np.unique(b.mesh.face_edges[b.fractures.faces])
    assert lay.count(FRACTURE_FACE) == 8
    assert lay.count(FRACTURE_NODE) == edges.size


def test_fracture_faces_get_two_side_dofs(hex4):
    lay = hfv_dof_layout(hex4.mesh, hex4.fractures)
    assert np.all(lay.side_dof >= 0)
    assert np.unique(lay.side_dof).size == lay.side_dof.size
    assert np.all(lay.face_dof[hex4.fractures.faces] == -1)


def test_rejects_non_planar_faces(hex4):
    m = hex4.mesh
    v = m.vertices.copy()
    inner = np.flatnonzero(np.abs(v).max(axis=1) < 0.4)[0]
    v[inner, 2] += 1e-3
    bent = dataclasses.replace(m, vertices=v)
    with pytest.raises(MeshError, match="not planar"):
        check_planar_faces(bent)
    check_planar_faces(m)


@pytest.mark.parametrize("kind", ["cartesian", "tetrahedral"])
def test_mean_gradient_geometric_identity(kind):
    m = build_bundle(kind, 4).mesh
    xs = m.face_centers[m.cell_faces] - m.cell_centers[:, None]
    lhs = np.einsum("kf,kfi,kfj->kij", m.face_areas[m.cell_faces], m.cell_face_normals, xs)
    ref = m.cell_volumes[:, None, None] * np.eye(3)
    assert np.abs(lhs - ref).max() < 1e-12


def _cone_energy(mesh, cell_dofs, K_m, subdomain, u):
    total = 0.0
    for k in range(mesh.n_cells):
        xk, vol = mesh.cell_centers[k], mesh.cell_volumes[k]
        uk = u[k]
        faces = mesh.cell_faces[k]
        uf = u[cell_dofs[k, 1:]]
        g = np.zeros(3)
        for j, f in enumerate(faces):
            g += mesh.face_areas[f] * (uf[j] - uk) * mesh.cell_face_normals[k, j]
        g /= vol
        for j, f in enumerate(faces):
            n = mesh.cell_face_normals[k, j]
            d = np.dot(mesh.face_centers[f] - xk, n)
            r = np.sqrt(3) / d * (uf[j] - uk - g @ (mesh.face_centers[f] - xk))
            gc = g + r * n
            total += mesh.face_areas[f] * d / 3 * np.dot(K_m[subdomain[k]] * gc, gc)
    return total


def test_cell_matrix_matches_cone_oracle():
    b = build_bundle("cartesian", 2)
    data = make_case("isotropic").data
    s = HfvScheme(b, data)
    u = np.random.default_rng(9).standard_normal(s.layout.n_dofs)
    blocks = s.blocks["cell"]
    energy = np.einsum("bi,bi->", blocks.apply(u), u[blocks.dofs])
    ref = _cone_energy(b.mesh, s.layout.cell_dofs, data.K_m, b.subdomain, u)
    assert energy == pytest.approx(ref, rel=1e-12)


def test_affine_energy_is_exact(hex4, iso):
    s = HfvScheme(hex4, iso.data)
    a = np.array([1.0, -2.0, 0.5])
    u = s.layout.anchor @ a
    blocks = s.blocks["cell"]
    energy = np.einsum("bi,bi->b", blocks.apply(u), u[blocks.dofs])
    lam = iso.data.K_m[hex4.subdomain]
    ref = hex4.mesh.cell_volumes * (lam * a * a).sum(axis=1)
    assert np.allclose(energy, ref, rtol=1e-12)


def test_mf_flux_examples():
    assert hfv_mf_flux(1.0, 1.0, 1.0, 2.0, 123.0, 0.5) == pytest.approx(1.5)
    assert hfv_mf_flux(1.0, 1.0, 1.0, 2.0, -7.0, 0.5) == pytest.approx(1.5)
    assert hfv_mf_flux(0.3, 4.0, 0.75, 1.1, 1.1, 1.1) == 0.0
    assert hfv_mf_flux(0.5, 2.0, 1.0, 3.0, 9.0, 1.0, two_sided=False) == pytest.approx(2.0)


def test_mf_block_matches_flux_evaluator(hex4):
    data = make_case("isotropic", xi=0.7).data
    s = HfvScheme(hex4, data)
    fr = hex4.fractures
    u = np.random.default_rng(2).standard_normal(s.layout.n_dofs)
    blocks = s.blocks["mf"]
    out = blocks.apply(u)
    d = blocks.dofs
    area = hex4.mesh.face_areas[fr.faces]
    T = data.T_f[fr.fracture_id]
    for c in range(2):
        ref = hfv_mf_flux(area, T, data.xi, u[d[:, c]], u[d[:, 1 - c]], u[d[:, 2]])
        assert np.allclose(out[:, c], ref, rtol=1e-12)
