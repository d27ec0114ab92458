"""Hybrid Finite Volume discretization with fracture-side face unknowns.

Matrix unknowns sit at cell centers and faces; a fracture face carries one
face unknown per side. Fracture unknowns sit at fracture face centers and
fracture edges. Gradients are the stabilized two-level SUSHI gradients on
cones (cell center, face) and, inside the fractures, (face center, edge).
Reconstructions are piecewise constant: u_K on K, u_sigma on sigma.
"""
from dataclasses import dataclass

import numpy as np

from . import quadrature
from .layout import (CELL, FRACTURE_FACE, FRACTURE_NODE, MATRIX_NODE, MATRIX_SIDE,
                     DofLayout, LocalBlocks, mf_coupling_blocks)
from .mesh import MeshError, cell_subdomains
from .model import eval_sources, interface_defect, intersection_mismatch
from .vag import _chunks, _tets_of, triangle_node_integrals

SQRT_D = np.sqrt(3.0)
SQRT_D_FRACTURE = np.sqrt(2.0)
PLANARITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class HfvDofLayout(DofLayout):
    face_dof: np.ndarray        # (nf,) shared dof of a non-fracture face or -1
    side_dof: np.ndarray        # (n_frac_faces, 2)
    fracture_face_offset: int
    fracture_edge_dof: np.ndarray   # (ne,) dof of a fracture edge or -1
    cell_dofs: np.ndarray       # (nc, 1 + nfc)
    face_dofs: np.ndarray       # (n_frac_faces, 1 + nvf): sigma, fracture edges


def check_planar_faces(mesh):
    """Reject faces whose vertices leave the face plane by > 1e-10 h."""
    p = mesh.vertices[mesh.face_nodes]
    dev = np.abs(np.einsum("fvc,fc->fv", p - mesh.face_centers[:, None], mesh.face_normals))
    h = np.linalg.norm(p - mesh.face_centers[:, None], axis=2).max()
    worst = int(np.argmax(dev.max(axis=1)))
    if dev[worst].max() > PLANARITY_TOL * h:
        raise MeshError(f"face {worst} is not planar (deviation {dev[worst].max():.3g})")


def hfv_dof_layout(mesh, fractures):
    check_planar_faces(mesh)
    nc, nfc = mesh.cell_faces.shape
    nvf = mesh.face_nodes.shape[1]
    nff = fractures.n_faces
    sub = cell_subdomains(mesh)
    is_frac = fractures.face_index >= 0
    plain = np.flatnonzero(~is_frac)
    nfe = fractures.edges.size

    face_off = nc
    side_off = face_off + plain.size
    ff_off = side_off + 2 * nff
    fe_off = ff_off + nff
    n = fe_off + nfe

    kind = np.empty(n, dtype=np.int64)
    kind[:nc] = CELL
    kind[face_off:side_off] = MATRIX_NODE
    kind[side_off:ff_off] = MATRIX_SIDE
    kind[ff_off:fe_off] = FRACTURE_FACE
    kind[fe_off:] = FRACTURE_NODE

    face_dof = np.full(mesh.n_faces, -1)
    face_dof[plain] = face_off + np.arange(plain.size)
    fcells = mesh.face_cells[fractures.faces]
    side_dof = np.where(fcells >= 0, side_off + 2 * np.arange(nff)[:, None] + np.arange(2), -1)
    edge_dof = np.full(mesh.n_edges, -1)
    edge_dof[fractures.edges] = fe_off + np.arange(nfe)
    mid = mesh.vertices[mesh.edges].mean(axis=1)

    anchor = np.empty((n, 3))
    anchor[:nc] = mesh.cell_centers
    anchor[face_off:side_off] = mesh.face_centers[plain]
    anchor[side_off:ff_off] = np.repeat(mesh.face_centers[fractures.faces], 2, axis=0)
    anchor[ff_off:fe_off] = mesh.face_centers[fractures.faces]
    anchor[fe_off:] = mid[fractures.edges]

    region = np.empty(n, dtype=np.int64)
    region[:nc] = sub
    region[face_off:side_off] = sub[mesh.face_cells[plain, 0]]
    region[side_off:ff_off] = sub[np.maximum(fcells, 0)].ravel()
    region[ff_off:fe_off] = fractures.fracture_id
    fedges = mesh.face_edges[fractures.faces]
    region[edge_dof[fedges.ravel()]] = np.repeat(fractures.fracture_id, nvf)

    side = np.full(n, -1)
    side[side_off:ff_off] = fractures.side.ravel()

    dirichlet = np.zeros(n, dtype=bool)
    dirichlet[face_off:side_off] = mesh.boundary_faces[plain]
    dirichlet[fe_off:] = mesh.boundary_edges[fractures.edges]

    cf = mesh.cell_faces
    fi = fractures.face_index[cf]
    pos = np.where(mesh.face_cells[cf, 0] == np.arange(nc)[:, None], 0, 1)
    cell_dofs = np.empty((nc, 1 + nfc), dtype=np.int64)
    cell_dofs[:, 0] = np.arange(nc)
    cell_dofs[:, 1:] = np.where(fi >= 0, side_dof[np.maximum(fi, 0), pos], face_dof[cf])
    face_dofs = np.concatenate([(ff_off + np.arange(nff))[:, None], edge_dof[fedges]], axis=1)

    return HfvDofLayout(
        scheme="hfv", kind=kind, dirichlet=dirichlet, anchor=anchor, region=region,
        side=side, n_cells=nc, face_dof=face_dof, side_dof=side_dof,
        fracture_face_offset=ff_off, fracture_edge_dof=edge_dof, cell_dofs=cell_dofs,
        face_dofs=face_dofs,
    )


# ---------------------------------------------------------------------------
# cone gradients: linear maps from the local values [u_center, u_1..u_m]

def cone_gradient_maps(center, measure, anchors, sizes, normals, sqrt_d, dim):
    """Stabilized cone gradients of a batch of cells (or faces).

    ``anchors`` (N, m, 3) are the face (edge) centers, ``sizes`` their
    measures, ``normals`` the outward unit normals. Returns ``(G, cone)``
    with ``G`` of shape (N, m, 3, 1 + m) (gradient on cone j as a linear map
    of the local values) and ``cone`` the cone measures.
    """
    N, m, _ = anchors.shape
    dist = np.einsum("nmc,nmc->nm", anchors - center[:, None], normals)
    if np.any(dist <= 0):
        raise MeshError("center not strictly inside its cell: nonpositive cone height")
    mean = np.zeros((N, 3, 1 + m))
    mean[:, :, 1:] = (sizes[:, :, None] * normals).transpose(0, 2, 1) / measure[:, None, None]
    mean[:, :, 0] = -mean[:, :, 1:].sum(axis=2)
    # residual R_j = sqrt_d / d_j (u_j - u_c - mean . (x_j - x_c))
    resid = -np.einsum("nmc,nck->nmk", anchors - center[:, None], mean)
    resid[:, np.arange(m), 1 + np.arange(m)] += 1.0
    resid[:, :, 0] -= 1.0
    resid *= (sqrt_d / dist)[:, :, None]
    G = mean[:, None] + normals[:, :, :, None] * resid[:, :, None, :]
    cone = sizes * dist / dim
    return G, cone


def _cell_cones(mesh, cells):
    cf = mesh.cell_faces[cells]
    return cone_gradient_maps(mesh.cell_centers[cells], mesh.cell_volumes[cells],
                              mesh.face_centers[cf], mesh.face_areas[cf],
                              mesh.cell_face_normals[cells], SQRT_D, 3)


def _face_cones(mesh, fractures):
    g = fractures.faces
    fe = mesh.face_edges[g]
    e = mesh.edges[fe]                                       # (nff, nvf, 2)
    a, b = mesh.vertices[e[..., 0]], mesh.vertices[e[..., 1]]
    mid = 0.5 * (a + b)
    length = np.linalg.norm(b - a, axis=2)
    nrm = np.cross(b - a, mesh.face_normals[g][:, None])
    nrm /= np.linalg.norm(nrm, axis=2, keepdims=True)
    xs = mesh.face_centers[g]
    flip = np.einsum("nmc,nmc->nm", mid - xs[:, None], nrm) < 0
    nrm[flip] *= -1
    return cone_gradient_maps(xs, mesh.face_areas[g], mid, length, nrm, SQRT_D_FRACTURE, 2)


def hfv_cell_matrix(bundle, layout, K_m):
    mesh = bundle.mesh
    nl = layout.cell_dofs.shape[1]
    mats = np.empty((mesh.n_cells, nl, nl))
    for cells in _chunks(mesh.n_cells):
        G, cone = _cell_cones(mesh, cells)
        lam = K_m[bundle.subdomain[cells]]
        mats[cells] = _weighted_gram(G, lam[:, None, :] * cone[:, :, None])
    return LocalBlocks(layout.cell_dofs, mats)


def _weighted_gram(G, weight):
    """sum_{j,d} weight[j, d] G[j, d, k] G[j, d, l] per leading index."""
    n, m, dim, nl = G.shape
    flat = G.reshape(n, m * dim, nl)
    return flat.transpose(0, 2, 1) @ (flat * weight.reshape(n, m * dim, 1))


def hfv_face_matrix(bundle, layout, K_f, d_f=1.0):
    fr = bundle.fractures
    G, cone = _face_cones(bundle.mesh, fr)
    w = d_f * K_f[fr.fracture_id]
    mats = _weighted_gram(G, np.broadcast_to(cone[:, :, None], G.shape[:3])) * w[:, None, None]
    return LocalBlocks(layout.face_dofs, mats)


def hfv_mf_coupling(bundle, layout, T_f, xi):
    """Coupling over [side-0 dof, side-1 dof, fracture face dof]; the
    coefficient of each face is (|sigma| T_f)/(2 xi - 1)."""
    fr = bundle.fractures
    area = bundle.mesh.face_areas[fr.faces]
    present = layout.side_dof >= 0
    mats = mf_coupling_blocks(area[:, None, None], T_f[fr.fracture_id], xi, present)
    dofs = np.concatenate([layout.side_dof, (layout.fracture_face_offset
                                             + np.arange(fr.n_faces))[:, None]], axis=1)
    return LocalBlocks(dofs, mats)


def hfv_mf_flux(area, T_f, xi, u_own, u_other, u_frac, two_sided=True):
    """Flux from one matrix side into the fracture face."""
    if not two_sided:
        return area * T_f * (u_own - u_frac)
    return area * T_f / (2 * xi - 1) * (xi * u_own + (1 - xi) * u_other - u_frac)


class HfvScheme:
    """HFV discretization of one problem on one mesh bundle."""

    name = "hfv"
    mode = "hfv"

    def __init__(self, bundle, data):
        self.bundle = bundle
        self.data = data
        self.layout = hfv_dof_layout(bundle.mesh, bundle.fractures)
        self.blocks = {
            "cell": hfv_cell_matrix(bundle, self.layout, data.K_m),
            "face": hfv_face_matrix(bundle, self.layout, data.K_f, data.d_f),
            "mf": hfv_mf_coupling(bundle, self.layout, data.T_f, data.xi),
        }

    def source_vector(self, case, rule="degree4"):
        bundle, sub, lay = self.bundle, self.bundle.sub, self.layout
        bary, w = quadrature.rule("tet", rule)
        rhs = np.zeros(lay.n_dofs)
        for cells in _chunks(bundle.mesh.n_cells):
            t = _tets_of(bundle, cells)
            pts = quadrature.points(sub.tet_points[t], bary)
            sd = np.repeat(bundle.subdomain[sub.tet_cell[t]], bary.shape[0])
            h = eval_sources(case, pts.reshape(-1, 3), "matrix", sd).reshape(pts.shape[:2])
            rhs[:lay.n_cells] += np.bincount(sub.tet_cell[t], (h @ w) * sub.tet_volumes[t],
                                             minlength=lay.n_cells)
        fr = bundle.fractures
        frac = fr.fracture_id[sub.tri_face]
        tri = triangle_node_integrals(
            sub.tri_points,
            lambda p, q: eval_sources(case, p, "fracture", np.repeat(frac, q)),
            rule=rule).sum(axis=1)
        dofs = lay.fracture_face_offset + sub.tri_face
        return rhs + np.bincount(dofs, tri * self.data.d_f, minlength=lay.n_dofs)

    def interface_defect_vector(self, case, rule="degree4"):
        sub, lay, fr = self.bundle.sub, self.layout, self.bundle.fractures
        rhs = np.zeros(lay.n_dofs)
        for c in range(2):
            sides = fr.side[sub.tri_face, c]
            ok = sides >= 0
            for part in (0, 1):
                vals = triangle_node_integrals(
                    sub.tri_points[ok],
                    lambda p, q, part=part: interface_defect(
                        case, p, np.repeat(sides[ok], q))[part],
                    rule=rule).sum(axis=1)
                if part == 0:
                    dofs = lay.side_dof[sub.tri_face[ok], c]
                else:
                    dofs = lay.fracture_face_offset + sub.tri_face[ok]
                rhs += np.bincount(dofs, vals, minlength=lay.n_dofs)
        return rhs

    def sigma_dofs(self):
        return self.layout.fracture_edge_dof[self.bundle.fractures.intersection_edges]

    def sigma_vector(self, case):
        mesh, fr = self.bundle.mesh, self.bundle.fractures
        e = mesh.edges[fr.intersection_edges]
        a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
        t, w = np.polynomial.legendre.leggauss(4)
        t, w = (t + 1) / 2, w / 2
        pts = a[:, None] + t[None, :, None] * (b - a)[:, None]
        q = intersection_mismatch(case, pts.reshape(-1, 3)).reshape(pts.shape[:2])
        integral = (q @ w) * np.linalg.norm(b - a, axis=1)
        return -np.bincount(self.sigma_dofs(), integral, minlength=self.layout.n_dofs)

    # -- reconstructions ---------------------------------------------------
    def matrix_pieces(self, u):
        bundle, sub, mesh = self.bundle, self.bundle.sub, self.bundle.mesh
        for cells in _chunks(mesh.n_cells):
            t = _tets_of(bundle, cells)
            G, _ = _cell_cones(mesh, cells)
            d = self.layout.cell_dofs[cells]
            grads = np.einsum("cjdk,ck->cjd", G, u[d])          # (n, nfc, 3)
            tc = sub.tet_cell[t]
            vals = np.repeat(u[tc][:, None], 4, axis=1)
            yield {
                "points": sub.tet_points[t],
                "volumes": sub.tet_volumes[t],
                "subdomain": bundle.subdomain[tc],
                "values": vals,
                "gradient": grads[tc - cells[0], sub.tet_face_slot[t]],
                "anchor": mesh.cell_centers[tc],
                "cell": tc,
            }

    def fracture_pieces(self, u):
        sub, lay, fr = self.bundle.sub, self.layout, self.bundle.fractures
        G, _ = _face_cones(self.bundle.mesh, fr)
        grads = np.einsum("fjdk,fk->fjd", G, u[lay.face_dofs])
        uf = u[lay.fracture_face_offset + sub.tri_face]
        return {
            "points": sub.tri_points,
            "areas": sub.tri_areas,
            "fracture": fr.fracture_id[sub.tri_face],
            "values": np.repeat(uf[:, None], 3, axis=1),
            "gradient": grads[sub.tri_face, sub.tri_edge_slot],
            "anchor": self.bundle.mesh.face_centers[fr.faces][sub.tri_face],
            "lumped": False,
        }

    def trace_pieces(self, u, c):
        sub, lay, fr = self.bundle.sub, self.layout, self.bundle.fractures
        d = lay.side_dof[sub.tri_face, c]
        vals = np.where(d >= 0, u[np.maximum(d, 0)], 0.0)
        return {
            "values": np.repeat(vals[:, None], 3, axis=1),
            "side": fr.side[sub.tri_face, c],
            "lumped": False,
        }
