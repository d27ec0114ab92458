"""Vertex Approximate Gradient discretization with fracture-side unknowns.

Matrix unknowns live at cell centers, at every vertex class (one per group
of cells around a vertex that can reach each other without crossing a
fracture) and on both sides of each fracture face. Fracture unknowns live at
fracture face centers and fracture vertices. Gradients are those of the P1
interpolant on the tetrahedral submesh; non-fracture face centers are
interpolated from their vertices.

Two reconstructions are offered: ``"fe"`` (conforming P1) and ``"cv"``
(piecewise constant on control volumes, lumped coupling mass).
"""
from dataclasses import dataclass

import numpy as np

from . import quadrature
from .layout import (CELL, FRACTURE_FACE, FRACTURE_NODE, MATRIX_NODE, MATRIX_SIDE,
                     DofLayout, LocalBlocks, mf_coupling_blocks, tet_gradients,
                     triangle_gradients)
from .mesh import cell_subdomains
from .model import eval_sources, interface_defect, intersection_mismatch

CV_VOLUME_FRACTION = 0.1
CHUNK = 1024


@dataclass(frozen=True, eq=False)
class VagDofLayout(DofLayout):
    side_dof: np.ndarray        # (n_frac_faces, 2) K_sigma dof of each adjacent cell
    class_offset: int
    fracture_face_offset: int
    fracture_vertex_dof: np.ndarray   # (nv,) dof of a fracture vertex or -1
    cell_dofs: np.ndarray       # (nc, 1 + nvc + nfc): cell, classes, K_sigma or -1
    face_dofs: np.ndarray       # (n_frac_faces, 1 + nvf): sigma, fracture vertices
    trace_dofs: np.ndarray      # (n_frac_faces, 2, 1 + nvf): K_sigma, classes at vertices


def _class_at(mesh, classes, cells, verts):
    """Class of ``cells[i]`` at vertex ``verts[i]``."""
    pos = np.argmax(mesh.cell_nodes[cells] == verts[:, None], axis=1)
    return classes.cell_class[cells, pos]


def vag_dof_layout(mesh, fractures, classes):
    nc, nvc = mesh.cell_nodes.shape
    nfc = mesh.cell_faces.shape[1]
    nvf = mesh.face_nodes.shape[1]
    nff = fractures.n_faces
    ncl = classes.n_classes
    nfv = fractures.vertices.size
    sub = cell_subdomains(mesh)
    bverts = mesh.boundary_vertices

    side_off = nc
    class_off = side_off + 2 * nff
    ff_off = class_off + ncl
    fv_off = ff_off + nff
    n = fv_off + nfv

    kind = np.empty(n, dtype=np.int64)
    kind[:nc] = CELL
    kind[side_off:class_off] = MATRIX_SIDE
    kind[class_off:ff_off] = MATRIX_NODE
    kind[ff_off:fv_off] = FRACTURE_FACE
    kind[fv_off:] = FRACTURE_NODE

    fcells = mesh.face_cells[fractures.faces]
    side_dof = np.where(fcells >= 0, side_off + 2 * np.arange(nff)[:, None] + np.arange(2), -1)
    fv_dof = np.full(mesh.n_vertices, -1)
    fv_dof[fractures.vertices] = fv_off + np.arange(nfv)

    anchor = np.empty((n, 3))
    anchor[:nc] = mesh.cell_centers
    anchor[side_off:class_off] = np.repeat(mesh.face_centers[fractures.faces], 2, axis=0)
    anchor[class_off:ff_off] = mesh.vertices[classes.class_vertex]
    anchor[ff_off:fv_off] = mesh.face_centers[fractures.faces]
    anchor[fv_off:] = mesh.vertices[fractures.vertices]

    region = np.empty(n, dtype=np.int64)
    region[:nc] = sub
    region[side_off:class_off] = sub[np.maximum(fcells, 0)].ravel()
    region[class_off + classes.cell_class.ravel()] = np.repeat(sub, nvc)
    region[ff_off:fv_off] = fractures.fracture_id
    fnodes = mesh.face_nodes[fractures.faces]
    region[fv_dof[fnodes.ravel()]] = np.repeat(fractures.fracture_id, nvf)

    side = np.full(n, -1)
    side[side_off:class_off] = fractures.side.ravel()

    dirichlet = np.zeros(n, dtype=bool)
    dirichlet[class_off:ff_off] = bverts[classes.class_vertex]
    dirichlet[fv_off:] = bverts[fractures.vertices]

    # per-cell stencil: the cell, its vertex classes, and K_sigma on fracture faces
    cell_dofs = np.full((nc, 1 + nvc + nfc), -1)
    cell_dofs[:, 0] = np.arange(nc)
    cell_dofs[:, 1:1 + nvc] = class_off + classes.cell_class
    fi = fractures.face_index[mesh.cell_faces]                  # (nc, nfc)
    k = np.arange(nc)[:, None]
    pos = np.where(mesh.face_cells[mesh.cell_faces, 0] == k, 0, 1)
    cell_dofs[:, 1 + nvc:] = np.where(fi >= 0, side_dof[np.maximum(fi, 0), pos], -1)

    face_dofs = np.concatenate([(ff_off + np.arange(nff))[:, None], fv_dof[fnodes]], axis=1)
    trace_dofs = np.full((nff, 2, 1 + nvf), -1)
    for c in range(2):
        ok = fcells[:, c] >= 0
        trace_dofs[ok, c, 0] = side_dof[ok, c]
        for i in range(nvf):
            trace_dofs[ok, c, 1 + i] = class_off + _class_at(
                mesh, classes, fcells[ok, c], fnodes[ok, i])

    return VagDofLayout(
        scheme="vag", kind=kind, dirichlet=dirichlet, anchor=anchor, region=region,
        side=side, n_cells=nc, side_dof=side_dof, class_offset=class_off,
        fracture_face_offset=ff_off, fracture_vertex_dof=fv_dof, cell_dofs=cell_dofs,
        face_dofs=face_dofs, trace_dofs=trace_dofs,
    )


# ---------------------------------------------------------------------------
# cell-level geometry: each cell has an "extended" node list
# [x_K, vertices (nvc), face centers (nfc)]; face centers are then expressed
# through the stencil [K, classes, K_sigma] by the map E.

def _tet_ext_nodes(bundle):
    mesh, sub = bundle.mesh, bundle.sub
    nvc = mesh.cell_nodes.shape[1]
    nvf = mesh.face_nodes.shape[1]
    p = mesh.cell_face_local_nodes
    c, j, e = sub.tet_cell, sub.tet_face_slot, sub.tet_edge_slot
    return np.stack([np.zeros_like(c), 1 + nvc + j, 1 + p[c, j, e],
                     1 + p[c, j, (e + 1) % nvf]], axis=1)


def _ext_map(bundle, cells):
    """E[K] (next x nloc) mapping stencil values to extended node values."""
    mesh, fr = bundle.mesh, bundle.fractures
    nvc = mesh.cell_nodes.shape[1]
    nfc = mesh.cell_faces.shape[1]
    nloc = 1 + nvc + nfc
    E = np.zeros((cells.size, nloc, nloc))
    idx = np.arange(1 + nvc)
    E[:, idx, idx] = 1.0
    p = mesh.cell_face_local_nodes[cells]                 # (n, nfc, nvf)
    is_frac = fr.face_index[mesh.cell_faces[cells]] >= 0   # (n, nfc)
    beta = mesh.face_beta[mesh.cell_faces[cells]]          # (n, nfc, nvf)
    rows = np.arange(cells.size)[:, None, None]
    frow = (1 + nvc + np.arange(nfc))[None, :, None]
    np.add.at(E, (np.broadcast_to(rows, p.shape), np.broadcast_to(frow, p.shape), 1 + p),
              np.where(is_frac[..., None], 0.0, beta))
    fr_r, fr_j = np.nonzero(is_frac)
    E[fr_r, 1 + nvc + fr_j, 1 + nvc + fr_j] = 1.0
    return E


def _chunks(n, size=CHUNK):
    for start in range(0, n, size):
        yield np.arange(start, min(start + size, n))


def _tets_of(bundle, cells):
    ntpc = bundle.sub.tet_cell.size // bundle.mesh.n_cells
    return (cells[:, None] * ntpc + np.arange(ntpc)).ravel()


def _scatter_ext(values, tet_local_cell, ext, n_cells, nloc):
    """Sum per-tet (4,) or (4, 4) contributions into per-cell ext arrays."""
    if values.ndim == 2:
        flat = tet_local_cell[:, None] * nloc + ext
        out = np.bincount(flat.ravel(), values.ravel(), minlength=n_cells * nloc)
        return out.reshape(n_cells, nloc)
    flat = (tet_local_cell[:, None, None] * nloc + ext[:, :, None]) * nloc + ext[:, None, :]
    out = np.bincount(flat.ravel(), values.ravel(), minlength=n_cells * nloc * nloc)
    return out.reshape(n_cells, nloc, nloc)


def vag_cell_matrix(bundle, layout, K_m):
    """Local stiffness of every cell over its stencil ``layout.cell_dofs``.

    ``K_m`` is the (4, 3) table of diagonal permeabilities per subdomain.
    """
    mesh, sub = bundle.mesh, bundle.sub
    nloc = layout.cell_dofs.shape[1]
    ext = _tet_ext_nodes(bundle)
    mats = np.empty((mesh.n_cells, nloc, nloc))
    for cells in _chunks(mesh.n_cells):
        t = _tets_of(bundle, cells)
        g = tet_gradients(sub.tet_points[t])
        lam = K_m[bundle.subdomain[sub.tet_cell[t]]]
        loc = np.einsum("tid,td,tjd->tij", g, lam, g) * sub.tet_volumes[t, None, None]
        S = _scatter_ext(loc, sub.tet_cell[t] - cells[0], ext[t], cells.size, nloc)
        E = _ext_map(bundle, cells)
        mats[cells] = E.transpose(0, 2, 1) @ S @ E
    return LocalBlocks(layout.cell_dofs, mats)


def vag_face_matrix(bundle, layout, K_f, d_f=1.0):
    """Tangential stiffness of every fracture face over [sigma, vertices]."""
    sub, fr = bundle.sub, bundle.fractures
    nvf = bundle.mesh.face_nodes.shape[1]
    g = triangle_gradients(sub.tri_points)
    w = sub.tri_areas * d_f * K_f[fr.fracture_id[sub.tri_face]]
    loc = np.einsum("tid,tjd->tij", g, g) * w[:, None, None]
    nodes = _tri_local_nodes(sub.tri_edge_slot, nvf)
    mats = _scatter_ext(loc, sub.tri_face, nodes, fr.n_faces, 1 + nvf)
    return LocalBlocks(layout.face_dofs, mats)


def _tri_local_nodes(eslot, nvf):
    return np.stack([np.zeros_like(eslot), 1 + eslot, 1 + (eslot + 1) % nvf], axis=1)


P1_TRI_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0
LUMPED_TRI_MASS = np.eye(3) / 3.0


def trace_mass(bundle, mode):
    """Mass matrix of each fracture face over its trace nodes [sigma, vertices]."""
    sub, fr = bundle.sub, bundle.fractures
    nvf = bundle.mesh.face_nodes.shape[1]
    ref = {"fe": P1_TRI_MASS, "cv": LUMPED_TRI_MASS}[mode]
    loc = sub.tri_areas[:, None, None] * ref
    nodes = _tri_local_nodes(sub.tri_edge_slot, nvf)
    return _scatter_ext(loc, sub.tri_face, nodes, fr.n_faces, 1 + nvf)


def vag_mf_coupling(bundle, layout, T_f, xi, mode):
    """Matrix-fracture coupling of every fracture face.

    The block acts on ``[side-0 trace nodes, side-1 trace nodes, fracture
    nodes]``; in ``"cv"`` mode only co-located nodes are coupled.
    """
    fr = bundle.fractures
    mass = trace_mass(bundle, mode)
    present = bundle.mesh.face_cells[fr.faces] >= 0
    mats = mf_coupling_blocks(mass, T_f[fr.fracture_id], xi, present)
    dofs = np.concatenate([layout.trace_dofs[:, 0], layout.trace_dofs[:, 1],
                           layout.face_dofs], axis=1)
    return LocalBlocks(dofs, mats)


# ---------------------------------------------------------------------------

class VagScheme:
    """VAG discretization of one problem on one mesh bundle."""

    def __init__(self, bundle, data, mode="fe"):
        if mode not in ("fe", "cv"):
            raise ValueError(f"unknown VAG variant {mode!r}")
        self.name = f"vag-{mode}"
        self.mode = mode
        self.bundle = bundle
        self.data = data
        self.layout = vag_dof_layout(bundle.mesh, bundle.fractures, bundle.classes)
        self.blocks = {
            "cell": vag_cell_matrix(bundle, self.layout, data.K_m),
            "face": vag_face_matrix(bundle, self.layout, data.K_f, data.d_f),
            "mf": vag_mf_coupling(bundle, self.layout, data.T_f, data.xi, mode),
        }

    # -- control volumes (lumped variant) ----------------------------------
    def cell_volume_split(self):
        """(omega_cell (nc,), omega_stencil (nc, nloc)) of the lumped partition."""
        mesh, lay = self.bundle.mesh, self.layout
        d = lay.cell_dofs[:, 1:]
        in_stencil = d >= 0
        free = in_stencil & ~lay.dirichlet[np.maximum(d, 0)]
        share = CV_VOLUME_FRACTION * mesh.cell_volumes / in_stencil.sum(axis=1)
        om = np.where(free, share[:, None], 0.0)
        return mesh.cell_volumes - om.sum(axis=1), om

    def face_area_split(self):
        fr, lay = self.bundle.fractures, self.layout
        area = self.bundle.mesh.face_areas[fr.faces]
        d = lay.face_dofs[:, 1:]
        free = ~lay.dirichlet[d]
        share = CV_VOLUME_FRACTION * area / d.shape[1]
        om = np.where(free, share[:, None], 0.0)
        return area - om.sum(axis=1), om

    # -- right-hand sides ---------------------------------------------------
    def source_vector(self, case, rule="degree4"):
        n = self.layout.n_dofs
        if self.mode == "cv":
            return self._lumped_sources(case, rule)
        bundle, sub = self.bundle, self.bundle.sub
        bary, w = quadrature.rule("tet", rule)
        ext = _tet_ext_nodes(bundle)
        nloc = self.layout.cell_dofs.shape[1]
        rhs = np.zeros(n)
        for cells in _chunks(bundle.mesh.n_cells):
            t = _tets_of(bundle, cells)
            pts = quadrature.points(sub.tet_points[t], bary)
            sd = np.repeat(bundle.subdomain[sub.tet_cell[t]], bary.shape[0])
            h = eval_sources(case, pts.reshape(-1, 3), "matrix", sd).reshape(pts.shape[:2])
            loc = np.einsum("tq,q,qa->ta", h, w, bary) * sub.tet_volumes[t, None]
            S = _scatter_ext(loc, sub.tet_cell[t] - cells[0], ext[t], cells.size, nloc)
            E = _ext_map(bundle, cells)
            local = np.einsum("cai,ca->ci", E, S)
            rhs += LocalBlocks(self.layout.cell_dofs[cells], None).scatter(local, n)
        tri = triangle_node_integrals(
            sub.tri_points, _fracture_source(case, bundle.fractures.fracture_id[sub.tri_face]),
            lumped=False, rule=rule) * self.data.d_f
        nodes = _tri_local_nodes(sub.tri_edge_slot, bundle.mesh.face_nodes.shape[1])
        fl = _scatter_ext(tri, sub.tri_face, nodes, bundle.fractures.n_faces, nodes.max() + 1)
        return rhs + LocalBlocks(self.layout.face_dofs, None).scatter(fl, n)

    def _lumped_sources(self, case, rule):
        bundle, lay, sub = self.bundle, self.layout, self.bundle.sub
        n = lay.n_dofs
        bary, w = quadrature.rule("tet", rule)
        vol = bundle.mesh.cell_volumes
        mean = np.zeros(bundle.mesh.n_cells)
        for cells in _chunks(bundle.mesh.n_cells):
            t = _tets_of(bundle, cells)
            pts = quadrature.points(sub.tet_points[t], bary)
            sd = np.repeat(bundle.subdomain[sub.tet_cell[t]], bary.shape[0])
            h = eval_sources(case, pts.reshape(-1, 3), "matrix", sd).reshape(pts.shape[:2])
            mean += np.bincount(sub.tet_cell[t], (h @ w) * sub.tet_volumes[t],
                                minlength=mean.size)
        mean /= vol
        om_c, om = self.cell_volume_split()
        local = np.concatenate([om_c[:, None], om], axis=1) * mean[:, None]
        rhs = LocalBlocks(lay.cell_dofs, None).scatter(local, n)

        fr = bundle.fractures
        tri = triangle_node_integrals(
            sub.tri_points, _fracture_source(case, fr.fracture_id[sub.tri_face]),
            lumped=False, rule=rule).sum(axis=1)
        area = bundle.mesh.face_areas[fr.faces]
        fmean = np.bincount(sub.tri_face, tri, minlength=fr.n_faces) / area
        om_f, omv = self.face_area_split()
        local = np.concatenate([om_f[:, None], omv], axis=1) * fmean[:, None] * self.data.d_f
        return rhs + LocalBlocks(lay.face_dofs, None).scatter(local, n)

    def interface_defect_vector(self, case, rule="degree4"):
        bundle, lay, sub = self.bundle, self.layout, self.bundle.sub
        fr = bundle.fractures
        nvf = bundle.mesh.face_nodes.shape[1]
        n = lay.n_dofs
        nodes = _tri_local_nodes(sub.tri_edge_slot, nvf)
        rhs = np.zeros(n)
        for c in range(2):
            sides = fr.side[sub.tri_face, c]
            ok = sides >= 0
            for part, dofs in ((0, lay.trace_dofs[:, c]), (1, lay.face_dofs)):
                def f(pts, q, part=part):
                    s = np.repeat(sides[ok], q)
                    return interface_defect(case, pts, s)[part]
                vals = triangle_node_integrals(sub.tri_points[ok], f,
                                               lumped=self.mode == "cv", rule=rule)
                loc = _scatter_ext(vals, sub.tri_face[ok], nodes[ok], fr.n_faces, 1 + nvf)
                keep = (dofs >= 0) & (fr.side[:, c:c + 1] >= 0)
                rhs += np.bincount(dofs[keep], loc[keep], minlength=n)
        return rhs

    def sigma_dofs(self):
        """Fracture dofs sitting on the intersection line."""
        return self.layout.fracture_vertex_dof[self.bundle.fractures.intersection_vertices]

    def sigma_vector(self, case):
        """-(line integral of the intersection defect against the P1 hats)."""
        mesh, fr = self.bundle.mesh, self.bundle.fractures
        e = mesh.edges[fr.intersection_edges]
        a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
        t, w = np.polynomial.legendre.leggauss(4)
        t, w = (t + 1) / 2, w / 2
        pts = a[:, None] + t[None, :, None] * (b - a)[:, None]
        q = intersection_mismatch(case, pts.reshape(-1, 3)).reshape(pts.shape[:2])
        length = np.linalg.norm(b - a, axis=1)
        ia = (q * (1 - t) * w).sum(axis=1) * length
        ib = (q * t * w).sum(axis=1) * length
        dofs = self.layout.fracture_vertex_dof[e]
        n = self.layout.n_dofs
        return -np.bincount(dofs.ravel(), np.column_stack([ia, ib]).ravel(), minlength=n)

    # -- reconstructions ---------------------------------------------------
    def matrix_pieces(self, u):
        """Yield per-chunk sub-tetrahedra with P1 node values and gradients."""
        bundle, sub = self.bundle, self.bundle.sub
        ext = _tet_ext_nodes(bundle)
        for cells in _chunks(bundle.mesh.n_cells):
            t = _tets_of(bundle, cells)
            E = _ext_map(bundle, cells)
            d = self.layout.cell_dofs[cells]
            ul = np.where(d >= 0, u[np.maximum(d, 0)], 0.0)
            ue = np.einsum("cai,ci->ca", E, ul)
            vals = ue[sub.tet_cell[t] - cells[0]]
            vals = np.take_along_axis(vals, ext[t], axis=1)
            g = tet_gradients(sub.tet_points[t])
            yield {
                "points": sub.tet_points[t],
                "volumes": sub.tet_volumes[t],
                "subdomain": bundle.subdomain[sub.tet_cell[t]],
                "values": vals,
                "gradient": np.einsum("ta,tad->td", vals, g),
                "cell": sub.tet_cell[t],
            }

    def lumped_matrix_values(self, u):
        """Control-volume weights, values and anchor points of the CV
        reconstruction in the matrix."""
        lay, mesh = self.layout, self.bundle.mesh
        om_c, om = self.cell_volume_split()
        d = lay.cell_dofs[:, 1:]
        keep = om > 0
        sub = self.bundle.subdomain
        return {
            "weights": np.concatenate([om_c, om[keep]]),
            "values": np.concatenate([u[:mesh.n_cells], u[d[keep]]]),
            "points": np.concatenate([mesh.cell_centers, lay.anchor[d[keep]]]),
            "subdomain": np.concatenate([sub, np.broadcast_to(sub[:, None], d.shape)[keep]]),
        }

    def lumped_fracture_values(self, u):
        """Same as :meth:`lumped_matrix_values` on the fracture faces."""
        lay, fr = self.layout, self.bundle.fractures
        om_f, om = self.face_area_split()
        d = lay.face_dofs[:, 1:]
        keep = om > 0
        fid = fr.fracture_id
        return {
            "weights": np.concatenate([om_f, om[keep]]),
            "values": np.concatenate([u[lay.face_dofs[:, 0]], u[d[keep]]]),
            "points": np.concatenate([self.bundle.mesh.face_centers[fr.faces],
                                      lay.anchor[d[keep]]]),
            "fracture": np.concatenate([fid, np.broadcast_to(fid[:, None], d.shape)[keep]]),
        }

    def fracture_pieces(self, u):
        sub, lay = self.bundle.sub, self.layout
        nodes = _tri_local_nodes(sub.tri_edge_slot, self.bundle.mesh.face_nodes.shape[1])
        vals = u[np.take_along_axis(lay.face_dofs[sub.tri_face], nodes, axis=1)]
        g = triangle_gradients(sub.tri_points)
        return {
            "points": sub.tri_points,
            "areas": sub.tri_areas,
            "fracture": self.bundle.fractures.fracture_id[sub.tri_face],
            "values": vals,
            "gradient": np.einsum("ta,tad->td", vals, g),
            "lumped": self.mode == "cv",
        }

    def trace_pieces(self, u, c):
        """Trace reconstruction on side slot ``c`` of every fracture triangle."""
        sub, lay = self.bundle.sub, self.layout
        nodes = _tri_local_nodes(sub.tri_edge_slot, self.bundle.mesh.face_nodes.shape[1])
        d = np.take_along_axis(lay.trace_dofs[sub.tri_face, c], nodes, axis=1)
        side = self.bundle.fractures.side[sub.tri_face, c]
        return {
            "values": np.where(d >= 0, u[np.maximum(d, 0)], 0.0),
            "side": side,
            "lumped": self.mode == "cv",
        }


def _fracture_source(case, tri_fracture):
    def f(pts, q):
        return eval_sources(case, pts, "fracture", np.repeat(tri_fracture, q))
    return f


def triangle_node_integrals(tri_points, func, lumped=False, rule="degree4"):
    """Integrals of ``func`` against the three nodal test functions of each
    triangle: P1 hats, or indicators of the corner thirds when ``lumped``.

    ``func(points (N*q, 3), q)`` returns values at the flattened points.
    """
    bary, w = quadrature.rule("tri", rule)
    q = w.size
    if not lumped:
        pts = quadrature.points(tri_points, bary)
        vals = func(pts.reshape(-1, 3), q).reshape(pts.shape[:2])
        area = 0.5 * np.linalg.norm(np.cross(tri_points[:, 1] - tri_points[:, 0],
                                             tri_points[:, 2] - tri_points[:, 0]), axis=1)
        return np.einsum("tq,q,qa->ta", vals, w, bary) * area[:, None]
    out = np.zeros(tri_points.shape[:2])
    g = tri_points.mean(axis=1)
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        for other in (a, b):
            m = 0.5 * (tri_points[:, c] + tri_points[:, other])
            sub = np.stack([tri_points[:, c], m, g], axis=1)
            pts = quadrature.points(sub, bary)
            vals = func(pts.reshape(-1, 3), q).reshape(pts.shape[:2])
            area = 0.5 * np.linalg.norm(np.cross(sub[:, 1] - sub[:, 0], sub[:, 2] - sub[:, 0]),
                                        axis=1)
            out[:, c] += (vals @ w) * area
    return out
