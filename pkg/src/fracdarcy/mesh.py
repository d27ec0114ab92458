"""Fracture-conforming meshes of the cube (-0.5, 0.5)^3.

Meshes are stored as flat numpy arrays. Every cell of a given mesh has the
same number of vertices and faces, and every face the same number of
vertices (hexahedra with quadrilateral faces, or tetrahedra with triangular
faces), which keeps the connectivity tables rectangular.
"""
from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import connected_components

DOMAIN_SIZE = 1.0
GEOM_EPS = 1e-12 * DOMAIN_SIZE

# local faces of the reference hexahedron (VTK vertex order), listed so that
# the loop is counter-clockwise seen from outside
HEX_FACES = np.array([
    [0, 3, 2, 1],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [1, 2, 6, 5],
    [2, 3, 7, 6],
    [3, 0, 4, 7],
])
TET_FACES = np.array([
    [1, 2, 3],
    [0, 3, 2],
    [0, 1, 3],
    [0, 2, 1],
])

# fracture labels in the order 12, 23, 34, 14
FRACTURE_NAMES = ("12", "23", "34", "14")
# normal of the plane containing each fracture
FRACTURE_PLANE_NORMALS = np.array([
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
])


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Polyhedral mesh with its connectivity and geometry.

    Face vertex loops are ordered; ``face_edges[f, i]`` is the edge joining
    ``face_nodes[f, i]`` and ``face_nodes[f, (i + 1) % nvf]``.
    """

    kind: str
    n: int
    vertices: np.ndarray        # (nv, 3)
    cell_nodes: np.ndarray      # (nc, nvc)
    cell_faces: np.ndarray      # (nc, nfc)
    cell_face_normals: np.ndarray  # (nc, nfc, 3), outward unit normal n_{K,sigma}
    face_nodes: np.ndarray      # (nf, nvf)
    face_cells: np.ndarray      # (nf, 2), -1 for the missing neighbour
    face_edges: np.ndarray      # (nf, nvf)
    edges: np.ndarray           # (ne, 2)
    cell_centers: np.ndarray
    cell_volumes: np.ndarray
    face_centers: np.ndarray
    face_areas: np.ndarray
    face_normals: np.ndarray    # unit normal pointing from face_cells[:, 0] to [:, 1]

    @property
    def n_cells(self):
        return self.cell_nodes.shape[0]

    @property
    def n_faces(self):
        return self.face_nodes.shape[0]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def boundary_faces(self):
        return self.face_cells[:, 1] < 0

    @property
    def boundary_vertices(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.face_nodes[self.boundary_faces].ravel()] = True
        return mask

    @property
    def boundary_edges(self):
        mask = np.zeros(self.n_edges, dtype=bool)
        mask[self.face_edges[self.boundary_faces].ravel()] = True
        return mask

    @property
    def face_beta(self):
        """Convex weights of the face center w.r.t. the face vertices."""
        nvf = self.face_nodes.shape[1]
        return np.full(self.face_nodes.shape, 1.0 / nvf)

    @cached_property
    def cell_face_local_nodes(self):
        """Position of each face vertex inside its cell's vertex list.

        Returns an (nc, nfc, nvf) array ``p`` with
        ``cell_nodes[K, p[K, j, i]] == face_nodes[cell_faces[K, j], i]``.
        """
        fn = self.face_nodes[self.cell_faces]            # (nc, nfc, nvf)
        cn = self.cell_nodes[:, None, None, :]           # (nc, 1, 1, nvc)
        match = fn[..., None] == cn
        return np.argmax(match, axis=-1)


@dataclass(frozen=True, eq=False)
class FractureNetwork:
    """Fracture faces of the four-fracture cross x = 0 / y = 0.

    ``faces`` lists the fracture faces; ``fracture_id[j]`` is the fracture of
    ``faces[j]`` (0..3 for 12, 23, 34, 14). ``side[j, c]`` is the side label
    of the cell ``mesh.face_cells[faces[j], c]``: side ``2 i`` is the side whose
    outward normal equals the plane normal of fracture ``i``, side ``2 i + 1``
    the opposite one.
    """

    faces: np.ndarray
    fracture_id: np.ndarray
    side: np.ndarray
    face_index: np.ndarray      # (nf,) position in ``faces`` or -1
    edges: np.ndarray           # E_Gamma
    vertices: np.ndarray        # V_Gamma
    intersection_vertices: np.ndarray
    intersection_edges: np.ndarray

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def side_normal(self, side):
        side = np.asarray(side)
        sign = np.where(side % 2 == 0, 1.0, -1.0)
        return sign[..., None] * FRACTURE_PLANE_NORMALS[side // 2]


@dataclass(frozen=True, eq=False)
class Submeshes:
    """Tetrahedra D_{K,sigma,e} and fracture triangles T_{sigma,e}."""

    tet_cell: np.ndarray        # (nT,)
    tet_face_slot: np.ndarray   # (nT,) local face index in the cell
    tet_edge_slot: np.ndarray   # (nT,) local edge index in the face loop
    tet_points: np.ndarray      # (nT, 4, 3) = x_K, x_sigma, x_s, x_s'
    tet_volumes: np.ndarray
    tri_face: np.ndarray        # (nTr,) index into the fracture face list
    tri_edge_slot: np.ndarray
    tri_points: np.ndarray      # (nTr, 3, 3) = x_sigma, x_s, x_s'
    tri_areas: np.ndarray
    h: float
    theta: float

    def tri_thirds(self):
        """Corner regions T_1, T_2, T_3 of every fracture triangle.

        Each region is the quadrilateral (corner, edge midpoint, barycenter,
        edge midpoint), returned as two triangles: shape (nTr, 3, 2, 3, 3)
        indexed by [triangle, corner, half, vertex, coord].
        """
        p = self.tri_points
        g = p.mean(axis=1)
        out = np.empty(p.shape[:1] + (3, 2, 3, 3))
        for c in range(3):
            a, b = (c + 1) % 3, (c + 2) % 3
            m_ab = 0.5 * (p[:, c] + p[:, a])
            m_ac = 0.5 * (p[:, c] + p[:, b])
            out[:, c, 0] = np.stack([p[:, c], m_ab, g], axis=1)
            out[:, c, 1] = np.stack([p[:, c], g, m_ac], axis=1)
        return out


@dataclass(frozen=True, eq=False)
class VertexClasses:
    """Equivalence classes of the cells around each vertex.

    ``cell_class[K, i]`` is the global class id of the cell ``K`` at its
    ``i``-th vertex; ``class_vertex[c]`` the vertex of class ``c``.
    """

    cell_class: np.ndarray      # (nc, nvc)
    class_vertex: np.ndarray    # (n_classes,)

    @property
    def n_classes(self):
        return self.class_vertex.shape[0]

    def classes_per_vertex(self, n_vertices):
        return np.bincount(self.class_vertex, minlength=n_vertices)


def _check_n(n):
    if not isinstance(n, (int, np.integer)) or n < 2 or n % 2:
        raise MeshError(
            f"cells per axis must be an even integer >= 2 (got {n!r}): "
            "the fracture planes x=0 and y=0 have to be unions of faces")


def _grid_vertices(n):
    t = np.linspace(-0.5, 0.5, n + 1)
    z, y, x = np.meshgrid(t, t, t, indexing="ij")
    return np.column_stack([x.ravel(), y.ravel(), z.ravel()])


def _hex_corners(n):
    """(n^3, 8) vertex ids of the grid hexahedra in VTK order."""
    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    i, j, k = (a.transpose(2, 1, 0).ravel() for a in (i, j, k))
    m = n + 1

    def vid(di, dj, dk):
        return (i + di) + m * ((j + dj) + m * (k + dk))

    return np.column_stack([
        vid(0, 0, 0), vid(1, 0, 0), vid(1, 1, 0), vid(0, 1, 0),
        vid(0, 0, 1), vid(1, 0, 1), vid(1, 1, 1), vid(0, 1, 1),
    ])


def build_cartesian_mesh(n):
    """Uniform n x n x n hexahedral mesh of (-0.5, 0.5)^3."""
    _check_n(n)
    return _finalize("cartesian", n, _grid_vertices(n), _hex_corners(n), HEX_FACES)


def build_tetrahedral_mesh(n):
    """Kuhn subdivision of the n^3 grid: 6 tetrahedra per hexahedron.

    Every cube is cut along its 000-111 diagonal, so the split of each shared
    square face is the same seen from both cubes and the mesh is conforming.
    """
    _check_n(n)
    hexes = _hex_corners(n)
    # position of corner (bx, by, bz) in the VTK ordering
    vtk_pos = {(0, 0, 0): 0, (1, 0, 0): 1, (1, 1, 0): 2, (0, 1, 0): 3,
               (0, 0, 1): 4, (1, 0, 1): 5, (1, 1, 1): 6, (0, 1, 1): 7}
    tets = []
    for perm in permutations(range(3)):
        path = [(0, 0, 0)]
        b = [0, 0, 0]
        for axis in perm:
            b[axis] = 1
            path.append(tuple(b))
        tets.append([vtk_pos[p] for p in path])
    cells = hexes[:, np.array(tets)].reshape(-1, 4)
    return _finalize("tetrahedral", n, _grid_vertices(n), cells, TET_FACES)


def _polygon_geometry(points):
    """Center (vertex barycenter), area and unit normal of planar polygons.

    ``points`` has shape (..., m, 3). The normal follows the loop orientation.
    """
    center = points.mean(axis=-2)
    nxt = np.roll(points, -1, axis=-2)
    cross = np.cross(points - center[..., None, :], nxt - center[..., None, :])
    area_vec = 0.5 * cross.sum(axis=-2)
    area = 0.5 * np.linalg.norm(cross, axis=-1).sum(axis=-1)
    normal = area_vec / np.linalg.norm(area_vec, axis=-1, keepdims=True)
    return center, area, normal


def _finalize(kind, n, vertices, cells, local_faces):
    nc, nvc = cells.shape
    nfc, nvf = local_faces.shape
    all_faces = cells[:, local_faces].reshape(-1, nvf)      # (nc*nfc, nvf)
    keys = np.sort(all_faces, axis=1)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    face_nodes = all_faces[first]
    nf = face_nodes.shape[0]
    cell_faces = inverse.reshape(nc, nfc)

    owner = np.repeat(np.arange(nc), nfc)
    counts = np.bincount(inverse, minlength=nf)
    if counts.max() > 2:
        raise MeshError("non-manifold mesh: a face is shared by more than two cells")
    face_cells = np.full((nf, 2), -1, dtype=np.int64)
    order = np.argsort(inverse, kind="stable")
    sorted_faces = inverse[order]
    starts = np.searchsorted(sorted_faces, np.arange(nf))
    face_cells[:, 0] = owner[order[starts]]
    two = counts == 2
    face_cells[two, 1] = owner[order[starts[two] + 1]]

    # edges
    fe = np.stack([face_nodes, np.roll(face_nodes, -1, axis=1)], axis=-1).reshape(-1, 2)
    ekeys = np.sort(fe, axis=1)
    edges, einv = np.unique(ekeys, axis=0, return_inverse=True)
    face_edges = einv.ravel().reshape(nf, nvf)

    # geometry
    face_pts = vertices[face_nodes]
    face_centers, face_areas, face_normals = _polygon_geometry(face_pts)
    cell_centers = vertices[cells].mean(axis=1)
    # orient face normals from face_cells[:, 0] outward
    out = np.einsum("ij,ij->i", face_centers - cell_centers[face_cells[:, 0]], face_normals)
    face_normals = face_normals * np.sign(out)[:, None]

    n_kf = face_normals[cell_faces]
    sign = np.where(face_cells[cell_faces, 0] == np.arange(nc)[:, None], 1.0, -1.0)
    cell_face_normals = n_kf * sign[..., None]

    # |K| as the sum of the pyramids (x_K, sigma)
    d_ks = np.einsum("kfi,kfi->kf", face_centers[cell_faces] - cell_centers[:, None, :],
                     cell_face_normals)
    cell_volumes = (face_areas[cell_faces] * d_ks).sum(axis=1) / 3.0

    return Mesh(
        kind=kind, n=int(n), vertices=vertices, cell_nodes=cells, cell_faces=cell_faces,
        cell_face_normals=cell_face_normals, face_nodes=face_nodes, face_cells=face_cells,
        face_edges=face_edges, edges=edges, cell_centers=cell_centers,
        cell_volumes=cell_volumes, face_centers=face_centers, face_areas=face_areas,
        face_normals=face_normals,
    )


def subdomain_of(points):
    """Index 0..3 of the quadrant Omega_1..Omega_4 containing each point."""
    points = np.atleast_2d(points)
    x, y = points[:, 0], points[:, 1]
    return np.where(y > 0, np.where(x < 0, 0, 1), np.where(x > 0, 2, 3))


def cell_subdomains(mesh):
    return subdomain_of(mesh.cell_centers)


def tag_fracture_network(mesh):
    """Tag the faces lying on the four half-planes of the fracture cross."""
    xc = mesh.face_centers
    interior = mesh.face_cells[:, 1] >= 0
    on_x = np.abs(xc[:, 0]) <= GEOM_EPS
    on_y = np.abs(xc[:, 1]) <= GEOM_EPS
    fid = np.full(mesh.n_faces, -1)
    fid[on_x & (xc[:, 1] > 0)] = 0
    fid[on_y & (xc[:, 0] > 0)] = 1
    fid[on_x & (xc[:, 1] < 0)] = 2
    fid[on_y & (xc[:, 0] < 0)] = 3
    fid[~interior] = -1

    # the faces must tile each half-plane (area 1 x 0.5)
    for i in range(4):
        area = mesh.face_areas[fid == i].sum()
        if abs(area - 0.5) > 1e-10:
            raise MeshError(
                f"fracture {FRACTURE_NAMES[i]} is not a union of mesh faces "
                f"(covered area {area:.6g}, expected 0.5)")
    # faces must be flat on the plane, not just centred on it
    planes = np.where(fid >= 0, np.where(fid % 2 == 0, 0, 1), 0)
    coords = mesh.vertices[mesh.face_nodes][np.arange(mesh.n_faces), :, planes]
    bad = (fid >= 0) & (np.abs(coords).max(axis=1) > GEOM_EPS)
    if bad.any():
        raise MeshError("fracture face not contained in its plane")

    faces = np.flatnonzero(fid >= 0)
    face_index = np.full(mesh.n_faces, -1)
    face_index[faces] = np.arange(faces.size)
    frac = fid[faces]

    side = np.full((faces.size, 2), -1)
    for c in range(2):
        cells = mesh.face_cells[faces, c]
        ok = cells >= 0
        # outward normal of that cell on the face
        nrm = mesh.face_normals[faces] * (1.0 if c == 0 else -1.0)
        s = np.einsum("ij,ij->i", nrm, FRACTURE_PLANE_NORMALS[frac])
        side[ok, c] = 2 * frac[ok] + np.where(s[ok] > 0, 0, 1)

    fedges = np.unique(mesh.face_edges[faces].ravel())
    fverts = np.unique(mesh.face_nodes[faces].ravel())
    v = mesh.vertices
    on_axis = (np.abs(v[:, 0]) <= GEOM_EPS) & (np.abs(v[:, 1]) <= GEOM_EPS)
    ivert = np.flatnonzero(on_axis)
    iedge = np.flatnonzero(on_axis[mesh.edges[:, 0]] & on_axis[mesh.edges[:, 1]])
    return FractureNetwork(
        faces=faces, fracture_id=frac, side=side, face_index=face_index,
        edges=fedges, vertices=fverts, intersection_vertices=ivert,
        intersection_edges=iedge,
    )


def compute_vertex_classes(mesh, fractures):
    """Partition the cells around each vertex by connectivity across
    non-fracture faces containing that vertex."""
    nc, nvc = mesh.cell_nodes.shape
    node_id = np.arange(nc * nvc).reshape(nc, nvc)
    is_frac = fractures.face_index >= 0
    links = np.flatnonzero((mesh.face_cells[:, 1] >= 0) & ~is_frac)

    rows, cols = [], []
    nvf = mesh.face_nodes.shape[1]
    k0 = mesh.face_cells[links, 0]
    k1 = mesh.face_cells[links, 1]
    for i in range(nvf):
        s = mesh.face_nodes[links, i]
        p0 = np.argmax(mesh.cell_nodes[k0] == s[:, None], axis=1)
        p1 = np.argmax(mesh.cell_nodes[k1] == s[:, None], axis=1)
        rows.append(node_id[k0, p0])
        cols.append(node_id[k1, p1])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = sps.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(nc * nvc, nc * nvc))
    _, labels = connected_components(graph, directed=False)

    # renumber classes by (vertex, first appearance) for a stable layout
    vert = mesh.cell_nodes.ravel()
    order = np.lexsort((labels, vert))
    lab_sorted = labels[order]
    new = np.full(labels.max() + 1, -1)
    first = np.ones(order.size, dtype=bool)
    first[1:] = lab_sorted[1:] != lab_sorted[:-1]
    # labels of one component are contiguous in ``order`` because all its
    # nodes share the same vertex
    uniq = lab_sorted[first]
    new[uniq] = np.arange(uniq.size)
    cell_class = new[labels].reshape(nc, nvc)
    class_vertex = np.empty(uniq.size, dtype=np.int64)
    class_vertex[cell_class.ravel()] = vert
    return VertexClasses(cell_class=cell_class, class_vertex=class_vertex)


def _tet_volumes(p):
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    c = p[:, 3] - p[:, 0]
    return np.abs(np.einsum("ij,ij->i", a, np.cross(b, c))) / 6.0


def _tri_areas(p):
    return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)


def _max_pair_distance(p):
    m = p.shape[1]
    d = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            d = np.maximum(d, np.linalg.norm(p[:, i] - p[:, j], axis=1))
    return d


def build_submeshes(mesh, fractures):
    """Tetrahedral submesh of the cells and triangulation of the fractures."""
    nc, nfc = mesh.cell_faces.shape
    nvf = mesh.face_nodes.shape[1]
    cell = np.repeat(np.arange(nc), nfc * nvf)
    fslot = np.tile(np.repeat(np.arange(nfc), nvf), nc)
    eslot = np.tile(np.arange(nvf), nc * nfc)
    face = mesh.cell_faces[cell, fslot]
    s0 = mesh.face_nodes[face, eslot]
    s1 = mesh.face_nodes[face, (eslot + 1) % nvf]
    pts = np.stack([mesh.cell_centers[cell], mesh.face_centers[face],
                    mesh.vertices[s0], mesh.vertices[s1]], axis=1)
    vol = _tet_volumes(pts)
    if vol.min() <= 1e-14 * mesh.cell_volumes.max():
        raise MeshError("degenerate sub-tetrahedron (zero volume)")

    ff = fractures.faces
    tri_face = np.repeat(np.arange(ff.size), nvf)
    tri_eslot = np.tile(np.arange(nvf), ff.size)
    g = ff[tri_face]
    tpts = np.stack([mesh.face_centers[g],
                     mesh.vertices[mesh.face_nodes[g, tri_eslot]],
                     mesh.vertices[mesh.face_nodes[g, (tri_eslot + 1) % nvf]]], axis=1)
    tarea = _tri_areas(tpts)

    h_d = _max_pair_distance(pts)
    face_area_sum = sum(
        _tri_areas(pts[:, [a, b, c]]) for a, b, c in ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)))
    rho = 2.0 * 3.0 * vol / face_area_sum          # insphere diameter
    return Submeshes(
        tet_cell=cell, tet_face_slot=fslot, tet_edge_slot=eslot, tet_points=pts,
        tet_volumes=vol, tri_face=tri_face, tri_edge_slot=tri_eslot, tri_points=tpts,
        tri_areas=tarea, h=float(h_d.max()), theta=float((h_d / rho).max()),
    )


@dataclass(frozen=True, eq=False)
class MeshBundle:
    """A mesh with its fracture tagging, vertex classes and submeshes."""

    mesh: Mesh
    fractures: FractureNetwork
    classes: VertexClasses
    sub: Submeshes
    subdomain: np.ndarray = field(repr=False)


def build_bundle(kind, n):
    builders = {"cartesian": build_cartesian_mesh, "tetrahedral": build_tetrahedral_mesh}
    if kind not in builders:
        raise MeshError(f"unknown mesh family {kind!r}; expected one of {sorted(builders)}")
    mesh = builders[kind](n)
    fr = tag_fracture_network(mesh)
    return MeshBundle(mesh=mesh, fractures=fr, classes=compute_vertex_classes(mesh, fr),
                      sub=build_submeshes(mesh, fr), subdomain=cell_subdomains(mesh))
