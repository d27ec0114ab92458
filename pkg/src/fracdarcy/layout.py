"""Pieces shared by the VAG and HFV discretizations."""
from dataclasses import dataclass

import numpy as np

# dof kinds
CELL = 0
MATRIX_NODE = 1     # VAG vertex class or HFV non-fracture face
MATRIX_SIDE = 2     # one side of a fracture face (K_sigma)
FRACTURE_FACE = 3
FRACTURE_NODE = 4   # VAG fracture vertex or HFV fracture edge

KIND_NAMES = ("cell", "matrix-node", "matrix-side", "fracture-face", "fracture-node")


@dataclass(frozen=True, eq=False)
class DofLayout:
    """Global numbering of the unknowns of one scheme on one mesh.

    Cells always come first (``0 .. n_cells - 1``). ``region[i]`` is the
    subdomain (0..3) of a matrix dof or the fracture id (0..3) of a fracture
    dof; it selects the closed-form branch used for Dirichlet values.
    """

    scheme: str
    kind: np.ndarray
    dirichlet: np.ndarray
    anchor: np.ndarray
    region: np.ndarray
    side: np.ndarray            # side label of MATRIX_SIDE dofs, -1 elsewhere
    n_cells: int

    @property
    def n_dofs(self):
        return self.kind.size

    @property
    def n_eliminated(self):
        return self.n_dofs - self.n_cells

    @property
    def is_fracture(self):
        return self.kind >= FRACTURE_FACE

    def count(self, kind):
        return int(np.count_nonzero(self.kind == kind))


@dataclass(frozen=True, eq=False)
class LocalBlocks:
    """Dense local matrices with their global dof lists (-1 marks padding)."""

    dofs: np.ndarray    # (nb, nl)
    mats: np.ndarray    # (nb, nl, nl)

    def coo(self):
        nl = self.dofs.shape[1]
        rows = np.repeat(self.dofs, nl, axis=1).ravel()
        cols = np.tile(self.dofs, (1, nl)).ravel()
        vals = self.mats.reshape(-1)
        keep = (rows >= 0) & (cols >= 0)
        return rows[keep], cols[keep], vals[keep]

    def apply(self, u):
        """Local products ``A_b u_b`` (zero at padded slots)."""
        ul = np.where(self.dofs >= 0, u[np.maximum(self.dofs, 0)], 0.0)
        return np.einsum("bij,bj->bi", self.mats, ul)

    def scatter(self, local, n):
        keep = self.dofs >= 0
        return np.bincount(self.dofs[keep], weights=local[keep], minlength=n)


def local_fluxes(blocks, u):
    """Flux families from the local matrices of a scheme.

    ``cell[K, i]`` is the flux from cell K towards its stencil entry ``i``
    (entry 0, the cell itself, holds the cell balance), ``face[s, i]`` the
    fracture analog and ``mf[s, i]`` the matrix-fracture flux leaving trace
    node ``i`` (fracture-node entries hold minus the total received).
    """
    cell = blocks["cell"].apply(u)
    face = blocks["face"].apply(u)
    mf = blocks["mf"].apply(u)
    cell[:, 1:] *= -1.0
    face[:, 1:] *= -1.0
    return {"cell": cell, "face": face, "mf": mf}


def tet_gradients(p):
    """Gradients of the barycentric coordinates on tetrahedra: (N, 4, 3)."""
    d = p[:, 1:] - p[:, :1]                          # (N, 3, 3) rows = edges
    inv = np.linalg.inv(d)                           # columns = grads of l1..l3
    g = np.empty(p.shape[:1] + (4, 3))
    g[:, 1:] = inv.transpose(0, 2, 1)
    g[:, 0] = -g[:, 1:].sum(axis=1)
    return g


def triangle_gradients(p):
    """In-plane gradients of the barycentric coordinates: (N, 3, 3)."""
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    twice_area = np.linalg.norm(n, axis=1)
    n = n / twice_area[:, None]
    g = np.empty(p.shape)
    for i in range(3):
        g[:, i] = np.cross(n, p[:, (i + 2) % 3] - p[:, (i + 1) % 3]) / twice_area[:, None]
    return g


def mf_coupling_blocks(mass, transmissibility, xi, present):
    """Matrix-fracture coupling over [side-0 trace, side-1 trace, fracture] nodes.

    ``mass[b]`` (m x m) is the trace mass matrix of face ``b`` over its m
    trace nodes; ``present[b, c]`` flags the sides with an adjacent cell. A
    face with a single side uses the collapsed weight xi = 1.
    """
    nb, m, _ = mass.shape
    M = mass * transmissibility[:, None, None]
    two = present.all(axis=1)
    w_own = np.where(two, xi / (2 * xi - 1), 1.0)
    w_other = np.where(two, (1 - xi) / (2 * xi - 1), 0.0)
    out = np.zeros((nb, 3 * m, 3 * m))
    sl = [slice(0, m), slice(m, 2 * m), slice(2 * m, 3 * m)]
    for a in range(2):
        on_a = present[:, a].astype(float)
        for b in range(2):
            wgt = (w_own if a == b else w_other) * on_a * present[:, b]
            Mw = M * wgt[:, None, None]
            # (J_a)^T M (J_b) with J = [trace, -fracture]
            out[:, sl[a], sl[b]] += Mw
            out[:, sl[a], sl[2]] -= Mw
            out[:, sl[2], sl[b]] -= Mw
            out[:, sl[2], sl[2]] += Mw
    return out
