"""Global linear system: assembly, Dirichlet lifting, cell elimination."""
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sps

from .layout import FRACTURE_FACE
from .model import eval_solution

SIGMA_MODES = ("line-source", "dirichlet-pin")
DEFECT_MODES = ("compensate", "ignore")


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Full system over all dofs; Dirichlet rows are identity rows.

    ``raw_matrix`` / ``raw_rhs`` hold the balance equations before the
    Dirichlet substitution (used by the conservation audit).
    """

    matrix: sps.csr_matrix
    rhs: np.ndarray
    fixed: np.ndarray           # bool mask of imposed dofs
    fixed_values: np.ndarray    # (n,) imposed values, zero elsewhere
    n_cells: int
    raw_matrix: sps.csr_matrix
    raw_rhs: np.ndarray

    @property
    def n_dofs(self):
        return self.rhs.size


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    """System over the non-cell dofs plus what is needed to recover cells."""

    matrix: sps.csr_matrix
    rhs: np.ndarray
    cell_diagonal: np.ndarray
    cell_coupling: sps.csr_matrix   # A_cr (cells x remaining)
    cell_rhs: np.ndarray
    n_cells: int

    @property
    def n_dofs(self):
        return self.rhs.size

    @property
    def nnz(self):
        return self.matrix.nnz


def interpolate(scheme, case):
    """Exact solution sampled at every dof anchor."""
    lay = scheme.layout
    out = np.empty(lay.n_dofs)
    frac = lay.kind >= FRACTURE_FACE
    m = ~frac
    out[m] = eval_solution(case, lay.anchor[m], "matrix", lay.region[m])[0]
    out[frac] = eval_solution(case, lay.anchor[frac], "fracture", lay.region[frac])[0]
    return out


def global_matrix(scheme):
    n = scheme.layout.n_dofs
    parts = [b.coo() for b in scheme.blocks.values()]
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    A = sps.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def assemble(scheme, case, sigma_mode="line-source", interface_defect="compensate",
             rule="degree4"):
    """Balance equations of every dof with exact Dirichlet data.

    ``sigma_mode`` chooses how the flux defect of the closed form at the
    fracture intersection is absorbed: as a line source on the intersection
    dofs, or by imposing exact values there. ``interface_defect`` adds the
    residual of the transmission condition of the closed form (zero for
    compatible data at xi = 1).
    """
    if sigma_mode not in SIGMA_MODES:
        raise ValueError(f"sigma_mode must be one of {SIGMA_MODES}, got {sigma_mode!r}")
    if interface_defect not in DEFECT_MODES:
        raise ValueError(f"interface_defect must be one of {DEFECT_MODES}")
    lay = scheme.layout
    n = lay.n_dofs
    A = global_matrix(scheme)
    b = scheme.source_vector(case, rule)
    if interface_defect == "compensate":
        b = b + scheme.interface_defect_vector(case, rule)
    fixed = lay.dirichlet.copy()
    if sigma_mode == "line-source":
        b = b + scheme.sigma_vector(case)
    else:
        fixed[scheme.sigma_dofs()] = True

    g = np.zeros(n)
    g[fixed] = interpolate(scheme, case)[fixed]
    return impose_dirichlet(A, b, fixed, g, lay.n_cells)


def impose_dirichlet(A, b, fixed, g, n_cells):
    """Symmetric lifting: imposed rows and columns become identity, their
    values move to the right-hand side."""
    keep = sps.diags((~fixed).astype(float))
    lifted = b - A @ g
    M = keep @ A @ keep + sps.diags(fixed.astype(float))
    rhs = np.where(fixed, g, lifted)
    return LinearSystem(matrix=sps.csr_matrix(M), rhs=rhs, fixed=fixed, fixed_values=g,
                        n_cells=n_cells, raw_matrix=A, raw_rhs=b)


def eliminate_cells(system):
    """Schur complement of the (diagonal) cell block."""
    nc = system.n_cells
    A = system.matrix
    Acc = A[:nc, :nc].tocoo()
    off = Acc.row != Acc.col
    if np.any(Acc.data[off] != 0):
        raise AssemblyError("cell unknowns are coupled to each other; elimination would fill in")
    d = A.diagonal()[:nc]
    if np.any(d == 0):
        bad = int(np.flatnonzero(d == 0)[0])
        raise AssemblyError(f"zero diagonal at cell {bad}; cannot eliminate")
    Acr = A[:nc, nc:].tocsr()
    Arc = A[nc:, :nc].tocsr()
    Arr = A[nc:, nc:].tocsr()
    Dinv = sps.diags(1.0 / d)
    S = (Arr - Arc @ Dinv @ Acr).tocsr()
    S.sum_duplicates()
    S.sort_indices()
    rhs = system.rhs[nc:] - Arc @ (system.rhs[:nc] / d)
    return ReducedSystem(matrix=S, rhs=rhs, cell_diagonal=d, cell_coupling=Acr,
                         cell_rhs=system.rhs[:nc].copy(), n_cells=nc)


def recover_cells(reduced_solution, reduced):
    """Back-substitute the cell values and return the full dof vector."""
    uc = (reduced.cell_rhs - reduced.cell_coupling @ reduced_solution) / reduced.cell_diagonal
    return np.concatenate([uc, reduced_solution])


def balance_residuals(scheme, system, u):
    """Per-dof flux balance minus source, relative to the source norm.

    Balances are rebuilt from the local flux evaluators, independently of
    the assembled global matrix. Imposed dofs report zero.
    """
    n = scheme.layout.n_dofs
    total = np.zeros(n)
    for blocks in scheme.blocks.values():
        total += blocks.scatter(blocks.apply(u), n)
    res = np.where(system.fixed, 0.0, total - system.raw_rhs)
    scale = np.linalg.norm(system.raw_rhs)
    return res / (scale if scale > 0 else 1.0)


def conservation_check(scheme, system, u):
    """Largest relative balance residual over the free dofs."""
    return float(np.abs(balance_residuals(scheme, system, u)).max())


def export_matrix_market(reduced, path):
    scipy.io.mmwrite(str(path), reduced.matrix, comment="reduced system (cells eliminated)")


def jacobian_pattern(scheme):
    """Structural pattern of the reduced matrix.

    Every local block contributes its full clique (cell stencils and fracture
    faces) or its nonzero entries (matrix-fracture coupling), imposed rows
    keep their pattern, and eliminating the cells adds ``P_rc P_cr``.
    Cancellations that make assembled entries vanish are ignored.
    """
    lay = scheme.layout
    n, nc = lay.n_dofs, lay.n_cells
    rows, cols = [], []
    for name, blocks in scheme.blocks.items():
        r, c, v = blocks.coo()
        if name == "mf":
            keep = v != 0
            r, c = r[keep], c[keep]
        rows.append(r)
        cols.append(c)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    P = sps.csr_matrix((np.ones(r.size, dtype=np.int8), (r, c)), shape=(n, n))
    P.sum_duplicates()
    P.data[:] = 1
    Prr = P[nc:, nc:].astype(np.int64)
    Prc = P[nc:, :nc].astype(np.int64)
    Pcr = P[:nc, nc:].astype(np.int64)
    S = (Prr + Prc @ Pcr).tocsr()
    S.sum_duplicates()
    S.data[:] = 1
    return S


def jacobian_nnz(scheme):
    return int(jacobian_pattern(scheme).nnz)
