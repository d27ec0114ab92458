"""Normalized error norms against the closed-form case, and convergence orders.

Two evaluation modes are available:

``"nodal"`` (default)
    Values use the vertex rule on the simplices of each reconstruction:
    P1 fields are compared with the exact solution at their nodes, and
    piecewise constant fields at their anchor points. Gradients are averaged
    over each cell (fracture face) and compared with the exact gradient at
    its center. This is the convention that reproduces the reference error
    tables, including the second-order gradient convergence on hexahedra.

``"quadrature"``
    Every norm is integrated with a simplex rule (degree 4 by default) on the
    tetrahedral submesh and the fracture triangulation. Piecewise constants
    on the lumped partition have no geometry, so they are still sampled at
    their anchors.

The jump normalization is computed with both signs; ``jump_sign`` selects
which one is reported as ``err_jump``.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import quadrature

NORM_MODES = ("nodal", "quadrature")
JUMP_SIGNS = ("plus", "minus")
N_SIDES = 8


@dataclass(frozen=True)
class ErrorReport:
    err_sol: float
    err_grad: float
    err_jump_plus: float
    err_jump_minus: float
    h: float
    n_cells: int
    jump_sign: str = "plus"

    @property
    def err_jump(self):
        return self.err_jump_plus if self.jump_sign == "plus" else self.err_jump_minus

    def as_tuple(self):
        return self.err_sol, self.err_grad, self.err_jump


@dataclass
class _Sums:
    """Squared error and squared reference accumulators."""

    err: float = 0.0
    ref: float = 0.0

    def ratio_parts(self):
        return math.sqrt(self.err), math.sqrt(self.ref)


def _normalized(*parts):
    num = sum(p.ratio_parts()[0] for p in parts)
    den = sum(p.ratio_parts()[1] for p in parts)
    return num / den


def _is_lumped(scheme):
    return getattr(scheme, "mode", None) == "cv"


# -- matrix -------------------------------------------------------------------

def _matrix_values(scheme, u, case, mode, bary, w):
    acc = _Sums()
    if _is_lumped(scheme):
        lv = scheme.lumped_matrix_values(u)
        ex = case.matrix_jet(lv["points"], lv["subdomain"], hessian=False).v
        acc.err = float((lv["weights"] * (lv["values"] - ex) ** 2).sum())
        acc.ref = float((lv["weights"] * ex ** 2).sum())
        return acc
    for p in scheme.matrix_pieces(u):
        vol = p["volumes"]
        if mode == "quadrature":
            pts = quadrature.points(p["points"], bary)
            q = w.size
            ex = case.matrix_jet(pts.reshape(-1, 3), np.repeat(p["subdomain"], q),
                                 hessian=False).v.reshape(-1, q)
            uh = p["values"] @ bary.T
            acc.err += float((vol * (((uh - ex) ** 2) @ w)).sum())
            acc.ref += float((vol * ((ex ** 2) @ w)).sum())
        elif "anchor" in p:
            ex = case.matrix_jet(p["anchor"], p["subdomain"], hessian=False).v
            acc.err += float((vol * (p["values"][:, 0] - ex) ** 2).sum())
            acc.ref += float((vol * ex ** 2).sum())
        else:
            nn = p["points"].shape[1]
            ex = case.matrix_jet(p["points"].reshape(-1, 3), np.repeat(p["subdomain"], nn),
                                 hessian=False).v.reshape(-1, nn)
            acc.err += float((vol * ((p["values"] - ex) ** 2).sum(axis=1)).sum()) / nn
            acc.ref += float((vol * (ex ** 2).sum(axis=1)).sum()) / nn
    return acc


def _matrix_gradients(scheme, u, case, mode, bary, w):
    acc = _Sums()
    mesh = scheme.bundle.mesh
    if mode == "nodal":
        nc = mesh.n_cells
        avg = np.zeros((nc, 3))
        for p in scheme.matrix_pieces(u):
            for d in range(3):
                avg[:, d] += np.bincount(p["cell"], p["gradient"][:, d] * p["volumes"],
                                         minlength=nc)
        vol = mesh.cell_volumes
        avg /= vol[:, None]
        ex = case.matrix_jet(mesh.cell_centers, scheme.bundle.subdomain, hessian=False).g
        acc.err = float((vol * ((avg - ex) ** 2).sum(axis=1)).sum())
        acc.ref = float((vol * (ex ** 2).sum(axis=1)).sum())
        return acc
    for p in scheme.matrix_pieces(u):
        pts = quadrature.points(p["points"], bary)
        q = w.size
        ex = case.matrix_jet(pts.reshape(-1, 3), np.repeat(p["subdomain"], q),
                             hessian=False).g.reshape(-1, q, 3)
        diff = ((p["gradient"][:, None] - ex) ** 2).sum(axis=2)
        acc.err += float((p["volumes"] * (diff @ w)).sum())
        acc.ref += float((p["volumes"] * ((ex ** 2).sum(axis=2) @ w)).sum())
    return acc


# -- fracture -----------------------------------------------------------------

def _fracture_values(scheme, u, case, mode, bary, w):
    acc = _Sums()
    if _is_lumped(scheme):
        lv = scheme.lumped_fracture_values(u)
        ex = case.fracture_jet(lv["points"], lv["fracture"], hessian=False).v
        acc.err = float((lv["weights"] * (lv["values"] - ex) ** 2).sum())
        acc.ref = float((lv["weights"] * ex ** 2).sum())
        return acc
    p = scheme.fracture_pieces(u)
    area = p["areas"]
    if mode == "quadrature":
        pts = quadrature.points(p["points"], bary)
        q = w.size
        ex = case.fracture_jet(pts.reshape(-1, 3), np.repeat(p["fracture"], q),
                               hessian=False).v.reshape(-1, q)
        uh = p["values"] @ bary.T
        acc.err = float((area * (((uh - ex) ** 2) @ w)).sum())
        acc.ref = float((area * ((ex ** 2) @ w)).sum())
    elif "anchor" in p:
        ex = case.fracture_jet(p["anchor"], p["fracture"], hessian=False).v
        acc.err = float((area * (p["values"][:, 0] - ex) ** 2).sum())
        acc.ref = float((area * ex ** 2).sum())
    else:
        ex = case.fracture_jet(p["points"].reshape(-1, 3), np.repeat(p["fracture"], 3),
                               hessian=False).v.reshape(-1, 3)
        acc.err = float((area * ((p["values"] - ex) ** 2).sum(axis=1)).sum()) / 3
        acc.ref = float((area * (ex ** 2).sum(axis=1)).sum()) / 3
    return acc


def _fracture_gradients(scheme, u, case, mode, bary, w):
    acc = _Sums()
    p = scheme.fracture_pieces(u)
    fr = scheme.bundle.fractures
    if mode == "nodal":
        tf = scheme.bundle.sub.tri_face
        area = scheme.bundle.mesh.face_areas[fr.faces]
        avg = np.stack([np.bincount(tf, p["gradient"][:, d] * p["areas"], minlength=fr.n_faces)
                        for d in range(3)], axis=1) / area[:, None]
        centers = scheme.bundle.mesh.face_centers[fr.faces]
        ex = case.fracture_jet(centers, fr.fracture_id, hessian=False).g
        acc.err = float((area * ((avg - ex) ** 2).sum(axis=1)).sum())
        acc.ref = float((area * (ex ** 2).sum(axis=1)).sum())
        return acc
    pts = quadrature.points(p["points"], bary)
    q = w.size
    ex = case.fracture_jet(pts.reshape(-1, 3), np.repeat(p["fracture"], q),
                           hessian=False).g.reshape(-1, q, 3)
    diff = ((p["gradient"][:, None] - ex) ** 2).sum(axis=2)
    acc.err = float((p["areas"] * (diff @ w)).sum())
    acc.ref = float((p["areas"] * ((ex ** 2).sum(axis=2) @ w)).sum())
    return acc


# -- interface jump -------------------------------------------------------------

def _jump_norms(scheme, u, case, mode, bary, w):
    """Per-side squared norms: (error, reference with '+', reference with '-')."""
    fp = scheme.fracture_pieces(u)
    tri_pts = fp["points"]
    area = fp["areas"]
    if mode == "quadrature":
        pts = quadrature.points(tri_pts, bary)
        weights = w
        basis = bary
    elif "anchor" in fp:
        pts = fp["anchor"][:, None]
        weights = np.ones(1)
        basis = np.array([[1.0, 0.0, 0.0]])
    else:
        pts = tri_pts
        weights = np.full(3, 1.0 / 3.0)
        basis = np.eye(3)
    q = weights.size
    flat = pts.reshape(-1, 3)
    uf_ex = case.fracture_jet(flat, np.repeat(fp["fracture"], q), hessian=False).v.reshape(-1, q)
    uf_h = fp["values"] @ basis.T
    err = np.zeros(N_SIDES)
    plus = np.zeros(N_SIDES)
    minus = np.zeros(N_SIDES)
    for c in range(2):
        tp = scheme.trace_pieces(u, c)
        side = tp["side"]
        ok = side >= 0
        tr_ex = np.zeros_like(uf_ex)
        tr_ex[ok] = case.side_trace(pts[ok].reshape(-1, 3), np.repeat(side[ok], q),
                                    hessian=False).v.reshape(-1, q)
        tr_h = tp["values"] @ basis.T
        e = (tr_h - uf_h) - (tr_ex - uf_ex)
        for target, field in ((err, e), (plus, tr_ex + uf_ex), (minus, tr_ex - uf_ex)):
            target += np.bincount(side[ok], area[ok] * ((field[ok] ** 2) @ weights),
                                  minlength=N_SIDES)
    return err, plus, minus


def compute_errors(scheme, u, case, mode="nodal", rule="degree4", jump_sign="plus"):
    """Normalized solution, gradient and jump errors of the dof vector ``u``."""
    if mode not in NORM_MODES:
        raise ValueError(f"mode must be one of {NORM_MODES}, got {mode!r}")
    if jump_sign not in JUMP_SIGNS:
        raise ValueError(f"jump_sign must be one of {JUMP_SIGNS}, got {jump_sign!r}")
    tet = quadrature.rule("tet", rule)
    tri = quadrature.rule("tri", rule)
    sol = _normalized(_matrix_values(scheme, u, case, mode, *tet),
                      _fracture_values(scheme, u, case, mode, *tri))
    grad = _normalized(_matrix_gradients(scheme, u, case, mode, *tet),
                       _fracture_gradients(scheme, u, case, mode, *tri))
    err, plus, minus = _jump_norms(scheme, u, case, mode, *tri)
    num = np.sqrt(err).sum()
    return ErrorReport(
        err_sol=sol,
        err_grad=grad,
        err_jump_plus=float(num / np.sqrt(plus).sum()),
        err_jump_minus=float(num / np.sqrt(minus).sum()),
        h=float(scheme.bundle.sub.h),
        n_cells=int(scheme.bundle.mesh.n_cells),
        jump_sign=jump_sign,
    )


def convergence_orders(errors, n_cells):
    """Orders w.r.t. ``n_cells ** (-1/3)`` between consecutive levels.

    ``errors`` is a sequence of floats; a step involving a zero error yields
    ``None`` (undefined order).
    """
    if len(errors) != len(n_cells):
        raise ValueError("errors and n_cells must have the same length")
    if len(errors) < 2:
        raise ValueError("need at least two levels")
    out = []
    for (e0, e1), (n0, n1) in zip(zip(errors, errors[1:]), zip(n_cells, n_cells[1:])):
        if e0 <= 0 or e1 <= 0 or n1 == n0:
            out.append(None)
        else:
            out.append(math.log(e0 / e1) / math.log((n1 / n0) ** (1.0 / 3.0)))
    return out


def report_orders(reports):
    """(alpha_sol, alpha_grad, alpha_jump) per refinement step."""
    n = [r.n_cells for r in reports]
    cols = [convergence_orders([getattr(r, k) for r in reports], n)
            for k in ("err_sol", "err_grad", "err_jump")]
    return list(zip(*cols))


def face_jumps(scheme, u):
    """(n_frac_faces, 2) mean trace-minus-fracture jump per face and side
    (NaN where a side has no cell)."""
    fp = scheme.fracture_pieces(u)
    fr = scheme.bundle.fractures
    tf = scheme.bundle.sub.tri_face
    area = scheme.bundle.mesh.face_areas[fr.faces]
    out = np.full((fr.n_faces, 2), np.nan)
    for c in range(2):
        tp = scheme.trace_pieces(u, c)
        mean = (tp["values"] - fp["values"]).mean(axis=1)
        out[:, c] = np.bincount(tf, mean * fp["areas"], minlength=fr.n_faces) / area
        out[fr.side[:, c] < 0, c] = np.nan
    return out


def discrete_jump_norm(scheme, u):
    """Sum over sides of the L2 norm of the reconstructed jump, integrated
    exactly for piecewise-linear traces."""
    fp = scheme.fracture_pieces(u)
    total = np.zeros(N_SIDES)
    for c in range(2):
        tp = scheme.trace_pieces(u, c)
        ok = tp["side"] >= 0
        j = (tp["values"] - fp["values"])[ok]
        if tp["lumped"]:
            sq = fp["areas"][ok] * (j ** 2).sum(axis=1) / 3.0
        else:
            # exact mass of a linear function on a triangle: A/12 (sum v^2 + (sum v)^2)
            sq = fp["areas"][ok] * ((j ** 2).sum(axis=1) + j.sum(axis=1) ** 2) / 12.0
        total += np.bincount(tp["side"][ok], sq, minlength=N_SIDES)
    return float(np.sqrt(total).sum())
