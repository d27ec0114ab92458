"""Physical data and the closed-form test solutions on the fracture cross.

The matrix is split into the quadrants Omega_1..Omega_4 (indices 0..3):
``(x<0, y>0)``, ``(x>0, y>0)``, ``(x>0, y<0)``, ``(x<0, y<0)``. Fractures are
indexed 0..3 for Gamma_12, Gamma_23, Gamma_34, Gamma_14.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import jets
from .jets import Jet
from .mesh import FRACTURE_PLANE_NORMALS, GEOM_EPS, subdomain_of

# subdomain adjacent to side 2*i (outward normal = +plane normal) and 2*i+1
SIDE_SUBDOMAIN = np.array([[0, 1], [2, 1], [3, 2], [3, 0]])
# unit normal at the intersection line, in the fracture plane, pointing out of
# the fracture
SIGMA_OUTWARD = np.array([
    [0.0, -1.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [1.0, 0.0, 0.0],
])
# tangential basis (t1, t2) of each fracture plane
TANGENTS = np.array([
    [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
    [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
])
# coordinate used by u_ij along the fracture (y on x=0 planes, x on y=0 planes)
FRACTURE_AXIS = np.array([1, 0, 1, 0])

PARAMETER_SETS = {
    "isotropic": {
        "K_m": [[1.0, 1.0, 1.0], [100.0, 100.0, 100.0], [3.0, 3.0, 3.0], [40.0, 40.0, 40.0]],
        "T_f": [1.0, 0.2, 100.0, 10.0],
        "K_f": [1.0, 2.0, 3.0, 10.0],
    },
    "anisotropic": {
        "K_m": [[1.0, 50.0, 1.0], [2.0, 100.0, 2.0], [30.0, 3.0, 3.0], [40.0, 40.0, 4.0]],
        "T_f": [1.0, 1.0, 1.0, 1.0],
        "K_f": [1.0, 1.0, 1.0, 1.0],
    },
}


class CompatibilityWarning(UserWarning):
    """The permeabilities violate the identity the closed form relies on."""


class RegionError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemData:
    K_m: np.ndarray     # (4, 3) diagonal matrix permeability per subdomain
    K_f: np.ndarray     # (4,) tangential fracture permeability
    T_f: np.ndarray     # (4,) half normal transmissibility
    d_f: float = 1.0
    xi: float = 1.0

    def __post_init__(self):
        for name in ("K_m", "K_f", "T_f"):
            a = np.asarray(getattr(self, name), dtype=float)
            if np.any(~np.isfinite(a)) or np.any(a <= 0):
                raise ValueError(f"{name} must be strictly positive, got {a.tolist()}")
            object.__setattr__(self, name, a)
        if np.asarray(self.K_m).shape != (4, 3):
            raise ValueError("K_m must have shape (4, 3)")
        if self.d_f <= 0:
            raise ValueError("d_f must be strictly positive")
        if not 0.5 < self.xi <= 1.0:
            raise ValueError(f"xi must lie in (1/2, 1], got {self.xi}")


def alpha_f(z):
    return jets.exp(jets.sin(np.pi * z))


def beta_12(z):
    return Jet.constant(-1.0, z)


def gamma_12(t):
    return jets.cos(2 * np.pi * t) + t - 1.0


def gamma_23(t):
    return t


def gamma_34(t):
    return -jets.exp(jets.cos(np.pi * t)) + t + np.e


def gamma_14(t):
    return jets.sin(np.pi * t) * (1.0 / np.pi)


GAMMAS = (gamma_12, gamma_23, gamma_34, gamma_14)
# fractures whose u_ij enter u_i, per subdomain
SUBDOMAIN_FRACTURES = ((0, 3), (0, 1), (2, 1), (2, 3))


@dataclass(frozen=True)
class AnalyticCase:
    """Closed-form solution family built on alpha_f and beta_12.

    ``alpha_coef[i]`` and ``beta_coef[j]`` are the factors with
    ``1/alpha_i = alpha_f - alpha_coef[i] beta_12`` and
    ``beta_ij = beta_coef[j] beta_12``.
    """

    name: str
    data: ProblemData
    alpha_coef: np.ndarray
    beta_coef: np.ndarray
    compatibility_ratio: float
    warnings: tuple = field(default=())

    # -- fracture side -------------------------------------------------
    def fracture_jet(self, points, fracture, hessian=False):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        fracture = np.broadcast_to(np.asarray(fracture), points.shape[:1])
        out = None
        for j in range(4):
            m = fracture == j
            if not m.any():
                continue
            jet = self._u_ij(j, points[m], hessian)
            out = _scatter(out, jet, m, points.shape[0], hessian)
        return out

    def _u_ij(self, j, points, hessian, af=None):
        z = Jet.coordinate(points, 2, hessian)
        t = Jet.coordinate(points, FRACTURE_AXIS[j], hessian)
        if af is None:
            af = alpha_f(z)
        return af + beta_12(z) * self.beta_coef[j] * GAMMAS[j](t)

    # -- matrix side ---------------------------------------------------
    def matrix_jet(self, points, subdomain=None, hessian=False):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if subdomain is None:
            subdomain = subdomain_of(points)
        subdomain = np.broadcast_to(np.asarray(subdomain), points.shape[:1])
        out = None
        for i in range(4):
            m = subdomain == i
            if not m.any():
                continue
            p = points[m]
            z = Jet.coordinate(p, 2, hessian)
            af = alpha_f(z)
            alpha_i = (af - beta_12(z) * self.alpha_coef[i]).reciprocal()
            a, b = SUBDOMAIN_FRACTURES[i]
            jet = alpha_i * self._u_ij(a, p, hessian, af) * self._u_ij(b, p, hessian, af)
            out = _scatter(out, jet, m, points.shape[0], hessian)
        return out

    def alpha(self, z, i):
        zj = Jet.coordinate(np.column_stack([0 * z, 0 * z, z]), 2, False)
        return 1.0 / (alpha_f(zj).v + self.alpha_coef[i])

    def side_trace(self, points, side, hessian=False):
        side = np.asarray(side)
        sub = SIDE_SUBDOMAIN[side // 2, side % 2]
        return self.matrix_jet(points, sub, hessian)


def _scatter(out, jet, mask, n, hessian):
    if out is None:
        out = Jet(np.zeros(n), np.zeros((n, 3)), np.zeros((n, 3)) if hessian else None)
    out.v[mask] = jet.v
    out.g[mask] = jet.g
    if hessian:
        out.h[mask] = jet.h
    return out


def make_case(kind="isotropic", xi=1.0, params=None, t_scale=1.0):
    """Instantiate one of the two parameter sets (or a custom one).

    ``params`` overrides entries of the named set (keys ``K_m``, ``K_f``,
    ``T_f``); ``t_scale`` multiplies every transmissibility.
    """
    if kind not in PARAMETER_SETS and params is None:
        raise ValueError(f"unknown case {kind!r}; expected one of {sorted(PARAMETER_SETS)}")
    p = dict(PARAMETER_SETS.get(kind, {}))
    if params:
        unknown = set(params) - {"K_m", "K_f", "T_f"}
        if unknown:
            raise ValueError(f"unknown case parameters {sorted(unknown)}")
        p.update(params)
    if set(p) != {"K_m", "K_f", "T_f"}:
        raise ValueError("custom case needs K_m, K_f and T_f")
    data = ProblemData(K_m=np.asarray(p["K_m"], dtype=float),
                       K_f=np.asarray(p["K_f"], dtype=float),
                       T_f=np.asarray(p["T_f"], dtype=float) * t_scale, xi=xi)
    K = data.K_m
    T12, T23, T34, T14 = data.T_f
    (K1x, K1y, _), (K2x, K2y, _), (K3x, K3y, _), (K4x, K4y, _) = K
    alpha_coef = np.array([
        K1y / T14,
        K1y * K2x * K3y * K4x / (K1x * K3x * K4y * T23),
        K1y * K3y * K4x * T12 / (K1x * K4y * T23 * T34),
        K1y * K4x * T12 / (K1x * T14 * T34),
    ])
    beta_coef = np.array([
        1.0,
        K1y * K3y * K4x * T12 / (K1x * K3x * K4y * T23),
        -K1y * K4x * T12 / (K1x * K4y * T34),
        -K1y * T12 / (K1x * T14),
    ])
    ratio = K1y * K2x * K3y * K4x / (K1x * K2y * K3x * K4y)
    notes = []
    if abs(ratio - 1.0) > 1e-12:
        msg = (f"case {kind!r}: compatibility ratio K1y K2x K3y K4x / (K1x K2y K3x K4y) "
               f"= {ratio:.6g} != 1; the closed form violates the transmission condition "
               "on one interface")
        notes.append(msg)
        warnings.warn(msg, CompatibilityWarning, stacklevel=2)
    z = np.linspace(-0.5, 0.5, 2001)
    af = np.exp(np.sin(np.pi * z))
    for i, c in enumerate(alpha_coef):
        # 1/alpha_i = alpha_f + c (beta_12 = -1) must stay away from zero
        if np.min(np.abs(af + c)) < 1e-12:
            raise ValueError(f"1/alpha_{i + 1} vanishes on [-0.5, 0.5]")
    return AnalyticCase(name=kind, data=data, alpha_coef=alpha_coef, beta_coef=beta_coef,
                        compatibility_ratio=float(ratio), warnings=tuple(notes))


# ---------------------------------------------------------------------------
# point evaluation with region checks

def _check_matrix(points, subdomain):
    x, y = points[:, 0], points[:, 1]
    tol = GEOM_EPS * 10
    inside = np.all(np.abs(points) <= 0.5 + tol, axis=1)
    sx = np.array([-1, 1, 1, -1])[subdomain]
    sy = np.array([1, 1, -1, -1])[subdomain]
    inside &= (sx * x >= -tol) & (sy * y >= -tol)
    if not inside.all():
        raise RegionError("point outside the closure of its matrix subdomain")


def _check_fracture(points, fracture):
    tol = GEOM_EPS * 10
    nrm = np.abs(np.einsum("ij,ij->i", points, FRACTURE_PLANE_NORMALS[fracture]))
    along = points[np.arange(points.shape[0]), FRACTURE_AXIS[fracture]]
    sign = np.array([1, 1, -1, -1])[fracture]
    ok = (nrm <= tol) & (sign * along >= -tol) & np.all(np.abs(points) <= 0.5 + tol, axis=1)
    if not ok.all():
        raise RegionError("point not on the closure of its fracture")


def _region_index(points, region, index):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if region == "matrix":
        idx = subdomain_of(points) if index is None else np.broadcast_to(index, points.shape[:1])
        _check_matrix(points, idx)
    elif region == "fracture":
        if index is None:
            raise RegionError("fracture index required")
        idx = np.broadcast_to(index, points.shape[:1])
        _check_fracture(points, idx)
    elif region == "side":
        idx = np.broadcast_to(index, points.shape[:1])
        _check_fracture(points, idx // 2)
    else:
        raise ValueError(f"unknown region {region!r}")
    return points, np.asarray(idx)


def eval_solution(case, points, region="matrix", index=None):
    """Exact value and gradient.

    ``region`` is ``"matrix"`` (``index`` = subdomain, inferred if None),
    ``"fracture"`` (``index`` = fracture id; the gradient is tangential in the
    fracture's (t1, t2) basis) or ``"side"`` (``index`` = side label; matrix
    trace of the adjacent subdomain).
    """
    points, idx = _region_index(points, region, index)
    if region == "matrix":
        jet = case.matrix_jet(points, idx)
        return jet.v, jet.g
    if region == "side":
        jet = case.side_trace(points, idx)
        return jet.v, jet.g
    jet = case.fracture_jet(points, idx)
    return jet.v, np.einsum("nij,nj->ni", TANGENTS[idx], jet.g)


def eval_sources(case, points, region="matrix", index=None):
    """Source h_m (matrix) or h_f (fracture) of the closed form.

    The fracture source balances the tangential divergence against the
    matrix inflow ``sum_alpha q_m . n_alpha`` with ``n_alpha`` pointing out of
    the matrix side, the inflow being written with the xi = 1 transmission
    condition ``T (trace - u_f)`` for which the family is derived.
    """
    points, idx = _region_index(points, region, index)
    d = case.data
    if region == "matrix":
        jet = case.matrix_jet(points, idx, hessian=True)
        return -jet.laplacian(d.K_m[idx])
    if region != "fracture":
        raise ValueError("sources are defined on 'matrix' or 'fracture'")
    jet = case.fracture_jet(points, idx, hessian=True)
    t = TANGENTS[idx]
    lap = np.einsum("nai,ni->n", t ** 2, jet.h)    # tangents are coordinate axes
    exch = np.zeros(points.shape[0])
    for s in range(2):
        tr = case.side_trace(points, 2 * idx + s).v
        exch += d.T_f[idx] * (tr - jet.v)
    return (-d.d_f * d.K_f[idx] * lap - exch) / d.d_f


def intersection_mismatch(case, points):
    """Net tangential flux leaving the four fractures at the line x = y = 0.

    Returns sum_ij (-d_f K_ij grad u_ij) . n_ij, with n_ij the in-plane unit
    normal pointing out of fracture ij.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(np.abs(points[:, :2]) > GEOM_EPS * 10) or np.any(np.abs(points[:, 2]) > 0.5):
        raise RegionError("point not on the intersection line x = y = 0")
    d = case.data
    q = np.zeros(points.shape[0])
    for j in range(4):
        g = case.fracture_jet(points, j).g
        q += -d.d_f * d.K_f[j] * (g @ SIGMA_OUTWARD[j])
    return q


def interface_defect(case, points, side):
    """Residuals of the transmission condition for the closed form.

    Returns ``(r_m, r_f)``: ``r_m`` pairs with the matrix trace test function
    on that side and ``r_f`` with the fracture test function. Both vanish
    when the closed form satisfies the coupling condition exactly (xi = 1 and
    compatibility ratio 1).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    side = np.broadcast_to(np.asarray(side), points.shape[:1])
    d = case.data
    frac = side // 2
    xi = d.xi
    T = d.T_f[frac]
    own = case.side_trace(points, side)
    other = case.side_trace(points, side ^ 1).v
    uf = case.fracture_jet(points, frac).v
    n_alpha = np.where(side % 2 == 0, 1.0, -1.0)[:, None] * FRACTURE_PLANE_NORMALS[frac]
    sub = SIDE_SUBDOMAIN[frac, side % 2]
    qn = -np.einsum("ni,ni->n", d.K_m[sub] * own.g, n_alpha)
    coupling = T / (2 * xi - 1) * (xi * own.v + (1 - xi) * other - uf)
    return coupling - qn, T * (own.v - uf) - coupling
