"""Quadrature rules on simplices in barycentric form.

Each rule is a pair ``(bary, weights)`` with weights summing to one, so an
integral over a simplex S is ``|S| * sum(w * f(bary @ vertices))``.
"""
from itertools import permutations

import numpy as np
from scipy.special import roots_jacobi


def _orbit(*coords):
    return np.array(sorted(set(permutations(coords))), dtype=float)


def _tet_degree4():
    # 11-point Keast rule (one negative weight)
    a = 1.0 / 14.0
    b = (1.0 + np.sqrt(5.0 / 14.0)) / 4.0
    c = (1.0 - np.sqrt(5.0 / 14.0)) / 4.0
    pts = [np.full((1, 4), 0.25), _orbit(a, a, a, 1 - 3 * a), _orbit(b, b, c, c)]
    w = [np.full(1, -74.0 / 5625.0), np.full(4, 343.0 / 45000.0), np.full(6, 56.0 / 2250.0)]
    return np.vstack(pts), 6.0 * np.concatenate(w)


def _tet_degree8():
    # conical product of Gauss-Jacobi rules, used only as a reference
    x, wx = _gauss_jacobi01(5, 2)
    y, wy = _gauss_jacobi01(5, 1)
    z, wz = _gauss_jacobi01(5, 0)
    X, Y, Z = np.meshgrid(x, y, z, indexing="ij")
    W = (wx[:, None, None] * wy[None, :, None] * wz[None, None, :]).ravel()
    l1 = X.ravel()
    l2 = ((1 - X) * Y).ravel()
    l3 = ((1 - X) * (1 - Y) * Z).ravel()
    bary = np.column_stack([1 - l1 - l2 - l3, l1, l2, l3])
    return bary, W / W.sum()


def _gauss_jacobi01(n, alpha):
    """Gauss rule on [0, 1] for the weight (1 - t)^alpha."""
    t, w = roots_jacobi(n, alpha, 0.0)
    return (t + 1) / 2, w / 2 ** (alpha + 1)


def _tri_degree4():
    a, wa = 0.445948490915965, 0.223381589678011
    b, wb = 0.091576213509771, 0.109951743655322
    pts = np.vstack([_orbit(a, a, 1 - 2 * a), _orbit(b, b, 1 - 2 * b)])
    return pts, np.concatenate([np.full(3, wa), np.full(3, wb)])


def _tri_degree8():
    x, wx = _gauss_jacobi01(6, 1)
    y, wy = _gauss_jacobi01(6, 0)
    X, Y = np.meshgrid(x, y, indexing="ij")
    W = (wx[:, None] * wy[None, :]).ravel()
    l1 = X.ravel()
    l2 = ((1 - X) * Y).ravel()
    return np.column_stack([1 - l1 - l2, l1, l2]), W / W.sum()


TET_RULES = {
    "midpoint": (np.full((1, 4), 0.25), np.ones(1)),
    "degree4": _tet_degree4(),
    "degree8": _tet_degree8(),
}
TRI_RULES = {
    "midpoint": (np.full((1, 3), 1.0 / 3.0), np.ones(1)),
    "degree4": _tri_degree4(),
    "degree8": _tri_degree8(),
}


def rule(simplex, name="degree4"):
    table = TET_RULES if simplex == "tet" else TRI_RULES
    try:
        return table[name]
    except KeyError:
        raise ValueError(f"unknown quadrature rule {name!r}; expected one of {sorted(table)}")


def points(vertices, bary):
    """Quadrature points of a batch of simplices: (N, q, 3)."""
    return np.einsum("qa,nac->nqc", bary, vertices)
