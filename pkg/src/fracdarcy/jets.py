"""Second-order forward-mode derivative arithmetic.

A :class:`Jet` carries values, gradients and (optionally) the pure second
derivatives along the coordinate axes (the Hessian diagonal) of a scalar
field at a batch of points. The diagonal is all a diagonal-permeability
Laplacian or an axis-aligned tangential Laplacian needs, and the
product and chain rules propagate it without the mixed terms.
"""
import numpy as np


class Jet:
    __slots__ = ("v", "g", "h")
    __array_priority__ = 100

    def __init__(self, v, g, h=None):
        self.v = v      # (N,)
        self.g = g      # (N, 3)
        self.h = h      # (N, 3) Hessian diagonal, or None

    @classmethod
    def coordinate(cls, points, axis, hessian=True):
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        g = np.zeros((n, 3))
        g[:, axis] = 1.0
        h = np.zeros((n, 3)) if hessian else None
        return cls(points[:, axis].copy(), g, h)

    @classmethod
    def constant(cls, value, like):
        n = like.v.shape[0]
        h = None if like.h is None else np.zeros((n, 3))
        return cls(np.full(n, float(value)), np.zeros((n, 3)), h)

    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self) if np.ndim(other) == 0 else Jet(
            np.asarray(other, dtype=float) * np.ones_like(self.v), np.zeros_like(self.g),
            None if self.h is None else np.zeros_like(self.h))

    def __add__(self, other):
        o = self._lift(other)
        h = None if self.h is None else self.h + o.h
        return Jet(self.v + o.v, self.g + o.g, h)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.v, -self.g, None if self.h is None else -self.h)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = float(other)
            return Jet(self.v * c, self.g * c, None if self.h is None else self.h * c)
        v = self.v * other.v
        g = self.g * other.v[:, None] + other.g * self.v[:, None]
        h = None
        if self.h is not None:
            h = (self.h * other.v[:, None] + other.h * self.v[:, None]
                 + 2.0 * self.g * other.g)
        return Jet(v, g, h)

    __rmul__ = __mul__

    def reciprocal(self):
        return self.apply(1.0 / self.v, -1.0 / self.v ** 2, 2.0 / self.v ** 3)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / float(other))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def apply(self, f, df, d2f):
        """Chain rule for a univariate function with values f, f', f''."""
        g = self.g * df[:, None]
        h = None
        if self.h is not None:
            h = self.h * df[:, None] + d2f[:, None] * self.g ** 2
        return Jet(f, g, h)

    def laplacian(self, weights=(1.0, 1.0, 1.0)):
        """Weighted trace of the Hessian; ``weights`` is (3,) or (N, 3)."""
        w = np.broadcast_to(np.asarray(weights, dtype=float), self.g.shape)
        return (self.h * w).sum(axis=1)


def exp(a):
    e = np.exp(a.v)
    return a.apply(e, e, e)


def sin(a):
    s, c = np.sin(a.v), np.cos(a.v)
    return a.apply(s, c, -s)


def cos(a):
    s, c = np.sin(a.v), np.cos(a.v)
    return a.apply(c, -s, -c)
