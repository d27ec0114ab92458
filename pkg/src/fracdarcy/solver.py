"""ILUT incomplete factorization and right-preconditioned full GMRES."""
import math
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sps

DEFAULT_TOL = 1e-10
DEFAULT_DROP = 1e-4


class ZeroPivotError(ArithmeticError):
    """Raised when ILUT meets a zero pivot; ``row`` is the offending row."""

    def __init__(self, row):
        super().__init__(f"zero pivot in ILUT at row {row}")
        self.row = row


# -- ILUT ---------------------------------------------------------------------

@numba.njit(cache=True)
def _heap_push(heap, size, value):
    pos = size
    heap[pos] = value
    while pos > 0:
        parent = (pos - 1) // 2
        if heap[parent] <= heap[pos]:
            break
        heap[parent], heap[pos] = heap[pos], heap[parent]
        pos = parent
    return size + 1


@numba.njit(cache=True)
def _heap_pop(heap, size):
    top = heap[0]
    size -= 1
    heap[0] = heap[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and heap[left + 1] < heap[left]:
            child = left + 1
        if heap[pos] <= heap[child]:
            break
        heap[pos], heap[child] = heap[child], heap[pos]
        pos = child
    return top, size


@numba.njit(cache=True)
def _grow(idx, val, need):
    if need <= idx.size:
        return idx, val
    cap = max(need, 2 * idx.size)
    new_idx = np.empty(cap, np.int64)
    new_val = np.empty(cap)
    new_idx[:idx.size] = idx
    new_val[:val.size] = val
    return new_idx, new_val


@numba.njit(cache=True)
def _ilut_kernel(n, indptr, indices, data, tau):
    """Row-wise IKJ elimination with relative threshold dropping.

    L is stored without its unit diagonal; every U row starts with its
    diagonal entry. Returns the failing row (or -1) as the last item.
    """
    w = np.zeros(n)
    mark = np.full(n, -1, np.int64)
    heap = np.empty(n, np.int64)
    lcols = np.empty(n, np.int64)
    ucols = np.empty(n, np.int64)
    cap = max(16, 2 * indices.size)
    l_ptr = np.zeros(n + 1, np.int64)
    u_ptr = np.zeros(n + 1, np.int64)
    l_idx = np.empty(cap, np.int64)
    l_val = np.empty(cap)
    u_idx = np.empty(cap, np.int64)
    u_val = np.empty(cap)
    nl_tot = 0
    nu_tot = 0
    for i in range(n):
        norm = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            norm += data[p] * data[p]
        norm = math.sqrt(norm)
        if norm == 0.0:
            return l_ptr, l_idx, l_val, u_ptr, u_idx, u_val, i
        tol = tau * norm
        nh = 0
        nu = 1
        ucols[0] = i
        mark[i] = i
        w[i] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j == i:
                w[i] += data[p]
                continue
            if mark[j] != i:
                mark[j] = i
                w[j] = 0.0
                if j < i:
                    nh = _heap_push(heap, nh, j)
                else:
                    ucols[nu] = j
                    nu += 1
            w[j] += data[p]
        nl = 0
        while nh > 0:
            k, nh = _heap_pop(heap, nh)
            wk = w[k] / u_val[u_ptr[k]]
            w[k] = 0.0
            if abs(wk) < tol:
                continue
            lcols[nl] = k
            nl += 1
            w[k] = wk
            for q in range(u_ptr[k] + 1, u_ptr[k + 1]):
                j = u_idx[q]
                if mark[j] != i:
                    mark[j] = i
                    w[j] = 0.0
                    if j < i:
                        nh = _heap_push(heap, nh, j)
                    else:
                        ucols[nu] = j
                        nu += 1
                w[j] -= wk * u_val[q]

        l_idx, l_val = _grow(l_idx, l_val, nl_tot + nl)
        for t in range(nl):
            k = lcols[t]
            l_idx[nl_tot] = k
            l_val[nl_tot] = w[k]
            nl_tot += 1
            w[k] = 0.0
        l_ptr[i + 1] = nl_tot

        diag = w[i]
        if diag == 0.0:
            return l_ptr, l_idx, l_val, u_ptr, u_idx, u_val, i
        u_idx, u_val = _grow(u_idx, u_val, nu_tot + nu)
        u_idx[nu_tot] = i
        u_val[nu_tot] = diag
        nu_tot += 1
        w[i] = 0.0
        for t in range(1, nu):
            j = ucols[t]
            if abs(w[j]) >= tol:
                u_idx[nu_tot] = j
                u_val[nu_tot] = w[j]
                nu_tot += 1
            w[j] = 0.0
        u_ptr[i + 1] = nu_tot
    return l_ptr, l_idx[:nl_tot], l_val[:nl_tot], u_ptr, u_idx[:nu_tot], u_val[:nu_tot], -1


@numba.njit(cache=True)
def _lu_solve(l_ptr, l_idx, l_val, u_ptr, u_idx, u_val, b):
    n = b.size
    x = b.copy()
    for i in range(n):
        s = x[i]
        for p in range(l_ptr[i], l_ptr[i + 1]):
            s -= l_val[p] * x[l_idx[p]]
        x[i] = s
    for i in range(n - 1, -1, -1):
        s = x[i]
        start = u_ptr[i]
        for p in range(start + 1, u_ptr[i + 1]):
            s -= u_val[p] * x[u_idx[p]]
        x[i] = s / u_val[start]
    return x


@dataclass(frozen=True, eq=False)
class IlutFactors:
    """Incomplete factors ``A ~ L U`` (L unit lower triangular)."""

    l_ptr: np.ndarray
    l_idx: np.ndarray
    l_val: np.ndarray
    u_ptr: np.ndarray
    u_idx: np.ndarray
    u_val: np.ndarray
    drop: float

    @property
    def n(self):
        return self.l_ptr.size - 1

    @property
    def nnz(self):
        return self.l_val.size + self.u_val.size

    @property
    def L(self):
        n = self.n
        strict = sps.csr_matrix((self.l_val, self.l_idx, self.l_ptr), shape=(n, n))
        return (strict + sps.identity(n, format="csr")).tocsr()

    @property
    def U(self):
        n = self.n
        return sps.csr_matrix((self.u_val, self.u_idx, self.u_ptr), shape=(n, n))

    def solve(self, b):
        return _lu_solve(self.l_ptr, self.l_idx, self.l_val,
                         self.u_ptr, self.u_idx, self.u_val, np.ascontiguousarray(b, float))


def ilut_factor(matrix, drop=DEFAULT_DROP):
    """Threshold ILU without pivoting and without a fill cap.

    Entries smaller than ``drop`` times the 2-norm of the original row are
    discarded (diagonals are always kept). A zero pivot raises
    :class:`ZeroPivotError`.
    """
    A = sps.csr_matrix(matrix)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if drop < 0:
        raise ValueError("drop threshold must be non-negative")
    A.sum_duplicates()
    out = _ilut_kernel(A.shape[0], A.indptr.astype(np.int64), A.indices.astype(np.int64),
                       A.data.astype(float), float(drop))
    *arrays, bad = out
    if bad >= 0:
        raise ZeroPivotError(int(bad))
    return IlutFactors(*arrays, drop=float(drop))


# -- GMRES ----------------------------------------------------------------------

@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    residual: float           # true relative residual ||b - A x|| / ||b||
    converged: bool
    history: list = field(default_factory=list)   # estimated residual per iteration


def _apply(preconditioner, v):
    if preconditioner is None:
        return v
    if hasattr(preconditioner, "solve"):
        return preconditioner.solve(v)
    return preconditioner(v)


def _arnoldi_cycle(A, b, x0, bnorm, preconditioner, tol, budget, history):
    """One GMRES cycle from ``x0``; returns (x, steps)."""
    r = b - A @ x0
    beta = np.linalg.norm(r)
    if beta / bnorm <= tol or budget == 0:
        return x0, 0
    V = [r / beta]
    H = np.zeros((min(budget, 64) + 1, min(budget, 64)))
    cs, sn = [], []
    g = [beta]
    k = 0
    while k < budget:
        if k >= H.shape[1]:
            grown = np.zeros((2 * H.shape[0] - 1, 2 * H.shape[1]))
            grown[:H.shape[0], :H.shape[1]] = H
            H = grown
        w = A @ _apply(preconditioner, V[k])
        for j in range(k + 1):
            H[j, k] = np.dot(V[j], w)
            w -= H[j, k] * V[j]
        H[k + 1, k] = np.linalg.norm(w)
        for j in range(k):
            t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
            H[j + 1, k] = -sn[j] * H[j, k] + cs[j] * H[j + 1, k]
            H[j, k] = t
        rho = math.hypot(H[k, k], H[k + 1, k])
        c, s = (1.0, 0.0) if rho == 0 else (H[k, k] / rho, H[k + 1, k] / rho)
        cs.append(c)
        sn.append(s)
        H[k, k] = rho
        H[k + 1, k] = 0.0
        g.append(-s * g[k])
        g[k] = c * g[k]
        k += 1
        est = abs(g[k]) / bnorm
        history.append(est)
        nrm = np.linalg.norm(w)
        if est <= tol or nrm == 0:
            break
        V.append(w / nrm)
    y = np.linalg.solve(np.triu(H[:k, :k]), np.asarray(g[:k]))
    update = np.zeros_like(b)
    for j in range(k):
        update += y[j] * V[j]
    return x0 + _apply(preconditioner, update), k


def gmres(matrix, rhs, preconditioner=None, tol=DEFAULT_TOL, max_iter=None, x0=None):
    """Right-preconditioned GMRES without restart.

    Convergence is declared only when the true relative residual, recomputed
    with an explicit product, is below ``tol``. If the Krylov estimate and
    the true residual disagree, a new cycle starts from the current iterate
    within the remaining iteration budget (default: the system dimension).
    """
    A = sps.csr_matrix(matrix)
    b = np.asarray(rhs, dtype=float)
    n = b.size
    if A.shape != (n, n):
        raise ValueError(f"matrix shape {A.shape} does not match rhs size {n}")
    budget = n if max_iter is None else int(max_iter)
    x = np.zeros(n) if x0 is None else np.asarray(x0, float).copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return SolveResult(np.zeros(n), 0, 0.0, True)
    history = []
    total = 0
    while True:
        x, steps = _arnoldi_cycle(A, b, x, bnorm, preconditioner, tol, budget - total, history)
        total += steps
        res = np.linalg.norm(b - A @ x) / bnorm
        if res <= tol:
            return SolveResult(x, total, float(res), True, history)
        if steps == 0 or total >= budget:
            return SolveResult(x, total, float(res), False, history)


def warm_up():
    """Compile the kernels once so that later timings exclude compilation."""
    factors = ilut_factor(sps.identity(2, format="csr"), 0.0)
    factors.solve(np.ones(2))


def solve(matrix, rhs, tol=DEFAULT_TOL, drop=DEFAULT_DROP):
    """ILUT-preconditioned GMRES with the default settings."""
    return gmres(matrix, rhs, ilut_factor(matrix, drop), tol=tol)
