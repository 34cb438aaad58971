"""B-spline bases on open knot vectors and the boundary-adapted basis.

Basis functions are indexed from 0.  On a knot vector with ``N`` functions the
boundary-adapted basis ``psi`` replaces the first two and last two B-splines by

    psi_0     = phi_0 + phi_1
    psi_1     = (xi_{p+1} / p) phi_1
    psi_{N-2} = ((1 - xi_{N-1}) / p) phi_{N-2}
    psi_{N-1} = phi_{N-2} + phi_{N-1}

(``xi`` being the full knot vector, so ``xi_{p+1}`` is the first interior
break).  Then ``psi_0`` carries the boundary value, ``psi_1`` has slope +1 at
0 and ``psi_{N-2}`` slope -1 at 1, all other functions vanish to first order
at the ends.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exceptions import InvalidKnotVector

_TOL = 1e-12


def find_spans(knots: np.ndarray, p: int, x) -> np.ndarray:
    """Index ``s`` with ``knots[s] <= x < knots[s+1]``, closed at the right end."""
    knots = np.asarray(knots, float)
    n = len(knots) - p - 1
    s = np.searchsorted(knots, x, side="right") - 1
    return np.clip(s, p, n - 1)


def basis_derivatives(knots, p: int, x, nd: int):
    """Nonzero B-splines and derivatives at the points ``x``.

    Vectorized version of the classical triangular recurrence.

    Returns
    -------
    spans : int array, shape (m,)
        The active span; functions ``spans - p .. spans`` are nonzero.
    ders : array, shape (m, nd + 1, p + 1)
        ``ders[q, k, j]`` is the k-th derivative of function ``spans[q]-p+j``.
    """
    U = np.asarray(knots, float)
    x = np.atleast_1d(np.asarray(x, float))
    m = x.size
    s = find_spans(U, p, x)
    left = np.empty((p + 1, m))
    right = np.empty((p + 1, m))
    ndu = np.empty((p + 1, p + 1, m))
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - U[s + 1 - j]
        right[j] = U[s + j] - x
        saved = np.zeros(m)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved
    ders = np.zeros((m, nd + 1, p + 1))
    ders[:, 0, :] = ndu[:, p, :].T
    a = np.zeros((2, p + 1, m))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, min(nd, p) + 1):
            d = np.zeros(m)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d = d + a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d = d + a[s2, k] * ndu[r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    fac = p
    for k in range(1, min(nd, p) + 1):
        ders[:, k, :] *= fac
        fac *= p - k
    return s, ders


def collocation_matrix(knots, p: int, x, deriv: int = 0) -> sp.csr_matrix:
    """Sparse matrix ``C[q, i] = phi_i^(deriv)(x_q)``."""
    knots = np.asarray(knots, float)
    n = len(knots) - p - 1
    x = np.atleast_1d(np.asarray(x, float))
    s, d = basis_derivatives(knots, p, x, deriv)
    rows = np.repeat(np.arange(x.size), p + 1)
    cols = (s[:, None] - p + np.arange(p + 1)[None, :]).ravel()
    return sp.csr_matrix((d[:, deriv, :].ravel(), (rows, cols)), shape=(x.size, n))


def open_knots(p: int, interior) -> np.ndarray:
    """``p``-open knot vector on [0, 1] with the given interior knots."""
    return np.concatenate([np.zeros(p + 1), np.asarray(interior, float), np.ones(p + 1)])


@dataclass(frozen=True, eq=False)
class KnotVector:
    """A ``p``-open knot vector on [0, 1] used for discretization.

    Interior knots may repeat at most ``p - 1`` times so that the spline
    space is at least C^1.
    """

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", U)
        p = int(self.degree)
        if p < 1:
            raise InvalidKnotVector("degree must be at least 1")
        if U.ndim != 1 or np.any(np.diff(U) < 0):
            raise InvalidKnotVector("knots must be non-decreasing")
        if not (np.all(U[: p + 1] == 0.0) and np.all(U[-p - 1:] == 1.0)):
            raise InvalidKnotVector("knot vector must be p-open on [0, 1]")
        inner = U[p + 1: -p - 1]
        if inner.size and (inner[0] <= 0.0 or inner[-1] >= 1.0):
            raise InvalidKnotVector("interior knots must lie in (0, 1)")
        _, counts = np.unique(inner, return_counts=True)
        if counts.size and counts.max() > p - 1:
            raise InvalidKnotVector("interior knot multiplicity exceeds p - 1")
        if len(U) - p - 1 < 4:
            raise InvalidKnotVector("at least four basis functions are required")

    @classmethod
    def uniform(cls, p: int, r: int) -> "KnotVector":
        """Uniform knot vector with ``2**r - 1`` simple interior knots."""
        n_el = 2 ** r
        return cls(p, open_knots(p, np.arange(1, n_el) / n_el))

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return len(self.knots) - self.degree - 1

    @cached_property
    def breaks(self) -> np.ndarray:
        return np.unique(self.knots)

    @property
    def n_elements(self) -> int:
        return len(self.breaks) - 1

    @property
    def h_max(self) -> float:
        return float(np.max(np.diff(self.breaks)))

    @property
    def h_min(self) -> float:
        return float(np.min(np.diff(self.breaks)))

    @property
    def quasi_uniformity(self) -> float:
        return self.h_max / self.h_min

    def check_resolution(self) -> None:
        """Require ``h_max <= 1/4`` (needed by the trace extension bounds)."""
        if self.h_max > 0.25 + _TOL:
            raise InvalidKnotVector(f"h_max = {self.h_max} exceeds 1/4")

    def eval_all(self, x, max_deriv: int = 0):
        """Nonzero B-splines at ``x``.

        Returns ``(first_active, values)``.  For scalar ``x`` ``values`` has
        shape ``(p + 1, max_deriv + 1)``, for an array ``(m, p + 1, max_deriv + 1)``.
        """
        scalar = np.ndim(x) == 0
        s, d = basis_derivatives(self.knots, self.degree, x, max_deriv)
        vals = np.transpose(d, (0, 2, 1))
        first = s - self.degree
        if scalar:
            return int(first[0]), vals[0]
        return first, vals

    def collocation(self, x, deriv: int = 0) -> sp.csr_matrix:
        return collocation_matrix(self.knots, self.degree, x, deriv)

    def quadrature(self, order: int | None = None):
        """Gauss-Legendre rule per nonempty span.

        Returns nodes and weights, both of shape ``(n_elements, order)``;
        ``order`` defaults to ``p + 1``.
        """
        return gauss_per_span(self.breaks, order or self.degree + 1)

    @cached_property
    def transform(self) -> sp.csr_matrix:
        """Matrix ``T`` with ``psi_i = sum_j T[j, i] phi_j``."""
        return boundary_transform(self)


def gauss_per_span(breaks, order: int):
    g, w = np.polynomial.legendre.leggauss(order)
    a, b = np.asarray(breaks[:-1]), np.asarray(breaks[1:])
    h = (b - a)[:, None]
    nodes = a[:, None] + 0.5 * (g[None, :] + 1.0) * h
    weights = 0.5 * w[None, :] * h
    return nodes, weights


def boundary_transform(kv: KnotVector) -> sp.csr_matrix:
    """Sparse change of basis from B-splines to the boundary-adapted basis."""
    p, n, U = kv.degree, kv.n, kv.knots
    T = sp.lil_matrix((n, n))
    for i in range(2, n - 2):
        T[i, i] = 1.0
    T[0, 0] = 1.0
    T[1, 0] = 1.0
    T[1, 1] = U[p + 1] / p
    T[n - 2, n - 2] = (1.0 - U[n - 1]) / p
    T[n - 2, n - 1] = 1.0
    T[n - 1, n - 1] = 1.0
    return T.tocsr()


def eval_transformed_all(kv: KnotVector, x, max_deriv: int = 0):
    """Boundary-adapted basis functions that may be nonzero at ``x``.

    Returns ``(first_active, values)`` with ``values`` of shape
    ``(width, max_deriv + 1)`` for scalar ``x``; the window ``width`` is
    ``p + 1`` or ``p + 2`` depending on the span.
    """
    x = float(x)
    first, vals = kv.eval_all(x, max_deriv)
    p, n = kv.degree, kv.n
    lo, hi = max(first - 1, 0), min(first + p + 1, n - 1)
    T = kv.transform[first:first + p + 1, lo:hi + 1].toarray()
    out = T.T @ vals
    # drop functions that are identically zero on this span
    keep = np.abs(T).sum(axis=0) > 0
    idx = np.flatnonzero(keep)
    return lo + int(idx[0]), out[idx[0]: idx[-1] + 1]


@dataclass(frozen=True, eq=False)
class TensorBasis2D:
    """Tensor product of two discretization bases.

    Tensor index ``t = i_x + n_x * i_y`` (first direction runs fastest).
    """

    bx: KnotVector
    by: KnotVector

    @property
    def shape(self):
        return self.bx.n, self.by.n

    @property
    def n(self) -> int:
        return self.bx.n * self.by.n

    @property
    def degree(self):
        return self.bx.degree, self.by.degree

    def index(self, ix, iy):
        return np.asarray(ix) + self.bx.n * np.asarray(iy)

    @cached_property
    def transform(self) -> sp.csr_matrix:
        """``T2 = kron(T_y, T_x)`` mapping adapted to B-spline coefficients."""
        return sp.kron(self.by.transform, self.bx.transform, format="csr")


def h1_mass_and_stiffness_1d(kv: KnotVector, indices=None, deriv: int = 2):
    """Mass and ``deriv``-th derivative stiffness matrices of the adapted basis.

    Parameters
    ----------
    indices : array of int, optional
        Restrict to these adapted basis functions.
    """
    nodes, weights = kv.quadrature(kv.degree + 1)
    x, w = nodes.ravel(), weights.ravel()
    T = kv.transform
    C0 = kv.collocation(x, 0) @ T
    Cd = kv.collocation(x, deriv) @ T
    if indices is not None:
        C0, Cd = C0[:, indices], Cd[:, indices]
    W = sp.diags(w)
    return (C0.T @ W @ C0).toarray(), (Cd.T @ W @ Cd).toarray()
