"""Sparse symmetric storage, Cholesky factorizations and preconditioned CG.

The factorization is a thin layer over LAPACK's banded Cholesky.  Patch-local
stiffness matrices in lexicographic ordering are banded with half bandwidth
roughly ``p * (n_x + 1)``; for other matrices a reverse Cuthill-McKee ordering
is tried first.  Tiny or very wide matrices are factorized densely.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu

from .exceptions import IndefiniteOperator, NotConverged, NotSpd, SingularMatrix

PIVOT_TOL = 1e-14


def sparse_sym(rows, cols, vals, n: int) -> sp.csr_matrix:
    """Build an ``n x n`` CSR matrix from triplets, summing duplicates."""
    A = sp.coo_matrix((np.asarray(vals, float), (np.asarray(rows), np.asarray(cols))), shape=(n, n))
    A = A.tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    return A


def is_symmetric(A, rtol: float = 1e-12) -> bool:
    """Check ``|A - A^T| <= rtol * max|A|`` entrywise."""
    A = sp.csr_matrix(A)
    if A.nnz == 0:
        return True
    D = (A - A.T).tocoo()
    if D.nnz == 0:
        return True
    return bool(np.max(np.abs(D.data)) <= rtol * np.max(np.abs(A.data)))


def _half_bandwidth(A: sp.coo_matrix) -> int:
    if A.nnz == 0:
        return 0
    return int(np.max(np.abs(A.row - A.col)))


def _to_upper_banded(A: sp.coo_matrix, u: int) -> np.ndarray:
    n = A.shape[0]
    ab = np.zeros((u + 1, n))
    m = A.row <= A.col
    r, c = A.row[m], A.col[m]
    np.add.at(ab, (u + r - c, c), A.data[m])
    return ab


class Factorization:
    """Reusable factorization of a sparse symmetric matrix.

    Parameters
    ----------
    A : sparse matrix
        Symmetric matrix, only its pattern and values are read.
    kind : {"spd", "indefinite"}
        ``"spd"`` uses Cholesky and raises on non-positive pivots,
        ``"indefinite"`` falls back to a sparse LU.

    Notes
    -----
    The object is immutable after construction, ``solve`` may be called any
    number of times and from several threads.
    """

    def __init__(self, A, kind: str = "spd"):
        A = sp.csr_matrix(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.n = A.shape[0]
        self.kind = kind
        self.perm = None
        self._mode = "empty"
        if self.n == 0:
            return
        if kind == "indefinite":
            self._lu = splu(A.tocsc())
            self._mode = "lu"
            return
        if kind != "spd":
            raise ValueError(f"unknown factorization kind {kind!r}")
        diag = A.diagonal()
        dmax = float(np.max(np.abs(diag)))
        if np.any(diag <= 0.0) or dmax == 0.0:
            raise NotSpd("non-positive diagonal entry")
        coo = A.tocoo()
        u = _half_bandwidth(coo)
        if u > 0 and self.n > 64:
            perm = reverse_cuthill_mckee(A, symmetric_mode=True)
            Ap = A[perm][:, perm].tocoo()
            up = _half_bandwidth(Ap)
            if up < u:
                self.perm, coo, u = np.asarray(perm), Ap, up
        self.bandwidth = u
        try:
            if (u + 1) * 2 > self.n:
                self._c = sla.cho_factor(coo.toarray(), lower=False, check_finite=False)
                piv = np.diag(self._c[0]) ** 2
                self._mode = "dense"
            else:
                self._cb = sla.cholesky_banded(_to_upper_banded(coo, u), lower=False, check_finite=False)
                piv = self._cb[-1] ** 2
                self._mode = "banded"
        except np.linalg.LinAlgError as exc:
            raise self._classify_failure(A, dmax) from exc
        if np.min(piv) < PIVOT_TOL * dmax:
            raise SingularMatrix(f"pivot {np.min(piv):.3e} below {PIVOT_TOL} * max diagonal")

    @staticmethod
    def _classify_failure(A, dmax):
        # a failed Cholesky is either a semidefinite (singular) matrix or a truly
        # indefinite one; only small matrices are checked explicitly
        if A.shape[0] <= 3000:
            lmin = sla.eigvalsh(A.toarray(), subset_by_index=[0, 0])[0]
            if lmin > -1e-10 * dmax:
                return SingularMatrix("matrix is positive semidefinite but singular")
        return NotSpd("Cholesky factorization failed")

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``A x = b`` for a vector or a block of columns."""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"rhs has {b.shape[0]} rows, expected {self.n}")
        if self.n == 0:
            return np.zeros_like(b)
        if self._mode == "lu":
            return self._lu.solve(b)
        rhs = b[self.perm] if self.perm is not None else b
        if self._mode == "dense":
            x = sla.cho_solve(self._c, rhs, check_finite=False)
        else:
            x = sla.cho_solve_banded((self._cb, False), rhs, check_finite=False)
        if self.perm is not None:
            out = np.empty_like(x)
            out[self.perm] = x
            return out
        return x


def factorize(A, kind: str = "spd") -> Factorization:
    return Factorization(A, kind)


@dataclass
class PcgResult:
    """Outcome of :func:`pcg`.

    ``residual_history[0]`` is the initial residual norm, one entry per
    iteration follows.
    """

    x: np.ndarray
    iterations: int
    residual_history: list = field(default_factory=list)
    kappa_estimate: float = 1.0
    converged: bool = True
    eigenvalue_estimates: tuple = (1.0, 1.0)


def lanczos_extreme_eigenvalues(alphas, betas):
    """Extreme Ritz values of the Lanczos matrix generated by CG.

    ``alphas`` are the CG step lengths, ``betas`` the direction update
    coefficients (one fewer or the same number as ``alphas``).
    """
    alphas = np.asarray(alphas, float)
    m = alphas.size
    if m == 0:
        return 1.0, 1.0
    betas = np.asarray(betas, float)[: m - 1]
    d = 1.0 / alphas
    d[1:] += betas / alphas[:-1]
    e = np.sqrt(betas) / alphas[:-1]
    ev = sla.eigvalsh_tridiagonal(d, e)
    return float(ev[0]), float(ev[-1])


def pcg(apply_F, apply_P, b, tol: float = 1e-6, max_iter: int = 500,
        residual: str = "unpreconditioned", raise_on_fail: bool = True) -> PcgResult:
    """Preconditioned conjugate gradients with a Lanczos condition estimate.

    Parameters
    ----------
    apply_F, apply_P : callable
        Operator and preconditioner, both symmetric positive definite.
        ``apply_P=None`` means no preconditioning.
    b : ndarray
        Right-hand side; the initial guess is zero.
    tol : float
        Relative reduction of the residual norm that stops the iteration.
    residual : {"unpreconditioned", "preconditioned"}
        Measure the Euclidean norm of ``r`` or the ``P``-norm ``sqrt(r.z)``.

    Raises
    ------
    IndefiniteOperator
        If ``p.F p <= 0`` or ``r.P r <= 0`` for a nonzero vector.
    NotConverged
        After ``max_iter`` iterations (if ``raise_on_fail``), the partial
        result is attached.
    """
    if residual not in ("unpreconditioned", "preconditioned"):
        raise ValueError(f"unknown residual measure {residual!r}")
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    if b.size == 0 or not np.any(b):
        return PcgResult(x, 0, [], 1.0, True)
    if apply_P is None:
        apply_P = np.copy
    r = b.copy()
    z = apply_P(r)
    rz = float(r @ z)
    if rz <= 0.0:
        raise IndefiniteOperator("preconditioner is not positive definite")

    def measure(r, rz):
        return np.sqrt(rz) if residual == "preconditioned" else float(np.linalg.norm(r))

    ref = measure(r, rz)
    hist = [ref]
    alphas, betas = [], []
    p = z.copy()
    converged = False
    it = 0
    while it < max_iter:
        q = apply_F(p)
        pq = float(p @ q)
        if pq <= 0.0:
            raise IndefiniteOperator(f"p.Fp = {pq:.3e} in iteration {it + 1}")
        a = rz / pq
        x += a * p
        r -= a * q
        alphas.append(a)
        it += 1
        z = apply_P(r)
        rz_new = float(r @ z)
        res = measure(r, abs(rz_new))
        hist.append(res)
        if res <= tol * ref:
            converged = True
            break
        if rz_new <= 0.0:
            raise IndefiniteOperator("preconditioner is not positive definite")
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    lmin, lmax = lanczos_extreme_eigenvalues(alphas, betas)
    kappa = max(lmax / lmin, 1.0) if lmin > 0 else float("inf")
    out = PcgResult(x, it, hist, kappa, converged, (lmin, lmax))
    if not converged and raise_on_fail:
        raise NotConverged(f"PCG did not converge in {max_iter} iterations", result=out)
    return out


def sym_generalized_eig(D, M):
    """Solve ``D v = lam M v`` densely.

    Returns eigenvalues in ascending order and ``M``-orthonormal eigenvectors
    as columns.

    Raises
    ------
    NotSpd
        If ``M`` is not positive definite.
    """
    D = D.toarray() if sp.issparse(D) else np.asarray(D, float)
    M = M.toarray() if sp.issparse(M) else np.asarray(M, float)
    try:
        sla.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotSpd("mass matrix is not positive definite") from exc
    return sla.eigh(D, M)
