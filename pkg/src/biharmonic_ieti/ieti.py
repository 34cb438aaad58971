"""Dual-primal tearing and interconnecting for the multi-patch plate problem.

Local dofs of each patch split into interior ``I``, interface ``Gamma``
(value layer ``V`` and derivative layer ``D``) and primal corner dofs ``Pi``;
``Delta = I + Gamma``.  Continuity of ``Gamma`` dofs is enforced by Lagrange
multipliers, primal dofs are global unknowns.  Eliminating everything but the
multipliers gives ``F lam = b`` which is solved by PCG.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import DofKind, DofTable, assemble_all, classify_dofs, make_bases
from .exceptions import SingularMatrix
from .linalg import factorize, pcg

PRECONDITIONERS = ("scaled", "modified", "none")


@dataclass
class SolverConfig:
    """Options of the dual solver.

    ``scaling`` multiplies the scaled Dirichlet preconditioner; with two
    patches per multiplier the natural value is 1/4.
    """

    precond: str = "scaled"
    tol: float = 1e-6
    max_iter: int = 500
    scaling: float = 0.25
    residual: str = "unpreconditioned"
    raise_on_fail: bool = True

    def __post_init__(self):
        if self.precond not in PRECONDITIONERS:
            raise ValueError(f"precond must be one of {PRECONDITIONERS}")
        if self.tol <= 0 or self.max_iter < 0:
            raise ValueError("tol must be positive and max_iter non-negative")
        if self.residual not in ("unpreconditioned", "preconditioned"):
            raise ValueError("residual must be 'unpreconditioned' or 'preconditioned'")


def jump_matrices(dofs: DofTable):
    """Per-patch jump matrices ``B_k`` over the free dofs of patch ``k``."""
    n_lam = dofs.n_multipliers
    rows = [[] for _ in dofs.patches]
    cols = [[] for _ in dofs.patches]
    vals = [[] for _ in dofs.patches]
    for n, pr in enumerate(dofs.pairs):
        for k, loc, c in ((pr.a, pr.loc_a, pr.coef_a), (pr.b, pr.loc_b, pr.coef_b)):
            rows[k].append(n)
            cols[k].append(loc)
            vals[k].append(c)
    return [sp.csr_matrix((vals[k], (rows[k], cols[k])), shape=(n_lam, pd.free.size))
            for k, pd in enumerate(dofs.patches)]


def primal_maps(dofs: DofTable):
    """Per-patch ``R_k`` mapping global primal values to local primal dofs."""
    out = []
    for pos, ids, fac in dofs.primal:
        out.append(sp.csr_matrix((fac, (np.arange(pos.size), ids)), shape=(pos.size, dofs.n_primal)))
    return out


class PatchSolver:
    """Local factorizations and operators of one patch."""

    def __init__(self, A_free, f_free, pd, B, R, precond: str):
        kind = pd.kind[pd.free]
        self.P = np.flatnonzero(kind == DofKind.PRIMAL)
        self.Dl = np.flatnonzero(kind != DofKind.PRIMAL)  # Delta
        kd = kind[self.Dl]
        self.I = np.flatnonzero(kd == DofKind.INTERIOR)  # positions within Delta
        self.G = np.flatnonzero((kd == DofKind.VALUE) | (kd == DofKind.DERIV))
        self.n_free = A_free.shape[0]
        A = A_free.tocsr()
        self.A_DD = A[self.Dl][:, self.Dl].tocsr()
        self.A_DP = A[self.Dl][:, self.P].toarray()
        self.A_PP = A[self.P][:, self.P].toarray()
        self.f_D = f_free[self.Dl]
        self.f_P = f_free[self.P]
        self.B = B[:, self.Dl].tocsc()
        self.BT = self.B.T.tocsr()
        self.R = R
        self.active = np.unique(self.B.indices) if self.B.nnz else np.array([], dtype=int)
        self.fac_DD = factorize(self.A_DD)
        self.Phi = self.fac_DD.solve(self.A_DP) if self.P.size else np.zeros((self.Dl.size, 0))
        self.S_PP = self.A_PP - self.A_DP.T @ self.Phi
        self.Ainv_f = self.fac_DD.solve(self.f_D)
        self.B_G = self.B[:, self.G].tocsr()
        self.BT_G = self.B_G.T.tocsr()
        if precond == "scaled":
            self._setup_dirichlet()
        elif precond == "modified":
            self._setup_modified(kd)

    def _setup_dirichlet(self):
        A = self.A_DD
        self.A_GG = A[self.G][:, self.G].tocsr()
        self.A_IG = A[self.I][:, self.G].tocsr()
        self.fac_II = factorize(A[self.I][:, self.I])

    def _setup_modified(self, kd):
        A = self.A_DD
        Gk = kd[self.G]
        self.V = self.G[Gk == DofKind.VALUE]
        self.D = self.G[Gk == DofKind.DERIV]
        self.Vpos = np.flatnonzero(Gk == DofKind.VALUE)
        self.Dpos = np.flatnonzero(Gk == DofKind.DERIV)
        J_V = np.union1d(self.I, self.D)  # eliminated when reducing onto V
        J_D = np.union1d(self.I, self.V)
        self.mod = []
        for S, J, pos in ((self.V, J_V, self.Vpos), (self.D, J_D, self.Dpos)):
            self.mod.append((pos, A[S][:, S].tocsr(), A[J][:, S].tocsr(), factorize(A[J][:, J])))

    def schur_dirichlet(self, x):
        """``(A_GG - A_GI A_II^-1 A_IG) x``."""
        y = self.A_GG @ x
        if self.I.size:
            y -= self.A_IG.T @ self.fac_II.solve(self.A_IG @ x)
        return y

    def schur_modified(self, x):
        y = np.zeros_like(x)
        for pos, A_SS, A_JS, fac in self.mod:
            xs = x[pos]
            y[pos] = A_SS @ xs - A_JS.T @ fac.solve(A_JS @ xs)
        return y


@dataclass
class IetiResult:
    """Solution and statistics of one IETI-DP solve."""

    coefficients: list  # per patch, all tensor coefficients (adapted basis)
    iterations: int
    kappa: float
    residual_history: list
    converged: bool
    n_multipliers: int
    n_primal: int
    n_dofs: int
    setup_time: float
    solve_time: float
    multipliers: np.ndarray = field(repr=False, default=None)


class IetiSystem:
    """Assembled dual system ``F lam = b`` with preconditioners.

    Parameters
    ----------
    mp : MultiPatch
    bases : list of TensorBasis2D
    systems : list of LocalSystem
        Patch stiffness matrices and loads over all tensor dofs.
    dofs : DofTable, optional
    config : SolverConfig
    """

    def __init__(self, mp, bases, systems, dofs: DofTable | None = None, config: SolverConfig | None = None):
        self.config = config or SolverConfig()
        self.bases = bases
        self.dofs = dofs or classify_dofs(mp, bases)
        self.B = jump_matrices(self.dofs)
        self.R = primal_maps(self.dofs)
        self.n_lam = self.dofs.n_multipliers
        self.n_primal = self.dofs.n_primal
        self.patches = []
        for k, (ls, pd) in enumerate(zip(systems, self.dofs.patches)):
            A = ls.A[pd.free][:, pd.free]
            self.patches.append(PatchSolver(A, ls.f[pd.free], pd, self.B[k], self.R[k], self.config.precond))
        self._setup_primal()

    def _setup_primal(self):
        n = self.n_primal
        S = np.zeros((n, n))
        B_Pi = np.zeros((self.n_lam, n))
        f_Pi = np.zeros(n)
        for ps in self.patches:
            if ps.P.size == 0:
                continue
            Rd = ps.R.toarray()
            S += Rd.T @ ps.S_PP @ Rd
            B_Pi -= (ps.B @ ps.Phi) @ Rd
            f_Pi += Rd.T @ (ps.f_P - ps.Phi.T @ ps.f_D)
        self.S_PiPi, self.B_Pi, self.f_Pi = S, B_Pi, f_Pi
        if n:
            try:
                self.S_fac = sla.cho_factor(S)
            except np.linalg.LinAlgError as exc:
                raise SingularMatrix("primal Schur complement is singular") from exc

    def _S_solve(self, x):
        return sla.cho_solve(self.S_fac, x) if self.n_primal else np.zeros(0)

    # ---------------------------------------------------------- operators
    def apply_F(self, lam):
        y = np.zeros(self.n_lam)
        for ps in self.patches:
            if ps.B.nnz:
                y += ps.B @ ps.fac_DD.solve(ps.BT @ lam)
        if self.n_primal:
            y += self.B_Pi @ self._S_solve(self.B_Pi.T @ lam)
        return y

    def apply_M(self, lam):
        """Scaled Dirichlet preconditioner."""
        y = np.zeros(self.n_lam)
        for ps in self.patches:
            if ps.B_G.nnz:
                y += ps.B_G @ ps.schur_dirichlet(ps.BT_G @ lam)
        return self.config.scaling * y

    def apply_M_mod(self, lam):
        """Preconditioner with decoupled value and derivative layers."""
        y = np.zeros(self.n_lam)
        for ps in self.patches:
            if ps.B_G.nnz:
                y += ps.B_G @ ps.schur_modified(ps.BT_G @ lam)
        return y

    def preconditioner(self):
        return {"scaled": self.apply_M, "modified": self.apply_M_mod, "none": None}[self.config.precond]

    def rhs(self):
        b = np.zeros(self.n_lam)
        for ps in self.patches:
            if ps.B.nnz:
                b += ps.B @ ps.Ainv_f
        if self.n_primal:
            b += self.B_Pi @ self._S_solve(self.f_Pi)
        return b

    def recover(self, lam):
        """Patchwise coefficient vectors over all tensor dofs."""
        w = self._S_solve(self.f_Pi - self.B_Pi.T @ lam) if self.n_primal else np.zeros(0)
        out = []
        for ps, pd, basis in zip(self.patches, self.dofs.patches, self.bases):
            u_free = np.zeros(ps.n_free)
            uP = ps.R @ w if ps.P.size else np.zeros(0)
            uD = ps.fac_DD.solve(ps.f_D - ps.BT @ lam) if ps.B.nnz else ps.Ainv_f.copy()
            if ps.P.size:
                uD -= ps.Phi @ uP
            u_free[ps.Dl] = uD
            u_free[ps.P] = uP
            u = np.zeros(basis.n)
            u[pd.free] = u_free
            out.append(u)
        return out

    def dense(self, which: str = "F"):
        """Dense matrix of an operator, for small systems only."""
        op = {"F": self.apply_F, "M": self.apply_M, "M_mod": self.apply_M_mod}[which]
        E = np.eye(self.n_lam)
        return np.column_stack([op(E[:, i]) for i in range(self.n_lam)])

    @property
    def n_dofs(self) -> int:
        return int(sum(pd.free.size for pd in self.dofs.patches))


def solve_dual(system: IetiSystem):
    cfg = system.config
    b = system.rhs()
    res = pcg(system.apply_F, system.preconditioner(), b, tol=cfg.tol, max_iter=cfg.max_iter,
              residual=cfg.residual, raise_on_fail=cfg.raise_on_fail)
    return res


def solve(mp, p: int, r: int, source, config: SolverConfig | None = None) -> IetiResult:
    """Discretize, assemble and solve by IETI-DP.

    Parameters
    ----------
    mp : MultiPatch
    p, r : int
        Spline degree and refinement level (``2**r`` elements per direction).
    source : callable
        Right-hand side ``f(x, y)``.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    bases = make_bases(mp, p, r)
    systems = assemble_all(mp, bases, source)
    system = IetiSystem(mp, bases, systems, config=config)
    t1 = time.perf_counter()
    res = solve_dual(system)
    coeffs = system.recover(res.x)
    t2 = time.perf_counter()
    return IetiResult(coeffs, res.iterations, res.kappa_estimate, res.residual_history, res.converged,
                      system.n_lam, system.n_primal, system.n_dofs, t1 - t0, t2 - t1, res.x)


# ---------------------------------------------------------------- reference

def conforming_system(dofs: DofTable, systems):
    """Globally assembled matrix and load of the conforming C^1 space."""
    A = None
    f = np.zeros(dofs.n_global)
    for Z, pd, ls in zip(dofs.conforming, dofs.patches, systems):
        Ak = ls.A[pd.free][:, pd.free]
        term = (Z.T @ Ak @ Z).tocsr()
        A = term if A is None else A + term
        f += Z.T @ ls.f[pd.free]
    return A.tocsr(), f


def monolithic_solve(mp, bases, systems, dofs: DofTable | None = None):
    """Direct solve in the conforming space; returns per-patch coefficients."""
    dofs = dofs or classify_dofs(mp, bases)
    A, f = conforming_system(dofs, systems)
    u = factorize(A).solve(f)
    out = []
    for Z, pd, b in zip(dofs.conforming, dofs.patches, bases):
        c = np.zeros(b.n)
        c[pd.free] = Z @ u
        out.append(c)
    return out


def relative_difference(u, v) -> float:
    a = np.concatenate(u)
    b = np.concatenate(v)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
