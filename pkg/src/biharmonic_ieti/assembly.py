"""Patch-local assembly of the Hessian bilinear form and dof classification.

The bilinear form is ``a(u, v) = int u_xx v_xx + 2 u_xy v_xy + u_yy v_yy``.
Matrices are assembled in the B-spline basis element by element and then
transformed to the boundary-adapted basis, ``A = T2^T A_phi T2``.

Dof classification links boundary-adapted coefficients across interfaces.
The value layer of two neighbouring patches is identified one to one, the
layer of inward derivatives satisfies ``alpha d_a + d_b = 0``.  These
relations are tracked by a union-find structure whose edges carry scalar
factors, so corner blocks around interior vertices collapse to single
primal unknowns and elimination propagates along the relations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
import scipy.sparse as sp

from .exceptions import TopologyError
from .geometry import MultiPatch, Side, check_c1_matching, eval_map_grid
from .splines import KnotVector, TensorBasis2D

# reference derivative multi-indices used by the pull-back
DERIVS = ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
HESS_WEIGHTS = np.array([1.0, 2.0, 1.0])  # xx, xy, yy
_ELEMENT_CHUNK = 4_000_000


class DofKind(IntEnum):
    INTERIOR = 0
    VALUE = 1
    DERIV = 2
    PRIMAL = 3
    ELIMINATED = 4


def make_bases(mp: MultiPatch, p: int, r: int):
    """Uniform discretization bases of degree ``p`` and ``2**r`` elements."""
    kv = KnotVector.uniform(p, r)
    return [TensorBasis2D(kv, kv) for _ in mp.patches]


# ------------------------------------------------------------------ geometry

def pullback_factors(g, xq, yq):
    """Geometry factors on the tensor grid ``xq x yq``.

    Returns
    -------
    x : (mx, my, 2)
        Physical points.
    detJ : (mx, my)
    coef : (mx, my, 3, 5)
        Physical Hessian entries (xx, xy, yy) as combinations of the
        reference derivatives listed in ``DERIVS``.
    grad : (mx, my, 2, 2)
        ``grad[..., m, b]`` maps reference first derivative ``b`` to the
        physical derivative ``m``.
    """
    x, J, H = eval_map_grid(g, xq, yq)
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    K = np.empty_like(J)  # inverse Jacobian, K[b, i] = d xhat_b / d x_i
    K[..., 0, 0] = J[..., 1, 1] / detJ
    K[..., 1, 1] = J[..., 0, 0] / detJ
    K[..., 0, 1] = -J[..., 0, 1] / detJ
    K[..., 1, 0] = -J[..., 1, 0] / detJ
    Q = np.einsum("...bi,...cj,...mbc->...mij", K, K, H)
    pairs = ((0, 0), (0, 1), (1, 1))
    coef = np.empty(x.shape[:2] + (3, 5))
    for n, (i, j) in enumerate(pairs):
        for b in range(2):
            coef[..., n, b] = -np.einsum("...m,...m->...", K[..., b, :], Q[..., :, i, j])
        coef[..., n, 2] = K[..., 0, i] * K[..., 0, j]
        coef[..., n, 3] = K[..., 0, i] * K[..., 1, j] + K[..., 1, i] * K[..., 0, j]
        coef[..., n, 4] = K[..., 1, i] * K[..., 1, j]
    grad = np.swapaxes(K, -1, -2)
    return x, detJ, coef, grad


def physical_hessian(g, basis: TensorBasis2D, coeffs, xq, yq):
    """Physical Hessian (xx, xy, yy) of a discrete function on a grid.

    ``coeffs`` are boundary-adapted coefficients over all tensor dofs.
    Returns ``(x, value, gradient, hessian)`` with trailing axes 2 and 3.
    """
    nx, ny = basis.shape
    c = (basis.transform @ np.asarray(coeffs, float)).reshape(ny, nx)
    Cx = [basis.bx.collocation(xq, d).toarray() for d in range(3)]
    Cy = [basis.by.collocation(yq, d).toarray() for d in range(3)]
    ref = {ab: Cx[ab[0]] @ c.T @ Cy[ab[1]].T for ab in ((0, 0),) + DERIVS}
    x, _, coef, grad = pullback_factors(g, xq, yq)
    R = np.stack([ref[ab] for ab in DERIVS], axis=-1)
    hess = np.einsum("...ns,...s->...n", coef, R)
    gr = np.einsum("...mb,...b->...m", grad, R[..., :2])
    return x, ref[(0, 0)], gr, hess


def _element_tables(kv: KnotVector, order: int):
    nodes, weights = kv.quadrature(order)
    first, vals = kv.eval_all(nodes.ravel(), 2)
    n_el = nodes.shape[0]
    vals = vals.reshape(n_el, order, kv.degree + 1, 3)
    first = first.reshape(n_el, order)[:, 0]
    return nodes, weights, first, vals


@dataclass
class LocalSystem:
    """Stiffness matrix and load vector of one patch in the adapted basis.

    ``A`` and ``f`` are indexed by all tensor dofs; restriction to free
    dofs happens in the solver.
    """

    A: sp.csr_matrix
    f: np.ndarray


def assemble_patch(g, basis: TensorBasis2D, source=None, quad_order: int | None = None) -> LocalSystem:
    """Assemble the Hessian form and the load ``int f v`` on one patch."""
    px, py = basis.degree
    qx = quad_order or px + 1
    qy = quad_order or py + 1
    nx_, wx, fx, vx = _element_tables(basis.bx, qx)
    ny_, wy, fy, vy = _element_tables(basis.by, qy)
    ex, ey = nx_.shape[0], ny_.shape[0]
    x, detJ, coef, _ = pullback_factors(g, nx_.ravel(), ny_.ravel())
    w = (wx.ravel()[:, None] * wy.ravel()[None, :]) * np.abs(detJ)
    # G[s, t] = sum_n c_n coef[n, s] coef[n, t] * w
    G = np.einsum("n,...ns,...nt->...st", HESS_WEIGHTS, coef, coef) * w[..., None, None]
    G = G.reshape(ex, qx, ey, qy, 5, 5).transpose(0, 2, 1, 3, 4, 5)
    fvals = None
    if source is not None:
        fvals = (source(x[..., 0], x[..., 1]) * w).reshape(ex, qx, ey, qy).transpose(0, 2, 1, 3)
    nbx, nby = px + 1, py + 1
    nloc = nbx * nby
    Nx = basis.bx.n
    loc_x = fx[:, None] + np.arange(nbx)  # (ex, nbx)
    loc_y = fy[:, None] + np.arange(nby)
    rows_all, cols_all, vals_all = [], [], []
    f_phi = np.zeros(basis.n)
    per_el = qx * qy * 5 * nloc
    chunk = max(1, _ELEMENT_CHUNK // per_el)
    els = [(a, b) for b in range(ey) for a in range(ex)]
    for start in range(0, len(els), chunk):
        sel = np.array(els[start:start + chunk])
        ia, ib = sel[:, 0], sel[:, 1]
        # V[e, qx, qy, s, i, j] = D_s phi_(i,j)
        V = np.stack([vy[ib, None, :, :, None, b] * vx[ia, :, None, None, :, a]
                      for a, b in DERIVS], axis=3)
        V = V.reshape(len(sel), qx * qy, 5, nloc)
        Ge = G[ia, ib].reshape(len(sel), qx * qy, 5, 5)
        W = np.matmul(np.swapaxes(Ge, -1, -2), V)
        m = len(sel)
        Ae = np.matmul(np.swapaxes(V.reshape(m, -1, nloc), 1, 2), W.reshape(m, -1, nloc))
        gidx = (loc_x[ia][:, None, :] + Nx * loc_y[ib][:, :, None]).reshape(len(sel), nloc)
        rows_all.append(np.repeat(gidx, nloc, axis=1).ravel())
        cols_all.append(np.tile(gidx, (1, nloc)).ravel())
        vals_all.append(Ae.reshape(len(sel), -1).ravel())
        if fvals is not None:
            B0 = np.einsum("eqi,erj->eqrij", vx[ia, :, :, 0], vy[ib, :, :, 0])
            fe = np.einsum("eqr,eqrij->eji", fvals[ia, ib], B0).reshape(len(sel), nloc)
            np.add.at(f_phi, gidx.ravel(), fe.ravel())
    A_phi = sp.coo_matrix((np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
                          shape=(basis.n, basis.n)).tocsr()
    T = basis.transform
    A = (T.T @ A_phi @ T).tocsr()
    A = 0.5 * (A + A.T)
    A.sum_duplicates()
    return LocalSystem(A.tocsr(), T.T @ f_phi)


def assemble_all(mp: MultiPatch, bases, source=None):
    return [assemble_patch(g, b, source) for g, b in zip(mp.patches, bases)]


# -------------------------------------------------------------- dof tables

def layer_dofs(basis: TensorBasis2D, side: int, layer: int) -> np.ndarray:
    """Tensor indices of a layer parallel to ``side``, ordered along the side."""
    nx, ny = basis.shape
    if side == Side.W:
        return basis.index(layer, np.arange(ny))
    if side == Side.E:
        return basis.index(nx - 1 - layer, np.arange(ny))
    if side == Side.S:
        return basis.index(np.arange(nx), layer)
    return basis.index(np.arange(nx), ny - 1 - layer)


class _SignedUnionFind:
    """Union-find with multiplicative edge factors, ``v[x] = fac[x] * v[root]``."""

    def __init__(self, n: int):
        self.parent = np.arange(n)
        self.fac = np.ones(n)

    def find(self, x: int):
        path = []
        while self.parent[x] != x:
            path.append(x)
            x = self.parent[x]
        root = x
        # compress, accumulating factors from the top down
        acc = 1.0
        for y in reversed(path):
            acc = acc * self.fac[y]
            self.fac[y] = acc
            self.parent[y] = root
        return root

    def factor(self, x: int) -> float:
        self.find(x)
        return float(self.fac[x]) if self.parent[x] != x else 1.0

    def union(self, x: int, y: int, ratio: float, tol: float = 1e-10):
        """Impose ``v[y] = ratio * v[x]``."""
        rx, ry = self.find(x), self.find(y)
        fx, fy = self.factor(x), self.factor(y)
        if rx == ry:
            if abs(fy - ratio * fx) > tol * max(1.0, abs(fy)):
                raise TopologyError("inconsistent interface relations around a vertex")
            return
        # v[ry] = v[y] / fy = ratio * fx / fy * v[rx]
        self.parent[ry] = rx
        self.fac[ry] = ratio * fx / fy


@dataclass
class PatchDofs:
    shape: tuple
    kind: np.ndarray  # DofKind per tensor dof
    free: np.ndarray  # tensor indices of non-eliminated dofs
    loc: np.ndarray  # tensor index -> position in free, or -1

    def free_of(self, kinds) -> np.ndarray:
        """Positions (within ``free``) of dofs of the given kinds."""
        kinds = np.atleast_1d(kinds)
        return np.flatnonzero(np.isin(self.kind[self.free], kinds))


@dataclass
class InterfacePair:
    a: int
    loc_a: int  # free position in patch a
    coef_a: float
    b: int
    loc_b: int
    coef_b: float
    kind: DofKind


@dataclass
class DofTable:
    """Classification of all dofs of a discretized multi-patch domain."""

    patches: list  # PatchDofs
    alphas: list
    pairs: list  # InterfacePair, one per Lagrange multiplier
    n_primal: int
    primal: list  # per patch: (free positions, global primal ids, factors)
    n_global: int
    conforming: list = field(default_factory=list)  # per patch sparse map free -> global

    @property
    def n_multipliers(self) -> int:
        return len(self.pairs)


def classify_dofs(mp: MultiPatch, bases, alphas=None) -> DofTable:
    """Classify dofs and derive primal, multiplier and conforming maps.

    Raises
    ------
    NotMatching
        If the geometry is not C^1-matching across an interface.
    TopologyError
        If interface relations are contradictory or interface sides carry
        different numbers of basis functions.
    """
    if alphas is None:
        alphas = check_c1_matching(mp)
    sizes = [b.n for b in bases]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    uf = _SignedUnionFind(int(offs[-1]))
    elim = np.zeros(int(offs[-1]), bool)
    for k, s in mp.boundary:
        for layer in (0, 1):
            elim[offs[k] + layer_dofs(bases[k], s, layer)] = True
    for itf, alpha in zip(mp.interfaces, alphas):
        for layer, ratio in ((0, 1.0), (1, -alpha)):
            da = layer_dofs(bases[itf.a], itf.side_a, layer)
            db = layer_dofs(bases[itf.b], itf.side_b, layer)
            if da.size != db.size:
                raise TopologyError(f"interface {itf} has non-matching discretizations")
            if itf.orient == -1:
                db = db[::-1]
            for x, y in zip(da, db):
                uf.union(int(offs[itf.a] + x), int(offs[itf.b] + y), ratio)
    n = int(offs[-1])
    roots = np.array([uf.find(i) for i in range(n)])
    facs = np.array([uf.factor(i) for i in range(n)])
    root_elim = np.zeros(n, bool)
    root_elim[roots[elim]] = True
    elim_all = root_elim[roots]
    class_size = np.bincount(roots, minlength=n)

    patches = []
    corner_mask = []
    for k, b in enumerate(bases):
        nx, ny = b.shape
        ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
        ix, iy = ix.ravel(), iy.ravel()
        near = lambda i, m: (i <= 1) | (i >= m - 2)
        corner = near(ix, nx) & near(iy, ny)
        g = offs[k] + np.arange(b.n)
        kind = np.full(b.n, DofKind.INTERIOR, dtype=int)
        linked = class_size[roots[g]] > 1
        kind[linked & corner] = DofKind.PRIMAL
        on_edge = linked & ~corner
        layer0 = (ix == 0) | (ix == nx - 1) | (iy == 0) | (iy == ny - 1)
        kind[on_edge & layer0] = DofKind.VALUE
        kind[on_edge & ~layer0] = DofKind.DERIV
        kind[elim_all[g]] = DofKind.ELIMINATED
        free = np.flatnonzero(kind != DofKind.ELIMINATED)
        loc = np.full(b.n, -1)
        loc[free] = np.arange(free.size)
        patches.append(PatchDofs((nx, ny), kind, free, loc))
        corner_mask.append(corner)

    # classes of non-eliminated dofs, numbered by their smallest member
    keep = ~elim_all
    uniq_roots = np.unique(roots[keep])
    first_member = {}
    for i in np.flatnonzero(keep):
        first_member.setdefault(int(roots[i]), int(i))
    order = sorted(uniq_roots.tolist(), key=lambda r_: first_member[r_])
    gid = {r_: n_ for n_, r_ in enumerate(order)}
    prim_roots = []
    for k, pd in enumerate(patches):
        g = offs[k] + pd.free
        is_p = pd.kind[pd.free] == DofKind.PRIMAL
        for r_ in roots[g[is_p]]:
            prim_roots.append(int(r_))
    prim_order = sorted(set(prim_roots), key=lambda r_: first_member[r_])
    pid = {r_: n_ for n_, r_ in enumerate(prim_order)}

    conforming, primal = [], []
    for k, pd in enumerate(patches):
        g = offs[k] + pd.free
        cols = np.array([gid[int(r_)] for r_ in roots[g]], dtype=int)
        conforming.append(sp.csr_matrix((facs[g], (np.arange(pd.free.size), cols)),
                                        shape=(pd.free.size, len(order))))
        pos = pd.free_of(DofKind.PRIMAL)
        ids = np.array([pid[int(r_)] for r_ in roots[g[pos]]], dtype=int)
        primal.append((pos, ids, facs[g[pos]]))
        # classes must not mix corner and edge dofs
        for t in pd.free[pd.kind[pd.free] == DofKind.PRIMAL]:
            if not corner_mask[k][t]:
                raise TopologyError("primal class contains a non-corner dof")

    pairs = []
    for itf, alpha in zip(mp.interfaces, alphas):
        for layer, kind, ca in ((0, DofKind.VALUE, 1.0), (1, DofKind.DERIV, alpha)):
            da = layer_dofs(bases[itf.a], itf.side_a, layer)
            db = layer_dofs(bases[itf.b], itf.side_b, layer)
            if itf.orient == -1:
                db = db[::-1]
            pa, pb = patches[itf.a], patches[itf.b]
            for x, y in zip(da, db):
                if pa.kind[x] != kind:
                    continue
                if pb.kind[y] != kind:
                    raise TopologyError("interface dofs classified inconsistently")
                cb = -1.0 if kind == DofKind.VALUE else 1.0
                pairs.append(InterfacePair(itf.a, int(pa.loc[x]), ca, itf.b, int(pb.loc[y]), cb, kind))
    return DofTable(patches, list(alphas), pairs, len(prim_order), primal, len(order), conforming)


def quasi_interpolant(g, basis: TensorBasis2D, u, grad=None, n_samples: int | None = None):
    """Least-squares fit of ``u`` in the adapted spline space.

    If ``grad`` is given, the value and the two inward-derivative
    coefficients at each patch corner are matched exactly first.  Returns the
    coefficients of all tensor dofs.
    """
    nx, ny = basis.shape
    q = n_samples or basis.degree[0] + 2
    xs = basis.bx.quadrature(q)[0].ravel()
    ys = basis.by.quadrature(q)[0].ravel()
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts_phys = eval_map_grid(g, xs, ys)[0]  # (mx, my, 2)
    vals = u(pts_phys[..., 0], pts_phys[..., 1]).T.ravel()  # y-major like tensor dofs
    Cx = basis.bx.collocation(xs) @ basis.bx.transform
    Cy = basis.by.collocation(ys) @ basis.by.transform
    C = sp.kron(Cy, Cx, format="csr")
    fixed = {}
    if grad is not None:
        from .geometry import eval_map
        for cx in (0, 1):
            for cy in (0, 1):
                pt = np.array([[float(cx), float(cy)]])
                xp, J = eval_map(g, pt, order=1)
                gu = grad(xp[:, 0], xp[:, 1]).reshape(2)
                ix = 0 if cx == 0 else nx - 1
                iy = 0 if cy == 0 else ny - 1
                dx = 1 if cx == 0 else nx - 2
                dy = 1 if cy == 0 else ny - 2
                sx = 1.0 if cx == 0 else -1.0  # layer-1 functions carry inward slopes
                sy = 1.0 if cy == 0 else -1.0
                fixed[int(basis.index(ix, iy))] = float(u(xp[:, 0], xp[:, 1])[0])
                fixed[int(basis.index(dx, iy))] = sx * float(gu @ J[0, :, 0])
                fixed[int(basis.index(ix, dy))] = sy * float(gu @ J[0, :, 1])
    c = np.zeros(basis.n)
    fix_idx = np.array(sorted(fixed), dtype=int)
    if fix_idx.size:
        c[fix_idx] = [fixed[i] for i in fix_idx]
    rest = np.setdiff1d(np.arange(basis.n), fix_idx)
    rhs = vals - C[:, fix_idx] @ c[fix_idx] if fix_idx.size else vals
    Cr = C[:, rest]
    c[rest] = sp.linalg.spsolve((Cr.T @ Cr).tocsc(), Cr.T @ rhs)
    return c


def h2_seminorm_error(mp: MultiPatch, bases, coeffs, exact_hessian, order: int | None = None):
    """``|u_h - u|_{H^2}`` summed over patches.

    ``coeffs`` holds all tensor coefficients per patch, ``exact_hessian``
    maps ``(x, y)`` to an array ``(..., 2, 2)``.
    """
    total = 0.0
    for g, b, c in zip(mp.patches, bases, coeffs):
        q = order or b.degree[0] + 2
        nx_, wx = b.bx.quadrature(q)
        ny_, wy = b.by.quadrature(q)
        xq, yq = nx_.ravel(), ny_.ravel()
        x, _, _, hess = physical_hessian(g, b, c, xq, yq)
        _, detJ, _, _ = pullback_factors(g, xq, yq)
        He = exact_hessian(x[..., 0], x[..., 1])
        diff = hess - np.stack([He[..., 0, 0], He[..., 0, 1], He[..., 1, 1]], axis=-1)
        w = wx.ravel()[:, None] * wy.ravel()[None, :] * np.abs(detJ)
        total += float(np.sum(w * np.einsum("n,...n->...", HESS_WEIGHTS, diff ** 2)))
    return np.sqrt(total)
