"""Spline geometry maps and multi-patch topology.

Sides of the parameter square are numbered ``W=0`` (x=0), ``E=1`` (x=1),
``S=2`` (y=0), ``N=3`` (y=1).  Every side is traversed in the direction of the
increasing free parameter.  Corners are ``c = cx + 2 cy``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .exceptions import DegenerateJacobian, NotMatching, ParseError, TopologyError
from .splines import basis_derivatives, collocation_matrix


class Side(IntEnum):
    W = 0
    E = 1
    S = 2
    N = 3


SIDE_CORNERS = {Side.W: (0, 2), Side.E: (1, 3), Side.S: (0, 1), Side.N: (2, 3)}
CORNER_SIDES = {0: (Side.W, Side.S), 1: (Side.E, Side.S), 2: (Side.W, Side.N), 3: (Side.E, Side.N)}


def side_points(side: int, t) -> np.ndarray:
    """Parameter points ``(m, 2)`` on a side, ``t`` being the free parameter."""
    t = np.atleast_1d(np.asarray(t, float))
    fixed = 0.0 if side in (Side.W, Side.S) else 1.0
    if side in (Side.W, Side.E):
        return np.stack([np.full_like(t, fixed), t], axis=1)
    return np.stack([t, np.full_like(t, fixed)], axis=1)


def inward_direction(side: int) -> np.ndarray:
    return {Side.W: np.array([1.0, 0.0]), Side.E: np.array([-1.0, 0.0]),
            Side.S: np.array([0.0, 1.0]), Side.N: np.array([0.0, -1.0])}[Side(side)]


@dataclass(frozen=True, eq=False)
class GeometryMap:
    """Tensor-product B-spline map from the unit square to the plane.

    ``cps[i, j]`` is the control point of function ``i`` in the first and
    ``j`` in the second parameter direction.
    """

    degree: tuple
    knots_u: np.ndarray
    knots_v: np.ndarray
    cps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "degree", (int(self.degree[0]), int(self.degree[1])))
        U = np.asarray(self.knots_u, float)
        V = np.asarray(self.knots_v, float)
        P = np.asarray(self.cps, float)
        object.__setattr__(self, "knots_u", U)
        object.__setattr__(self, "knots_v", V)
        nu, nv = len(U) - self.degree[0] - 1, len(V) - self.degree[1] - 1
        if P.shape != (nu, nv, 2):
            raise ValueError(f"control net has shape {P.shape}, expected {(nu, nv, 2)}")
        object.__setattr__(self, "cps", P)

    @property
    def diameter(self) -> float:
        P = self.cps.reshape(-1, 2)
        return float(np.linalg.norm(P.max(0) - P.min(0)))

    @property
    def breaks_u(self):
        return np.unique(self.knots_u)

    @property
    def breaks_v(self):
        return np.unique(self.knots_v)

    def __call__(self, pts) -> np.ndarray:
        return eval_map(self, pts, order=0)[0]


def eval_map(g: GeometryMap, pts, order: int = 2, check: bool = True):
    """Evaluate a map and its derivatives at scattered parameter points.

    Returns
    -------
    x : (m, 2)
    J : (m, 2, 2), ``J[q, a, b] = d x_a / d xhat_b``  (only if order >= 1)
    H : (m, 2, 2, 2), ``H[q, a, b, c] = d^2 x_a / d xhat_b d xhat_c``  (order 2)

    Raises
    ------
    DegenerateJacobian
        If ``|det J| < 1e-14 * diam**2`` at some point and ``check`` is set.
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    pu, pv = g.degree
    su, du = basis_derivatives(g.knots_u, pu, pts[:, 0], order)
    sv, dv = basis_derivatives(g.knots_v, pv, pts[:, 1], order)
    iu = su[:, None] - pu + np.arange(pu + 1)
    iv = sv[:, None] - pv + np.arange(pv + 1)
    C = g.cps[iu[:, :, None], iv[:, None, :]]  # (m, pu+1, pv+1, 2)

    def comb(a, b):
        return np.einsum("qi,qj,qijd->qd", du[:, a], dv[:, b], C)

    out = [comb(0, 0)]
    if order >= 1:
        J = np.stack([comb(1, 0), comb(0, 1)], axis=2)
        if check:
            _check_jacobian(g, J)
        out.append(J)
    if order >= 2:
        H = np.empty((pts.shape[0], 2, 2, 2))
        H[:, :, 0, 0] = comb(2, 0)
        H[:, :, 0, 1] = H[:, :, 1, 0] = comb(1, 1)
        H[:, :, 1, 1] = comb(0, 2)
        out.append(H)
    return tuple(out)


def eval_map_grid(g: GeometryMap, xu, xv, check: bool = True):
    """Map and derivatives on the tensor grid ``xu x xv``.

    Arrays are indexed ``[iu, iv, ...]`` with the same layout as
    :func:`eval_map`.
    """
    pu, pv = g.degree
    Bu = [collocation_matrix(g.knots_u, pu, xu, k).toarray() for k in range(3)]
    Bv = [collocation_matrix(g.knots_v, pv, xv, k).toarray() for k in range(3)]

    def comb(a, b):
        return np.einsum("ui,vj,ijd->uvd", Bu[a], Bv[b], g.cps)

    x = comb(0, 0)
    J = np.stack([comb(1, 0), comb(0, 1)], axis=3)
    if check:
        _check_jacobian(g, J)
    H = np.empty(x.shape[:2] + (2, 2, 2))
    H[..., 0, 0] = comb(2, 0)
    H[..., 0, 1] = H[..., 1, 0] = comb(1, 1)
    H[..., 1, 1] = comb(0, 2)
    return x, J, H


def _check_jacobian(g, J):
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.min(np.abs(det)) < 1e-14 * g.diameter ** 2:
        raise DegenerateJacobian("geometry map has a vanishing Jacobian")


def jacobian_determinant_range(g: GeometryMap, samples: int = 21):
    """Min and max of ``det J`` on a sample grid including all breakpoints."""
    xu = np.union1d(np.linspace(0, 1, samples), g.breaks_u)
    xv = np.union1d(np.linspace(0, 1, samples), g.breaks_v)
    _, J, _ = eval_map_grid(g, xu, xv, check=False)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    return float(det.min()), float(det.max())


@dataclass(frozen=True)
class Interface:
    """Shared side of patches ``a`` and ``b``.

    ``orient=+1`` if both sides run in the same direction, else ``-1``.
    """

    a: int
    side_a: int
    b: int
    side_b: int
    orient: int = 1

    def __post_init__(self):
        if self.orient not in (1, -1):
            raise ValueError("orient must be +1 or -1")


@dataclass
class Vertex:
    point: np.ndarray
    corners: list  # (patch, corner code)
    on_boundary: bool


@dataclass
class MultiPatch:
    """Patches together with their interfaces and boundary sides."""

    patches: list
    interfaces: list
    boundary: list  # (patch, side)
    vertices: list = field(default_factory=list)

    def __post_init__(self):
        self.interfaces = [i if isinstance(i, Interface) else Interface(*i) for i in self.interfaces]
        self.boundary = [(int(k), int(s)) for k, s in self.boundary]
        self._validate_sides()
        if not self.vertices:
            self.vertices = find_vertices(self)

    @property
    def n_patches(self) -> int:
        return len(self.patches)

    def _validate_sides(self):
        used = {}
        for i in self.interfaces:
            for k, s in ((i.a, i.side_a), (i.b, i.side_b)):
                if not (0 <= k < self.n_patches and 0 <= s < 4):
                    raise TopologyError(f"invalid side ({k}, {s})")
                if (k, s) in used:
                    raise TopologyError(f"side ({k}, {s}) used twice")
                used[(k, s)] = True
        for k, s in self.boundary:
            if not (0 <= k < self.n_patches and 0 <= s < 4):
                raise TopologyError(f"invalid boundary side ({k}, {s})")
            if (k, s) in used:
                raise TopologyError(f"side ({k}, {s}) is both interface and boundary")
            used[(k, s)] = True
        if len(used) != 4 * self.n_patches:
            raise TopologyError("every side must be an interface or a boundary side")

    def interior_vertices(self):
        return [v for v in self.vertices if not v.on_boundary]

    def euler_characteristic(self) -> int:
        n_edges = len(self.interfaces) + len(self.boundary)
        return len(self.vertices) - n_edges + self.n_patches


def _corner_point(g: GeometryMap, c: int) -> np.ndarray:
    i = 0 if c % 2 == 0 else g.cps.shape[0] - 1
    j = 0 if c < 2 else g.cps.shape[1] - 1
    return g.cps[i, j]


def find_vertices(mp: MultiPatch, tol: float = 1e-9):
    scale = max(g.diameter for g in mp.patches)
    bnd = set(mp.boundary)
    verts: list[Vertex] = []
    for k, g in enumerate(mp.patches):
        for c in range(4):
            x = _corner_point(g, c)
            hit = None
            for v in verts:
                if np.linalg.norm(v.point - x) <= tol * scale:
                    hit = v
                    break
            if hit is None:
                hit = Vertex(x.copy(), [], False)
                verts.append(hit)
            hit.corners.append((k, c))
            if any((k, int(s)) in bnd for s in CORNER_SIDES[c]):
                hit.on_boundary = True
    return verts


def detect_topology(patches, tol: float = 1e-9, samples: int = 7):
    """Find interfaces and boundary sides by comparing sampled side traces."""
    scale = max(g.diameter for g in patches)
    t = np.linspace(0.0, 1.0, samples)
    traces = {(k, s): g(side_points(s, t)) for k, g in enumerate(patches) for s in range(4)}
    matched = {}
    interfaces = []
    keys = list(traces)
    for n, ka in enumerate(keys):
        if ka in matched:
            continue
        for kb in keys[n + 1:]:
            if kb in matched or kb[0] == ka[0]:
                continue
            ta, tb = traces[ka], traces[kb]
            for orient, tt in ((1, tb), (-1, tb[::-1])):
                if np.max(np.linalg.norm(ta - tt, axis=1)) <= tol * scale:
                    interfaces.append(Interface(ka[0], ka[1], kb[0], kb[1], orient))
                    matched[ka] = matched[kb] = True
                    break
            if ka in matched:
                break
    boundary = [k for k in keys if k not in matched]
    return interfaces, boundary


def from_patches(patches, tol: float = 1e-9) -> MultiPatch:
    interfaces, boundary = detect_topology(patches, tol)
    return MultiPatch(list(patches), interfaces, boundary)


def _side_tangent_and_inward(g: GeometryMap, side: int, t):
    pts = side_points(side, t)
    x, J = eval_map(g, pts, order=1)
    tdir = 1 if side in (Side.W, Side.E) else 0
    tangent = J[:, :, tdir]
    inward = J @ inward_direction(side)
    return x, tangent, inward


def check_c1_matching(mp: MultiPatch, samples: int = 17, tol: float = 1e-8):
    """Verify that parameterizations match and return one weight per interface.

    The weight ``alpha`` is defined by ``d_in G_b = -alpha d_in G_a`` along
    the interface, ``d_in`` being the derivative in the inward parameter
    direction of each patch.

    Raises
    ------
    NotMatching
        If traces, tangents or the transversal relation fail at ``tol``
        (relative to the patch scale), or ``alpha`` is not positive.
    """
    t = np.linspace(0.0, 1.0, samples)
    alphas = []
    for itf in mp.interfaces:
        ga, gb = mp.patches[itf.a], mp.patches[itf.b]
        tb = t if itf.orient == 1 else 1.0 - t
        xa, ta, da = _side_tangent_and_inward(ga, itf.side_a, t)
        xb, tb_, db = _side_tangent_and_inward(gb, itf.side_b, tb)
        scale = max(ga.diameter, gb.diameter)
        if np.max(np.linalg.norm(xa - xb, axis=1)) > tol * scale:
            raise NotMatching(f"traces differ on interface {itf}")
        dscale = max(np.max(np.abs(ta)), np.max(np.abs(da)), np.max(np.abs(db)))
        if np.max(np.abs(ta - itf.orient * tb_)) > tol * dscale:
            raise NotMatching(f"tangential parameterizations differ on interface {itf}")
        alpha = -float(np.sum(da * db) / np.sum(da * da))
        if alpha <= 0.0:
            raise NotMatching(f"interface {itf} folds over")
        if np.max(np.abs(db + alpha * da)) > tol * dscale:
            raise NotMatching(f"transversal derivatives are not proportional on {itf}")
        alphas.append(alpha)
    return alphas


# ---------------------------------------------------------------- splitting

def insert_knot(knots, p: int, P: np.ndarray, t: float):
    """Insert ``t`` once into a curve (control points along axis 0)."""
    U = np.asarray(knots, float)
    k = int(np.searchsorted(U, t, side="right") - 1)
    k = min(k, len(U) - p - 2)
    n = P.shape[0]
    Q = np.empty((n + 1,) + P.shape[1:])
    Q[: k - p + 1] = P[: k - p + 1]
    Q[k + 1:] = P[k:]
    for i in range(k - p + 1, k + 1):
        a = (t - U[i]) / (U[i + p] - U[i])
        Q[i] = (1.0 - a) * P[i - 1] + a * P[i]
    return np.insert(U, k + 1, t), Q


def _split_curve(knots, p, P, breaks):
    """Split along axis 0 at ``breaks`` (which include 0 and 1)."""
    U = np.asarray(knots, float)
    for b in breaks[1:-1]:
        mult = int(np.sum(np.abs(U - b) < 1e-14))
        for _ in range(max(p - mult, 0)):
            U, P = insert_knot(U, p, P, b)
    pieces = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        last_a = int(np.flatnonzero(np.abs(U - a) < 1e-14)[-1])
        start = last_a - p
        inner = U[(U > a + 1e-14) & (U < b - 1e-14)]
        cnt = p + 1 + inner.size
        sub_knots = np.concatenate([np.full(p + 1, a), inner, np.full(p + 1, b)])
        sub_knots = (sub_knots - a) / (b - a)
        sub_knots[: p + 1], sub_knots[-p - 1:] = 0.0, 1.0
        pieces.append((sub_knots, P[start:start + cnt].copy()))
    return pieces


def split_patch(g: GeometryMap, s_u: int, s_v: int | None = None):
    """Split a patch uniformly into ``s_u x s_v`` exactly reparameterized patches.

    Sub-patches are returned in order ``i_u + s_u * i_v``.
    """
    s_v = s_u if s_v is None else s_v
    pu, pv = g.degree
    bu = np.linspace(0.0, 1.0, s_u + 1)
    bv = np.linspace(0.0, 1.0, s_v + 1)
    nu, nv = g.cps.shape[:2]
    cols = _split_curve(g.knots_u, pu, g.cps.reshape(nu, nv * 2), bu)
    out = {}
    for iu, (ku, Pu) in enumerate(cols):
        m = Pu.shape[0]
        Pt = Pu.reshape(m, nv, 2).transpose(1, 0, 2).reshape(nv, m * 2)
        for iv, (kv, Pv) in enumerate(_split_curve(g.knots_v, pv, Pt, bv)):
            net = Pv.reshape(Pv.shape[0], m, 2).transpose(1, 0, 2)
            out[iu + s_u * iv] = GeometryMap(g.degree, ku, kv, net)
    return [out[i] for i in range(s_u * s_v)]


def split_multipatch(mp: MultiPatch, s: int) -> MultiPatch:
    """Split every patch ``s x s`` and rebuild the topology."""
    patches = [q for g in mp.patches for q in split_patch(g, s)]
    return from_patches(patches)


# ---------------------------------------------------------------- file format

def multipatch_to_dict(mp: MultiPatch) -> dict:
    pts = []
    for g in mp.patches:
        nu, nv = g.cps.shape[:2]
        # row-major: first parameter direction runs fastest
        net = g.cps.transpose(1, 0, 2).reshape(nu * nv, 2)
        pts.append({"degree": list(g.degree), "knots_u": g.knots_u.tolist(),
                    "knots_v": g.knots_v.tolist(), "cps": net.tolist()})
    return {
        "patches": pts,
        "interfaces": [{"a": i.a, "side_a": i.side_a, "b": i.b, "side_b": i.side_b,
                        "orient": i.orient} for i in mp.interfaces],
        "boundary": [{"patch": k, "side": s} for k, s in mp.boundary],
    }


def multipatch_from_dict(d: dict) -> MultiPatch:
    try:
        patches = []
        for p in d["patches"]:
            deg = tuple(int(v) for v in p["degree"])
            U, V = np.asarray(p["knots_u"], float), np.asarray(p["knots_v"], float)
            nu, nv = len(U) - deg[0] - 1, len(V) - deg[1] - 1
            net = np.asarray(p["cps"], float).reshape(nv, nu, 2).transpose(1, 0, 2)
            patches.append(GeometryMap(deg, U, V, net))
        if "interfaces" not in d and "boundary" not in d:
            return from_patches(patches)
        itfs = [Interface(int(i["a"]), int(i["side_a"]), int(i["b"]), int(i["side_b"]),
                          int(i.get("orient", 1))) for i in d.get("interfaces", [])]
        bnd = [(int(b["patch"]), int(b["side"])) for b in d.get("boundary", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed multi-patch description: {exc}") from exc
    return MultiPatch(patches, itfs, bnd)


def load_multipatch(path) -> MultiPatch:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc}") from exc
    return multipatch_from_dict(d)


def save_multipatch(mp: MultiPatch, path) -> None:
    Path(path).write_text(json.dumps(multipatch_to_dict(mp), indent=1))
