"""Explicit spline extensions from one side of the unit square.

A trace ``w`` on ``{0} x [0, 1]`` (a spline vanishing to first order at both
ends) is split by frequency into buckets ``w_1 .. w_L``.  Every bucket is
extended with its own cut-off profile ``psi_{alpha, l}`` whose support shrinks
with the bucket frequency,

    (E_alpha w)(x, y) = sum_l psi_{alpha, l}(x) w_l(y).

``E_0`` reproduces the trace with zero normal derivative, ``E_1`` has zero
trace and outward normal derivative ``w``.  This module evaluates the
construction and measures its H^2 seminorm against a computable bound.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .linalg import sym_generalized_eig
from .splines import KnotVector, h1_mass_and_stiffness_1d


@dataclass(frozen=True, eq=False)
class TraceSpace:
    """Splines on the side with vanishing values and slopes at both ends.

    Uses adapted basis functions ``2 .. N-3`` (0-based).  ``eig`` are the
    pencil eigenvalues ``phi_i^T D phi_i``; the frequencies ``lam`` are their
    fourth roots so that ``|phi_i|_{H^2}^2 = lam_i^4``.
    """

    kv: KnotVector

    @cached_property
    def indices(self) -> np.ndarray:
        return np.arange(2, self.kv.n - 2)

    @property
    def dim(self) -> int:
        return self.indices.size

    @cached_property
    def grams(self):
        return h1_mass_and_stiffness_1d(self.kv, self.indices, deriv=2)

    @property
    def M(self) -> np.ndarray:
        return self.grams[0]

    @property
    def D(self) -> np.ndarray:
        return self.grams[1]

    @cached_property
    def _eig(self):
        return sym_generalized_eig(self.D, self.M)

    @property
    def eig(self) -> np.ndarray:
        return self._eig[0]

    @property
    def vecs(self) -> np.ndarray:
        return self._eig[1]

    @property
    def lam(self) -> np.ndarray:
        return np.maximum(self.eig, 0.0) ** 0.25

    def evaluate(self, coeffs, y, deriv: int = 0) -> np.ndarray:
        """Values of trace functions; ``coeffs`` may hold several columns."""
        C = self.kv.collocation(y, deriv) @ self.kv.transform[:, self.indices]
        return C @ np.asarray(coeffs, float)


@dataclass(frozen=True, eq=False)
class BucketPlan:
    """Cut-off scales for the extension in the direction normal to the side."""

    kv: KnotVector  # knot vector perpendicular to the side

    @property
    def p(self) -> int:
        return self.kv.degree

    @property
    def h(self) -> float:
        return self.kv.h_max

    @cached_property
    def L(self) -> int:
        self.kv.check_resolution()
        return int(np.floor(np.log2(1.0 / self.h) + 1e-12)) - 1

    @cached_property
    def levels(self) -> np.ndarray:
        return np.arange(1, self.L + 1)

    @cached_property
    def mu(self) -> np.ndarray:
        return self.p * 2.0 ** self.levels

    def _largest_knot_below(self, t):
        U = self.kv.breaks
        return np.array([U[U <= v + 1e-14].max() for v in np.atleast_1d(t)])

    @cached_property
    def xi(self) -> np.ndarray:
        return self._largest_knot_below(2.0 ** -self.levels)

    @cached_property
    def eta(self) -> np.ndarray:
        return self._largest_knot_below(2.0 ** (1 - self.levels))

    def thresholds(self) -> np.ndarray:
        """Bucket boundaries ``sqrt(mu_l mu_{l+1})``, ``l = 1 .. L-1``."""
        return np.sqrt(self.mu[:-1] * self.mu[1:])

    def buckets(self, lam) -> list:
        """Index sets ``Lambda_1 .. Lambda_L`` partitioning ``range(len(lam))``."""
        lam = np.asarray(lam)
        which = np.searchsorted(self.thresholds(), lam, side="right")
        return [np.flatnonzero(which == l) for l in range(self.L)]


def _trunc_power(x, t, p, deriv):
    """``d^deriv/dx^deriv max(0, 1 - x/t)^p``."""
    x = np.asarray(x, float)
    s = np.maximum(0.0, 1.0 - x / t)
    c = 1.0
    for k in range(deriv):
        c *= -(p - k) / t
    # mask explicitly: 0 ** 0 would leak a constant beyond the support
    return np.where(x < t, c * s ** (p - deriv), 0.0)


def psi_alpha_ell(alpha: int, ell: int, plan: BucketPlan, x, deriv: int = 0):
    """Cut-off profile ``psi_{alpha, ell}`` or one of its derivatives.

    ``psi_{0,l}(0) = 1``, ``psi_{0,l}'(0) = 0``; ``psi_{1,l}(0) = 0`` and
    ``psi_{1,l}'(0) = -1``.  Both vanish for ``x >= eta_l``.
    """
    if not 1 <= ell <= plan.L:
        raise ValueError(f"level {ell} outside 1..{plan.L}")
    if alpha not in (0, 1):
        raise ValueError("alpha must be 0 or 1")
    xi, eta, p = plan.xi[ell - 1], plan.eta[ell - 1], plan.p
    a = _trunc_power(x, xi, p, deriv)
    b = _trunc_power(x, eta, p, deriv)
    if alpha == 0:
        return (-xi * a + eta * b) / (eta - xi)
    c = xi * eta / (p * (eta - xi))
    return c * (a - b)


def decompose(ts: TraceSpace, plan: BucketPlan, w) -> list:
    """Bucket components ``w_l`` (coefficient vectors) of a trace ``w``."""
    w = np.asarray(w, float)
    c = ts.vecs.T @ (ts.M @ w)
    return [ts.vecs[:, idx] @ c[idx] for idx in plan.buckets(ts.lam)]


@dataclass
class Extension:
    """Evaluable ``E_alpha w`` in separated form."""

    alpha: int
    plan: BucketPlan
    ts: TraceSpace
    components: np.ndarray  # (dim, L)

    def profiles(self, x, deriv: int = 0) -> np.ndarray:
        return np.stack([psi_alpha_ell(self.alpha, l, self.plan, x, deriv)
                         for l in self.plan.levels], axis=-1)

    def __call__(self, x, y, dx: int = 0, dy: int = 0) -> np.ndarray:
        """Derivative ``d^dx/dx d^dy/dy`` on the grid ``x`` (rows) times ``y``."""
        P = self.profiles(np.atleast_1d(x), dx)
        W = self.ts.evaluate(self.components, np.atleast_1d(y), dy)
        return P @ W.T

    def h2_seminorm2(self, order: int | None = None) -> float:
        """``|E w|_{H^2}^2`` summed over the multi-indices (2,0), (1,1), (0,2)."""
        q = order or self.plan.p + 2
        # breaks of the profiles are knots of the perpendicular knot vector
        xq, wx = self.plan.kv.quadrature(q)
        yq, wy = self.ts.kv.quadrature(q)
        xq, wx, yq, wy = xq.ravel(), wx.ravel(), yq.ravel(), wy.ravel()
        total = 0.0
        for dx in range(3):
            # separable: integrate the x and y factors independently
            P = self.profiles(xq, dx)
            W = self.ts.evaluate(self.components, yq, 2 - dx)
            Gx = P.T @ (wx[:, None] * P)
            Gy = W.T @ (wy[:, None] * W)
            total += float(np.sum(Gx * Gy))
        return total


def extend(ts: TraceSpace, plan: BucketPlan, w, alpha: int) -> Extension:
    comps = np.column_stack(decompose(ts, plan, w))
    return Extension(alpha, plan, ts, comps)


def bound_rhs(ts: TraceSpace, plan: BucketPlan, w, alpha: int) -> float:
    """Computable right-hand side of the extension estimate."""
    w = np.asarray(w, float)
    p, h = plan.p, plan.h
    c = ts.vecs.T @ (ts.M @ w)
    e = 3 - 2 * alpha
    low = np.sum(np.minimum(ts.lam, p / h) ** e * c ** 2)
    return float(low + p ** e * (w @ ts.M @ w) + (p / h) ** (-1 - 2 * alpha) * (w @ ts.D @ w))


def sample_traces(ts: TraceSpace, n: int, rng) -> np.ndarray:
    """Random traces: raw coefficient vectors and spectrally damped ones."""
    out = []
    for k in range(n):
        if k % 2 == 0:
            w = rng.standard_normal(ts.dim)
        else:
            s = rng.uniform(0.0, 3.0)
            c = rng.standard_normal(ts.dim) * np.maximum(ts.lam, 1.0) ** -s
            w = ts.vecs @ c
        out.append(w)
    return np.array(out)


def verify_bound(alpha: int, p_list=(2, 3, 4), r_list=(3, 4, 5, 6), samples: int = 30, seed: int = 0):
    """Largest ratio ``|E_alpha w|^2_{H^2} / RHS`` per ``(p, r)``.

    Returns a list of dicts with keys ``p, r, alpha, max_ratio``.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for p in p_list:
        for r in r_list:
            kv = KnotVector.uniform(p, r)
            ts, plan = TraceSpace(kv), BucketPlan(kv)
            ratios = []
            for w in sample_traces(ts, samples, rng):
                ratios.append(extend(ts, plan, w, alpha).h2_seminorm2() / bound_rhs(ts, plan, w, alpha))
            rows.append({"p": p, "r": r, "alpha": alpha, "max_ratio": float(max(ratios))})
    return rows


def log_ratio_slope(rows) -> float:
    """Least-squares slope of ``log(max ratio)`` against ``r`` (worst over ``p``)."""
    worst = -np.inf
    for p in sorted({row["p"] for row in rows}):
        sub = sorted((row["r"], row["max_ratio"]) for row in rows if row["p"] == p)
        r = np.array([s[0] for s in sub], float)
        y = np.log(np.array([s[1] for s in sub]))
        if r.size >= 2:
            worst = max(worst, float(np.polyfit(r, y, 1)[0]))
    return worst


def write_report(rows, path_or_file) -> None:
    fields = ["p", "r", "alpha", "max_ratio"]
    if hasattr(path_or_file, "write"):
        w = csv.DictWriter(path_or_file, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
        return
    with open(path_or_file, "w", newline="") as fh:
        write_report(rows, fh)
