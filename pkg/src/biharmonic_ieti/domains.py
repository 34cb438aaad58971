"""Built-in computational domains."""
from __future__ import annotations

import numpy as np

from .exceptions import UnknownDomain
from .geometry import GeometryMap, MultiPatch, from_patches, split_patch

QUAD_KNOTS = np.array([0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0])
# Greville abscissae of QUAD_KNOTS, used for linear interpolation between curves
QUAD_GREVILLE = np.array([0.0, 0.25, 0.75, 1.0])

DEFAULT_SPLITS = {"unit_square": 2, "quarter_annulus": 4, "lamella": 2, "two_squares": 1}


def unit_square_patch(x0=0.0, y0=0.0, wx=1.0, wy=1.0) -> GeometryMap:
    """Bilinear parameterization of an axis-parallel rectangle."""
    X, Y = np.meshgrid([x0, x0 + wx], [y0, y0 + wy], indexing="ij")
    k = np.array([0.0, 0.0, 1.0, 1.0])
    return GeometryMap((1, 1), k, k, np.stack([X, Y], axis=-1))


def ruled_patch(inner: np.ndarray, outer: np.ndarray) -> GeometryMap:
    """Quadratic patch between two quadratic curves on ``QUAD_KNOTS``.

    The first parameter runs from ``inner`` to ``outer``, the second along the
    curves.
    """
    g = QUAD_GREVILLE[:, None, None]
    cps = (1.0 - g) * inner[None] + g * outer[None]
    return GeometryMap((2, 2), QUAD_KNOTS, QUAD_KNOTS, cps)


def quarter_annulus_patch(r_in: float = 1.0, r_out: float = 2.0) -> GeometryMap:
    """Polynomial quadratic quarter annulus.

    Each arc is the quadratic Bezier curve with control points
    ``(r, 0), (r, r), (0, r)`` written on the knot vector ``QUAD_KNOTS``.
    """
    arc = np.array([[1.0, 0.0], [1.0, 0.5], [0.5, 1.0], [0.0, 1.0]])
    return ruled_patch(r_in * arc, r_out * arc)


# half of the closed control polygons (upper half plane), c_1 .. c_8.  The
# lower half follows from c_{1-k} = mirror(c_k).  The hole is a half disc of
# radius 1 glued to a 2 x 2 rectangle with rounded corners, the outer curve
# is the same shape scaled up by a margin of one.
_LAMELLA_INNER = np.array([
    [1.0, 0.5], [0.5, 1.0], [-0.5, 1.0], [-1.0, 1.0],
    [-1.5, 1.0], [-2.0, 1.0], [-2.0, 0.5], [-2.0, 0.25]])
_LAMELLA_OUTER = np.array([
    [2.0, 1.0], [1.0, 2.0], [-1.0, 2.0], [-2.0, 2.0],
    [-2.5, 2.0], [-3.0, 2.0], [-3.0, 1.0], [-3.0, 0.5]])


def _closed_polygon(half: np.ndarray) -> np.ndarray:
    """16 control points c_0 .. c_15 of a closed curve symmetric in y."""
    c = np.empty((16, 2))
    c[1:9] = half
    for k in range(1, 9):
        c[(1 - k) % 16] = half[k - 1] * np.array([1.0, -1.0])
    return c


def _ring_segments(c: np.ndarray):
    """Eight quadratic segments of a uniform periodic quadratic spline."""
    m = 0.5 * (c + np.roll(c, -1, axis=0))
    segs = []
    for k in range(8):
        i = 2 * k
        segs.append(np.array([m[i], c[(i + 1) % 16], c[(i + 2) % 16], m[(i + 2) % 16]]))
    return segs


def lamella_patches():
    """Eight patches forming a ring around a D-shaped hole.

    Neighbouring patches are C^1 across their common sides because both
    bounding curves are periodic C^1 quadratic splines.
    """
    inner = _ring_segments(_closed_polygon(_LAMELLA_INNER))
    outer = _ring_segments(_closed_polygon(_LAMELLA_OUTER))
    return [ruled_patch(a, b) for a, b in zip(inner, outer)]


def two_squares(alpha: float = 1.0) -> MultiPatch:
    """Rectangles ``[0,1]^2`` and ``[1,1+alpha] x [0,1]``."""
    return from_patches([unit_square_patch(), unit_square_patch(1.0, 0.0, alpha, 1.0)])


def builtin_domain(name: str, splits: int | None = None) -> MultiPatch:
    """Construct a built-in multi-patch domain.

    Parameters
    ----------
    name : {"unit_square", "quarter_annulus", "lamella", "two_squares"}
    splits : int
        Every base patch is split ``splits x splits`` times.  Defaults to
        2, 4, 2 and 1 respectively.
    """
    if name not in DEFAULT_SPLITS:
        raise UnknownDomain(f"unknown domain {name!r}; choose from {sorted(DEFAULT_SPLITS)}")
    s = DEFAULT_SPLITS[name] if splits is None else int(splits)
    if s < 1:
        raise ValueError("splits must be positive")
    if name == "unit_square":
        base = [unit_square_patch()]
    elif name == "quarter_annulus":
        base = [quarter_annulus_patch()]
    elif name == "lamella":
        base = lamella_patches()
    else:
        base = two_squares().patches
    patches = [q for g in base for q in split_patch(g, s)] if s > 1 else base
    return from_patches(patches)


def source_function(name: str):
    """Right-hand side used with each built-in domain."""
    if name == "quarter_annulus":
        return lambda x, y: np.pi ** 4 / 8.0 * np.sin(np.pi * x / 2) * np.sin(np.pi * y / 2)
    if name == "lamella":
        return lambda x, y: np.ones_like(x)
    return manufactured_rhs


def manufactured_solution(x, y):
    """``u = sin(pi x)^2 sin(pi y)^2``: value, gradient and Hessian."""
    a, b = np.sin(np.pi * x) ** 2, np.sin(np.pi * y) ** 2
    da, db = np.pi * np.sin(2 * np.pi * x), np.pi * np.sin(2 * np.pi * y)
    dda, ddb = 2 * np.pi ** 2 * np.cos(2 * np.pi * x), 2 * np.pi ** 2 * np.cos(2 * np.pi * y)
    grad = np.stack([da * b, a * db], axis=-1)
    hess = np.stack([np.stack([dda * b, da * db], -1), np.stack([da * db, a * ddb], -1)], -2)
    return a * b, grad, hess


def manufactured_rhs(x, y):
    """Bilaplacian of :func:`manufactured_solution`."""
    cx, cy = np.cos(2 * np.pi * x), np.cos(2 * np.pi * y)
    return 4 * np.pi ** 4 * (4 * cx * cy - cx - cy)
