import numpy as np
import pytest
import sympy

from biharmonic_ieti.domains import (builtin_domain, lamella_patches, manufactured_rhs, manufactured_solution,
                                     quarter_annulus_patch, source_function)
from biharmonic_ieti.exceptions import UnknownDomain
from biharmonic_ieti.geometry import check_c1_matching, eval_map, jacobian_determinant_range


@pytest.mark.parametrize("name,splits,n_patches,n_itf,n_interior", [
    ("unit_square", 2, 4, 4, 1),
    ("two_squares", 1, 2, 1, 0),
    ("quarter_annulus", 4, 16, 24, 9),
    ("quarter_annulus", 8, 64, 112, 49),
    ("lamella", 2, 32, 48, 16),
])
def test_builtin_topologies(name, splits, n_patches, n_itf, n_interior):
    mp = builtin_domain(name, splits)
    assert mp.n_patches == n_patches
    assert len(mp.interfaces) == n_itf
    assert len(mp.interior_vertices()) == n_interior
    # the lamella is a ring, the others are simply connected
    assert mp.euler_characteristic() == (0 if name == "lamella" else 1)


@pytest.mark.parametrize("name", ["unit_square", "quarter_annulus", "lamella", "two_squares"])
def test_domains_are_regular_and_c1_matching(name):
    mp = builtin_domain(name)
    for g in mp.patches:
        lo, _ = jacobian_determinant_range(g)
        assert lo > 0
    alphas = check_c1_matching(mp)
    assert np.allclose(alphas, 1.0)


def test_unknown_domain_and_bad_splits():
    with pytest.raises(UnknownDomain):
        builtin_domain("disc")
    with pytest.raises(ValueError):
        builtin_domain("unit_square", 0)


def test_annulus_corners_and_symmetry():
    g = quarter_annulus_patch()
    corners = eval_map(g, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))[0]
    assert np.allclose(corners, [[1, 0], [2, 0], [0, 1], [0, 2]])
    # symmetric about the diagonal
    t = np.linspace(0, 1, 7)
    a = eval_map(g, np.stack([np.full(7, 0.4), t], 1))[0]
    b = eval_map(g, np.stack([np.full(7, 0.4), 1 - t], 1))[0]
    assert np.allclose(a, b[:, ::-1])


def test_lamella_is_mirror_symmetric():
    pts = np.concatenate([g.cps.reshape(-1, 2) for g in lamella_patches()])
    mirrored = pts * np.array([1.0, -1.0])
    d = np.linalg.norm(pts[:, None] - mirrored[None], axis=-1).min(axis=1)
    assert d.max() < 1e-12


def test_manufactured_solution_against_symbolic_oracle():
    x, y = sympy.symbols("x y")
    u = sympy.sin(sympy.pi * x) ** 2 * sympy.sin(sympy.pi * y) ** 2
    bilap = sympy.diff(u, x, 4) + 2 * sympy.diff(u, x, 2, y, 2) + sympy.diff(u, y, 4)
    f = sympy.lambdify((x, y), bilap, "numpy")
    H = [[sympy.lambdify((x, y), sympy.diff(u, a, b), "numpy") for b in (x, y)] for a in (x, y)]
    rng = np.random.default_rng(0)
    X, Y = rng.uniform(0, 1, 20), rng.uniform(0, 1, 20)
    assert np.allclose(manufactured_rhs(X, Y), f(X, Y))
    val, grad, hess = manufactured_solution(X, Y)
    assert np.allclose(val, sympy.lambdify((x, y), u, "numpy")(X, Y))
    assert np.allclose(grad[:, 0], sympy.lambdify((x, y), sympy.diff(u, x), "numpy")(X, Y))
    for a in range(2):
        for b in range(2):
            assert np.allclose(hess[:, a, b], H[a][b](X, Y))


def test_source_functions():
    x = np.array([1.0, 0.5])
    y = np.array([1.0, 0.5])
    assert np.allclose(source_function("lamella")(x, y), 1.0)
    assert source_function("quarter_annulus")(x, y)[0] == pytest.approx(np.pi ** 4 / 8)
    assert source_function("unit_square") is manufactured_rhs
