import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biharmonic_ieti.exceptions import InvalidKnotVector
from biharmonic_ieti.splines import (KnotVector, TensorBasis2D, basis_derivatives, gauss_per_span,
                                     h1_mass_and_stiffness_1d, open_knots)

degrees = st.integers(2, 6)
levels = st.integers(2, 5)
unit = st.floats(0.0, 1.0, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(p=degrees, r=levels, x=unit)
def test_partition_of_unity_and_derivative_sums(p, r, x):
    kv = KnotVector.uniform(p, r)
    _, vals = kv.eval_all(x, min(p, 2))
    assert vals[:, 0].sum() == pytest.approx(1.0, abs=1e-13)
    assert np.allclose(vals[:, 1:].sum(axis=0), 0.0, atol=1e-9 * 2 ** (2 * r))
    assert np.all(vals[:, 0] >= -1e-15)


@settings(max_examples=30, deadline=None)
@given(p=st.integers(2, 6), r=st.integers(1, 4), x=st.floats(0.01, 0.99))
def test_derivatives_match_finite_differences(p, r, x):
    kv = KnotVector.uniform(p, r)
    eps = 1e-6
    C = kv.collocation(np.array([x - eps, x, x + eps]), 0).toarray()
    C1 = kv.collocation(np.array([x]), 1).toarray()[0]
    fd = (C[2] - C[0]) / (2 * eps)
    assert np.allclose(C1, fd, atol=1e-5 * 2 ** r * p)


def test_nonuniform_knots_and_spans():
    U = open_knots(3, [0.2, 0.2, 0.7])
    kv = KnotVector(3, U)
    assert kv.n == len(U) - 4
    assert kv.h_max == pytest.approx(0.5) and kv.h_min == pytest.approx(0.2)
    s, d = basis_derivatives(U, 3, np.array([0.0, 0.2, 1.0]), 0)
    assert d.shape == (3, 1, 4)
    assert np.allclose(d[:, 0].sum(axis=1), 1.0)


@pytest.mark.parametrize("degree,knots", [
    (0, [0, 1]),
    (2, [0, 0, 0.5, 1, 1, 1]),
    (2, [0, 0, 0, 0.5, 0.5, 1, 1, 1]),
    (2, [0, 0, 0, 0.7, 0.5, 1, 1, 1]),
    (2, [0, 0, 0, 1, 1, 1]),
])
def test_invalid_knot_vectors(degree, knots):
    with pytest.raises(InvalidKnotVector):
        KnotVector(degree, knots)


def test_resolution_check():
    KnotVector.uniform(2, 2).check_resolution()
    with pytest.raises(InvalidKnotVector):
        KnotVector.uniform(2, 1).check_resolution()
    # simple interior knots give only C^0 for p = 1
    with pytest.raises(InvalidKnotVector):
        KnotVector.uniform(1, 2)


@settings(max_examples=20, deadline=None)
@given(p=st.integers(1, 6), r=st.integers(0, 4), k=st.integers(0, 13))
def test_gauss_rule_exact_for_polynomials(p, r, k):
    order = p + 1
    if k > 2 * order - 1:
        return
    nodes, w = gauss_per_span(np.linspace(0, 1, 2 ** r + 1), order)
    assert np.sum(w * nodes ** k) == pytest.approx(1.0 / (k + 1), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(p=st.integers(2, 6), r=st.integers(2, 5))
def test_adapted_basis_boundary_data(p, r):
    kv = KnotVector.uniform(p, r)
    T = kv.transform.toarray()
    ends = np.array([0.0, 1.0])
    V = kv.collocation(ends, 0).toarray() @ T
    D = kv.collocation(ends, 1).toarray() @ T
    n = kv.n
    # value functions at the two ends
    e0 = np.zeros(n); e0[0] = 1.0
    e1 = np.zeros(n); e1[-1] = 1.0
    assert np.allclose(V[0], e0, atol=1e-13) and np.allclose(V[1], e1, atol=1e-13)
    # derivative in the inward direction is carried only by layer-1 functions
    d0 = np.zeros(n); d0[1] = 1.0
    d1 = np.zeros(n); d1[-2] = -1.0
    assert np.allclose(D[0], d0, atol=1e-10) and np.allclose(D[1], d1, atol=1e-10)


def test_adapted_basis_spans_same_space():
    kv = KnotVector.uniform(3, 3)
    T = kv.transform.toarray()
    assert np.linalg.matrix_rank(T) == kv.n


def test_tensor_basis_indexing_and_transform():
    b = TensorBasis2D(KnotVector.uniform(2, 2), KnotVector.uniform(3, 2))
    assert b.shape == (6, 7) and b.n == 42 and b.degree == (2, 3)
    assert b.index(5, 6) == 41
    assert b.transform.shape == (42, 42)
    assert np.allclose(b.transform.toarray(), np.kron(b.by.transform.toarray(), b.bx.transform.toarray()))


@settings(max_examples=10, deadline=None)
@given(p=st.integers(2, 5), r=st.integers(2, 4))
def test_gram_matrices(p, r):
    kv = KnotVector.uniform(p, r)
    M, D = h1_mass_and_stiffness_1d(kv)
    assert np.allclose(M, M.T) and np.allclose(D, D.T)
    assert np.linalg.eigvalsh(M).min() > 0
    # affine functions are the kernel of the second derivative form
    x = np.linspace(0, 1, 3 * kv.n)
    C = kv.collocation(x).toarray() @ kv.transform.toarray()
    for f, l2 in ((np.ones_like(x), 1.0), (x, 1.0 / 3.0)):
        c = np.linalg.lstsq(C, f, rcond=None)[0]
        assert c @ D @ c == pytest.approx(0.0, abs=1e-9)
        assert c @ M @ c == pytest.approx(l2, rel=1e-12)
