import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biharmonic_ieti.extension_lab import (BucketPlan, TraceSpace, bound_rhs, decompose, extend, log_ratio_slope,
                                           psi_alpha_ell, sample_traces, verify_bound, write_report)
from biharmonic_ieti.exceptions import InvalidKnotVector
from biharmonic_ieti.splines import KnotVector

pr = st.tuples(st.integers(2, 4), st.integers(3, 5))


def setup(p, r):
    kv = KnotVector.uniform(p, r)
    return TraceSpace(kv), BucketPlan(kv)


@settings(max_examples=12, deadline=None)
@given(pr=pr)
def test_trace_space_eigenpairs(pr):
    ts, _ = setup(*pr)
    V = ts.vecs
    assert ts.dim == ts.kv.n - 4
    assert np.allclose(V.T @ ts.M @ V, np.eye(ts.dim), atol=1e-9)
    assert np.allclose(V.T @ ts.D @ V, np.diag(ts.eig), atol=1e-9 * ts.eig.max())
    assert ts.eig[0] > 0 and np.all(np.diff(ts.eig) >= 0)
    assert np.allclose(ts.lam ** 4, ts.eig)


def test_lowest_frequency_is_clamped_beam_mode():
    # first clamped-clamped beam frequency on the unit interval
    ts, _ = setup(4, 5)
    assert ts.lam[0] == pytest.approx(4.730040745, rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(p=st.integers(2, 6), r=st.integers(2, 8))
def test_bucket_plan_inequalities(p, r):
    _, plan = setup(p, r)
    L = plan.L
    assert L == r - 1 and L >= 1
    l = plan.levels
    assert np.all(2.0 ** (-l - 1) < plan.xi) and np.all(plan.xi <= 2.0 ** -l)
    assert np.all(2.0 ** -l < plan.eta) and np.all(plan.eta <= 2.0 ** (1 - l))
    assert np.all(plan.eta - plan.xi >= 2.0 ** (-l - 1))
    assert np.allclose(plan.mu, p * 2.0 ** l)


def test_bucket_plan_requires_resolution():
    with pytest.raises(InvalidKnotVector):
        BucketPlan(KnotVector.uniform(2, 1)).L


@settings(max_examples=12, deadline=None)
@given(pr=pr)
def test_buckets_partition_spectrum(pr):
    ts, plan = setup(*pr)
    buckets = plan.buckets(ts.lam)
    assert len(buckets) == plan.L
    idx = np.sort(np.concatenate(buckets))
    assert np.array_equal(idx, np.arange(ts.dim))
    th = plan.thresholds()
    for l, b in enumerate(buckets):
        if l > 0:
            assert np.all(ts.lam[b] >= th[l - 1])
        if l < plan.L - 1:
            assert np.all(ts.lam[b] < th[l])


@settings(max_examples=30, deadline=None)
@given(pr=pr, alpha=st.integers(0, 1), data=st.data())
def test_psi_profiles(pr, alpha, data):
    _, plan = setup(*pr)
    ell = data.draw(st.integers(1, plan.L))
    v0 = psi_alpha_ell(alpha, ell, plan, 0.0)
    d0 = psi_alpha_ell(alpha, ell, plan, 0.0, 1)
    if alpha == 0:
        assert v0 == pytest.approx(1.0, abs=1e-13) and d0 == pytest.approx(0.0, abs=1e-10)
    else:
        assert v0 == pytest.approx(0.0, abs=1e-13) and d0 == pytest.approx(-1.0, abs=1e-12)
    x = np.linspace(plan.eta[ell - 1], 1.0, 17)
    for k in range(3):
        assert np.all(psi_alpha_ell(alpha, ell, plan, x, k) == 0.0)


@pytest.mark.parametrize("alpha", [0, 1])
def test_psi_derivatives_against_finite_differences(alpha):
    _, plan = setup(3, 4)
    x = np.linspace(0.01, 0.49, 13)
    eps = 1e-6
    for k in range(2):
        fd = (psi_alpha_ell(alpha, 2, plan, x + eps, k) - psi_alpha_ell(alpha, 2, plan, x - eps, k)) / (2 * eps)
        assert np.allclose(psi_alpha_ell(alpha, 2, plan, x, k + 1), fd, atol=1e-5)


def test_psi_rejects_bad_arguments():
    _, plan = setup(2, 3)
    with pytest.raises(ValueError):
        psi_alpha_ell(0, 0, plan, 0.1)
    with pytest.raises(ValueError):
        psi_alpha_ell(2, 1, plan, 0.1)


@pytest.mark.parametrize("p,r", [(2, 3), (3, 4), (4, 5)])
def test_psi_lies_in_spline_space(p, r):
    ts, plan = setup(p, r)
    kv = plan.kv
    x = np.linspace(0, 1, 100)
    C = kv.collocation(x).toarray()
    for alpha in (0, 1):
        for ell in plan.levels:
            f = psi_alpha_ell(alpha, ell, plan, x)
            c = np.linalg.lstsq(C, f, rcond=None)[0]
            assert np.abs(C @ c - f).max() < 1e-10


@settings(max_examples=12, deadline=None)
@given(pr=pr, seed=st.integers(0, 10_000))
def test_decomposition_reconstructs_and_is_orthogonal(pr, seed):
    ts, plan = setup(*pr)
    w = np.random.default_rng(seed).standard_normal(ts.dim)
    parts = decompose(ts, plan, w)
    assert np.linalg.norm(w - sum(parts)) <= 1e-12 * max(1.0, np.linalg.norm(w)) * ts.dim
    scale = w @ ts.M @ w
    for a in range(len(parts)):
        for b in range(a):
            assert abs(parts[a] @ ts.M @ parts[b]) <= 1e-10 * scale


def test_single_eigenvector_has_one_component():
    ts, plan = setup(3, 4)
    parts = decompose(ts, plan, ts.vecs[:, 0])
    nonzero = [np.linalg.norm(c) > 1e-10 for c in parts]
    assert nonzero == [True] + [False] * (plan.L - 1)


@pytest.mark.parametrize("p,r", [(p, r) for p in (2, 3, 4) for r in (3, 4, 5)])
def test_extension_trace_identities(p, r):
    ts, plan = setup(p, r)
    w = np.random.default_rng(p * 10 + r).standard_normal(ts.dim)
    y = np.linspace(0, 1, 50)
    wy = ts.evaluate(w, y)
    e0, e1 = extend(ts, plan, w, 0), extend(ts, plan, w, 1)
    tol = 1e-10 * max(1.0, np.abs(wy).max())
    assert np.abs(e0(0.0, y)[0] - wy).max() <= tol
    assert np.abs(e0(0.0, y, dx=1)[0]).max() <= tol
    assert np.abs(e1(0.0, y)[0]).max() <= tol
    # outward normal derivative at x = 0 is -d/dx
    assert np.abs(-e1(0.0, y, dx=1)[0] - wy).max() <= tol
    # value and gradient vanish on the other three sides
    t = np.linspace(0, 1, 50)
    for e in (e0, e1):
        for dx, dy in ((0, 0), (1, 0), (0, 1)):
            assert np.abs(e(1.0, t, dx, dy)).max() <= tol
            assert np.abs(e(t, np.array([0.0, 1.0]), dx, dy)).max() <= tol


def test_zero_trace_gives_zero_extension():
    ts, plan = setup(2, 3)
    e = extend(ts, plan, np.zeros(ts.dim), 1)
    assert e.h2_seminorm2() == 0.0


@pytest.mark.parametrize("alpha", [0, 1])
def test_h2_seminorm_quadrature_is_stable(alpha):
    ts, plan = setup(3, 4)
    w = np.random.default_rng(0).standard_normal(ts.dim)
    e = extend(ts, plan, w, alpha)
    a, b = e.h2_seminorm2(), e.h2_seminorm2(order=8)
    assert np.isfinite(a) and a > 0
    assert a == pytest.approx(b, rel=1e-2)


def test_h2_seminorm_against_dense_grid():
    ts, plan = setup(2, 3)
    w = np.random.default_rng(4).standard_normal(ts.dim)
    e = extend(ts, plan, w, 0)
    # tensor Gauss on a much finer partition as an independent oracle
    from biharmonic_ieti.splines import gauss_per_span
    nodes, wts = gauss_per_span(np.linspace(0, 1, 257), 6)
    x, wx = nodes.ravel(), wts.ravel()
    total = sum(wx @ e(x, x, dx, 2 - dx) ** 2 @ wx for dx in range(3))
    assert e.h2_seminorm2() == pytest.approx(total, rel=1e-9)


def test_alpha_one_ratio_within_p_squared_of_alpha_zero():
    for p in (2, 3, 4):
        ts, plan = setup(p, 4)
        w = np.random.default_rng(p).standard_normal(ts.dim)
        r0 = extend(ts, plan, w, 0).h2_seminorm2() / bound_rhs(ts, plan, w, 0)
        r1 = extend(ts, plan, w, 1).h2_seminorm2() / bound_rhs(ts, plan, w, 1)
        assert r1 <= r0 * p ** 2


def test_sample_traces_deterministic():
    ts, _ = setup(3, 4)
    a = sample_traces(ts, 6, np.random.default_rng(3))
    b = sample_traces(ts, 6, np.random.default_rng(3))
    assert a.shape == (6, ts.dim) and np.array_equal(a, b)


def test_verify_bound_report_and_csv():
    rows = verify_bound(1, p_list=(2, 3), r_list=(3, 4), samples=4, seed=1)
    assert [(row["p"], row["r"]) for row in rows] == [(2, 3), (2, 4), (3, 3), (3, 4)]
    assert all(0 < row["max_ratio"] < 100 for row in rows)
    assert np.isfinite(log_ratio_slope(rows))
    buf = io.StringIO()
    write_report(rows, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "p,r,alpha,max_ratio" and len(lines) == 5
