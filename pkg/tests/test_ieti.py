import numpy as np
import pytest
import scipy.sparse as sp

from biharmonic_ieti.assembly import assemble_all, classify_dofs, make_bases
from biharmonic_ieti.domains import builtin_domain, source_function
from biharmonic_ieti.exceptions import NotConverged
from biharmonic_ieti.ieti import (IetiSystem, SolverConfig, jump_matrices, monolithic_solve, relative_difference,
                                  solve, solve_dual)


def build(name, p, r, splits=None, precond="scaled", **kw):
    mp = builtin_domain(name, splits)
    bases = make_bases(mp, p, r)
    systems = assemble_all(mp, bases, source_function(name))
    return mp, bases, systems, IetiSystem(mp, bases, systems, config=SolverConfig(precond=precond, **kw))


@pytest.fixture(scope="module")
def annulus_small():
    return build("quarter_annulus", 2, 2, splits=2)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(precond="jacobi")
    with pytest.raises(ValueError):
        SolverConfig(residual="energy")


def test_jump_matrix_rows_have_two_entries(annulus_small):
    _, _, _, system = annulus_small
    B = sp.hstack(system.B).tocsr()
    assert np.all(np.diff(B.indptr) == 2)
    S = sp.hstack([sp.csr_matrix(np.sign(Bk.toarray()).astype(int)) for Bk in system.B]).tocsr()
    assert ((S @ S.T) != 2 * sp.identity(S.shape[0], dtype=int)).nnz == 0


@pytest.mark.parametrize("which", ["F", "M", "M_mod"])
def test_operators_symmetric_positive_definite(annulus_small, which):
    mp, bases, systems, _ = annulus_small
    precond = "modified" if which == "M_mod" else "scaled"
    system = IetiSystem(mp, bases, systems, config=SolverConfig(precond=precond))
    D = system.dense(which)
    assert np.allclose(D, D.T, atol=1e-10 * np.abs(D).max())
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.standard_normal(system.n_lam)
        assert v @ D @ v > 0


@pytest.mark.parametrize("name", ["two_squares", "unit_square", "quarter_annulus", "lamella"])
def test_matches_monolithic_solve(name):
    mp, bases, systems, system = build(name, 2, 2, tol=1e-12)
    res = solve_dual(system)
    u = system.recover(res.x)
    ref = monolithic_solve(mp, bases, systems)
    assert relative_difference(u, ref) < 1e-9


def test_recovered_solution_is_continuous(annulus_small):
    mp, bases, systems, _ = annulus_small
    system = IetiSystem(mp, bases, systems, config=SolverConfig(tol=1e-12))
    res = solve_dual(system)
    u = system.recover(res.x)
    jump = sum(Bk @ uk[pd.free] for Bk, uk, pd in zip(system.B, u, system.dofs.patches))
    assert np.abs(jump).max() < 1e-9 * np.abs(np.concatenate(u)).max()


def test_lanczos_kappa_matches_dense(annulus_small):
    _, _, _, system = annulus_small
    res = solve_dual(system)
    ev = np.sort(np.linalg.eigvals(system.dense("M") @ system.dense("F")).real)
    assert res.kappa_estimate == pytest.approx(ev[-1] / ev[0], rel=0.05)


def test_preconditioners_reduce_iterations():
    its = {}
    for precond in ("none", "scaled", "modified"):
        *_, system = build("quarter_annulus", 2, 3, splits=2, precond=precond)
        its[precond] = solve_dual(system).iterations
    assert its["scaled"] < its["none"] and its["modified"] < its["none"]


def test_scaling_does_not_change_iterations():
    mp, bases, systems, s1 = build("quarter_annulus", 2, 2, splits=2)
    s2 = IetiSystem(mp, bases, systems, config=SolverConfig(scaling=1.0))
    r1, r2 = solve_dual(s1), solve_dual(s2)
    assert r1.iterations == r2.iterations
    assert r1.kappa_estimate == pytest.approx(r2.kappa_estimate, rel=1e-8)


def test_not_converged_is_raised_with_partial_result():
    *_, system = build("quarter_annulus", 2, 3, splits=2, max_iter=2)
    with pytest.raises(NotConverged) as info:
        solve_dual(system)
    assert info.value.result.iterations == 2


def test_weighted_interfaces():
    # interfaces with alpha != 1
    from biharmonic_ieti.domains import two_squares
    mp = two_squares(2.0)
    bases = make_bases(mp, 3, 2)
    systems = assemble_all(mp, bases, lambda x, y: np.ones_like(x))
    dofs = classify_dofs(mp, bases)
    assert dofs.alphas == [pytest.approx(2.0)]
    system = IetiSystem(mp, bases, systems, dofs=dofs, config=SolverConfig(tol=1e-12))
    u = system.recover(solve_dual(system).x)
    assert relative_difference(u, monolithic_solve(mp, bases, systems, dofs)) < 1e-9
    B = jump_matrices(dofs)
    assert sorted(np.unique(np.abs(np.concatenate([b.data for b in B])))) == [1.0, 2.0]


def test_solve_entry_point_reports_counts():
    mp = builtin_domain("quarter_annulus", 2)
    res = solve(mp, 2, 2, source_function("quarter_annulus"))
    assert res.converged and res.kappa >= 1.0
    assert res.n_multipliers > 0 and res.n_primal == 4
    assert len(res.coefficients) == 4
    assert res.residual_history[-1] <= 1e-6 * res.residual_history[0]


def test_deterministic_results():
    a = solve(builtin_domain("lamella"), 2, 2, source_function("lamella"))
    b = solve(builtin_domain("lamella"), 2, 2, source_function("lamella"))
    assert a.iterations == b.iterations and a.kappa == b.kappa
    assert all(np.array_equal(x, y) for x, y in zip(a.coefficients, b.coefficients))


@pytest.mark.parametrize("p,r", [(2, 3), (3, 4)])
def test_modified_preconditioner_exact_on_symmetric_two_patch(p, r):
    # both Schur complements coincide, so M_mod F = 4 I
    from biharmonic_ieti.domains import two_squares
    mp = two_squares()
    bases = make_bases(mp, p, r)
    systems = assemble_all(mp, bases, lambda x, y: np.ones_like(x))
    system = IetiSystem(mp, bases, systems, config=SolverConfig(precond="modified"))
    MF = system.dense("M_mod") @ system.dense("F")
    assert np.allclose(MF, 4.0 * np.eye(system.n_lam), atol=1e-9)
    assert solve_dual(system).iterations == 1
