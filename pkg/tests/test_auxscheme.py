from types import SimpleNamespace

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from derham_aux.auxscheme import (
    EigenType,
    SolveError,
    SolverConfig,
    classify_eigenpair,
    error_bound,
    residual_propagation_check,
    solve_eigen,
    solve_source,
    spectral_radius_bound,
)
from derham_aux.fem import build_auxiliary_matrix, build_operators
from derham_aux.mesh import build_mesh

COMBOS = [(d, k) for d in ("cube", "hole") for k in (1, 2)]


def ops_for(domain, level, k, c=1.0):
    return build_operators(build_mesh(domain, level), k, c=c)


def load(n, seed=0):
    return np.random.default_rng(seed).standard_normal(n)


def toy(A, BtUB, M=None):
    A = sp.csr_matrix(np.asarray(A, dtype=float))
    n = A.shape[0]
    M = sp.identity(n, format="csr") if M is None else sp.csr_matrix(M)
    BtUB = sp.csr_matrix(np.asarray(BtUB, dtype=float))
    return SimpleNamespace(A=A, Mk=M, BtUB=BtUB, apply_BtUB=lambda x: BtUB @ x, n=n, c=1.0)


@pytest.mark.parametrize("domain,k", COMBOS)
@pytest.mark.parametrize("level", [1, 2, 3])
def test_recovery_reaches_original_residual(domain, k, level):
    ops = ops_for(domain, level, k)
    cfg = SolverConfig(precond="mg" if level > 1 else "none", tol=1e-12, mass_tol=1e-12)
    sol = solve_source(ops, load(ops.n), cfg)
    assert sol.aux_report.converged and sol.mass_report.converged
    assert sol.residual_original <= 1e-9


@pytest.mark.parametrize("domain,k", COMBOS)
def test_manufactured_solution(domain, k):
    ops = ops_for(domain, 2, k, c=0.5)
    w = load(ops.n, 5)
    f = ops.A @ w + ops.c * (ops.Mk @ w)
    sol = solve_source(ops, f, SolverConfig(precond="ilu0", tol=1e-12, mass_tol=1e-13))
    assert np.linalg.norm(sol.u - w) <= 1e-7 * np.linalg.norm(w)


def test_gradient_load_on_level3():
    ops = ops_for("cube", 3, 1)
    f = ops.BtUB @ load(ops.n, 2)
    sol = solve_source(ops, f, SolverConfig(precond="ilu0", tol=1e-10, mass_tol=1e-14))
    assert sol.residual_original <= 1e-7
    # A kills M^-1 B^T (...), so the exact solution is M^-1 f / c
    exact = spla.spsolve(ops.Mk.tocsc(), f) / ops.c
    assert np.linalg.norm(ops.A @ exact) <= 1e-8 * np.linalg.norm(ops.Mk @ exact)
    assert np.linalg.norm(sol.u - exact) <= 1e-6 * np.linalg.norm(exact)


def test_sait_source_solve_converges():
    ops = ops_for("cube", 2, 1)
    sol = solve_source(ops, load(ops.n), SolverConfig(precond="sait"))
    assert sol.aux_report.converged
    assert sol.residual_original <= 1e-6


def test_multigrid_solver_path():
    ops = ops_for("hole", 3, 2)
    sol = solve_source(ops, load(ops.n), SolverConfig(solver="mg"))
    assert sol.aux_report.converged and sol.aux_report.iterations <= 12
    assert sol.residual_original <= 1e-6


def test_failure_names_the_stage():
    ops = ops_for("cube", 2, 1)
    with pytest.raises(SolveError) as err:
        solve_source(ops, load(ops.n), SolverConfig(maxit=5))
    assert err.value.stage == "auxiliary"
    assert err.value.report.status == "maxit"
    with pytest.raises(SolveError) as err:
        solve_source(ops, load(ops.n), SolverConfig(solver="mg", mass_tol=1e-15, maxit=10))
    assert err.value.stage == "mass"
    sol = solve_source(ops, load(ops.n), SolverConfig(maxit=5), raise_on_failure=False)
    assert not sol.aux_report.converged


def test_source_argument_checks():
    with pytest.raises(ValueError):
        solve_source(ops_for("cube", 1, 1, c=0.0), np.ones(300))
    with pytest.raises(ValueError):
        solve_source(ops_for("cube", 1, 1), np.ones(7))
    with pytest.raises(ValueError):
        SolverConfig(precond="jacobi")


@pytest.mark.parametrize("domain,k", COMBOS)
def test_residual_identity_with_injected_errors(domain, k):
    ops = ops_for(domain, 1, k, c=0.7)
    S = build_auxiliary_matrix(ops)
    rng = np.random.default_rng(1)
    f = rng.standard_normal(ops.n)
    e_aux, e_mass = 1e-3 * rng.standard_normal((2, ops.n))
    u_aux = spla.spsolve(S.tocsc(), f - e_aux)
    v = spla.spsolve(ops.Mk.tocsc(), ops.BtUB @ u_aux - e_mass)
    u = u_aux + v / ops.c
    e_orig = f - (ops.A @ u + ops.c * (ops.Mk @ u))
    pred = residual_propagation_check(ops, u_aux, e_aux, e_mass)
    assert np.linalg.norm(pred - e_orig) <= 1e-10 * np.linalg.norm(e_orig)
    # exact mass solve leaves only the auxiliary residual
    np.testing.assert_allclose(residual_propagation_check(ops, u_aux, e_aux, 0 * e_mass), e_aux)
    z = np.zeros(ops.n)
    assert not residual_propagation_check(ops, u_aux, z, z).any()
    with pytest.raises(ValueError):
        residual_propagation_check(ops, u_aux, e_aux, e_mass[:-1])


def test_residual_identity_matches_solver_output():
    ops = ops_for("hole", 2, 1)
    f = load(ops.n)
    sol = solve_source(ops, f, SolverConfig(tol=1e-6, mass_tol=1e-6))
    e_orig = f - (ops.A @ sol.u + ops.Mk @ sol.u)
    pred = residual_propagation_check(ops, sol.u_aux, sol.e_aux, sol.e_mass)
    assert np.linalg.norm(pred - e_orig) <= 1e-8 * np.linalg.norm(e_orig)


_BOUND_OPS = {k: ops_for("cube", 1, k) for k in (1, 2)}
_BOUND_RHO = {k: spectral_radius_bound(ops, tol=1e-6) for k, ops in _BOUND_OPS.items()}
_BOUND_MINV = {k: np.linalg.inv(ops.Mk.toarray()) for k, ops in _BOUND_OPS.items()}


@settings(max_examples=100, deadline=None)
@given(k=st.sampled_from([1, 2]), seed=st.integers(0, 2**32 - 1),
       sa=st.floats(-6, 6), sm=st.floats(-6, 6), c=st.sampled_from([0.25, 1.0, 4.0]))
def test_error_bound_holds(k, seed, sa, sm, c):
    ops = _BOUND_OPS[k]
    rng = np.random.default_rng(seed)
    e_aux = 10.0**sa * rng.standard_normal(ops.n)
    e_mass = 10.0**sm * rng.standard_normal(ops.n)
    e_orig = e_aux + ops.A @ (_BOUND_MINV[k] @ e_mass) / c + e_mass
    # power iteration converges from below, so give it its tolerance back
    rho = _BOUND_RHO[k] * (1 + 1e-5)
    assert np.linalg.norm(e_orig) <= error_bound(e_aux, e_mass, rho, c) * (1 + 1e-12)


def test_spectral_radius_examples():
    I = sp.identity(5, format="csr")
    assert spectral_radius_bound(SimpleNamespace(A=I, Mk=I)) == pytest.approx(1.0, rel=1e-4)
    D = sp.diags([1.0, 4.0]).tocsr()
    assert spectral_radius_bound(SimpleNamespace(A=D, Mk=sp.identity(2, format="csr"))) == \
        pytest.approx(4.0, rel=1e-4)


@pytest.mark.parametrize("domain,k", COMBOS)
def test_spectral_radius_against_dense(domain, k):
    ops = ops_for(domain, 1, k)
    ref = sla.eigh(ops.A.toarray(), ops.Mk.toarray(), eigvals_only=True).max()
    assert spectral_radius_bound(ops, tol=1e-6) == pytest.approx(ref, rel=1e-3)


def test_classify_examples():
    ops = toy(np.diag([2.000401, 0.0, 0.0]), np.diag([0.0, 4.696564, 0.0]))
    e = np.eye(3)
    assert classify_eigenpair(ops, 0.0, e[2]).kind is EigenType.HARMONIC
    p = classify_eigenpair(ops, 2.000401, e[0])
    assert p.kind is EigenType.ORIGINAL and p.lambda_tilde == pytest.approx(2.000401)
    p = classify_eigenpair(ops, 4.696564, e[1])
    assert p.kind is EigenType.AUXILIARY and p.lambda_tilde == 0.0
    assert p.to_dict() == {"lambda": 4.696564, "lambda_tilde": 0.0,
                           "lambda_aux": pytest.approx(4.696564), "type": 2}


def test_classify_mixed_split():
    M = np.array([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 3.0]])
    A = np.diag([6.0, 0.0, 0.0])  # e1 has value 3 for A
    BtUB = np.diag([0.0, 3.0, 0.0])  # e2 has value 3 for the auxiliary term
    ops = toy(A, BtUB, M)
    u = np.array([1.0, 2.0, 0.0])
    p = classify_eigenpair(ops, 3.0, u)
    assert p.kind is EigenType.MIXED
    u1, u2 = p.split
    assert abs(u1 @ (M @ u2)) <= 1e-6
    np.testing.assert_allclose(u1 + u2, p.vector)
    np.testing.assert_allclose(A @ u1, 3.0 * M @ u1, atol=1e-10)
    np.testing.assert_allclose(BtUB @ u2, 3.0 * M @ u2, atol=1e-10)


def test_type_counts_on_level3_cube():
    ops = ops_for("cube", 3, 1)
    res = solve_eigen(ops, cfg=SolverConfig(precond="mg", nev=20, block=25))
    assert res.report.converged
    # oracle: curl-type pairs stay eigenpairs when the auxiliary term is doubled
    S2 = ops.A + 2.0 * ops.BtUB
    n_orig = 0
    for lam, u in res.report.pairs:
        r = S2 @ u - lam * (ops.Mk @ u)
        n_orig += np.linalg.norm(r) <= 1e-5 * lam * np.linalg.norm(ops.Mk @ u)
    counts = res.type_counts()
    assert counts[1] == n_orig
    assert counts[2] == 20 - n_orig
    assert counts[0] == counts[3] == 0


@pytest.mark.parametrize("domain,k", [("cube", 1), ("hole", 1), ("cube", 2)])
def test_original_type_values_are_original_eigenvalues(domain, k):
    ops = ops_for(domain, 1, k)
    res = solve_eigen(ops, cfg=SolverConfig(precond="ilu0", nev=20, block=25))
    ref = sla.eigh(ops.A.toarray(), ops.Mk.toarray(), eigvals_only=True)
    ref = ref[ref > 1e-8]
    originals = [p for p in res.pairs if p.kind is EigenType.ORIGINAL]
    assert originals
    for p in originals:
        assert np.abs(ref - p.lambda_h).min() <= 1e-7 * p.lambda_h
        assert p.lambda_tilde == pytest.approx(p.lambda_h, rel=1e-6)


def test_hole_faces_level1_low_spectrum_is_auxiliary():
    ops = ops_for("hole", 1, 2)
    res = solve_eigen(ops, cfg=SolverConfig(precond="ilu0"))
    S, M = ops.A + ops.BtUB, ops.Mk.toarray()
    one = sla.eigh(S.toarray(), M, eigvals_only=True)[:20]
    two = sla.eigh((ops.A + 2.0 * ops.BtUB).toarray(), M, eigvals_only=True)
    # no value survives doubling the auxiliary term
    assert not any(np.any(np.abs(two - lam) <= 1e-6 * lam) for lam in one)
    assert res.type_counts() == {0: 0, 1: 0, 2: 20, 3: 0}


def test_hole_has_one_harmonic_pair():
    res = solve_eigen(ops_for("hole", 1, 1), cfg=SolverConfig(precond="ilu0"))
    harmonic = [p for p in res.pairs if p.kind is EigenType.HARMONIC]
    assert len(harmonic) == 1 and abs(harmonic[0].lambda_h) <= 1e-8
    assert res.type_counts()[0] == 1


def test_eigen_rejects_multigrid_solver():
    with pytest.raises(ValueError):
        solve_eigen(ops_for("cube", 1, 1), cfg=SolverConfig(solver="mg"))


def test_solve_eigen_nev_argument_overrides_config():
    ops = ops_for("cube", 1, 2)
    res = solve_eigen(ops, nev=4, cfg=SolverConfig(precond="ilu0", nev=20, block=2))
    assert len(res.pairs) == 4
    ref = solve_eigen(ops, cfg=SolverConfig(precond="ilu0", nev=4, block=4))
    assert [p.lambda_h for p in res.pairs] == pytest.approx([p.lambda_h for p in ref.pairs], rel=1e-6)
    with pytest.raises(TypeError):
        solve_eigen(ops, SolverConfig())
