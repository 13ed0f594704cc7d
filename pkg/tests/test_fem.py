import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from derham_aux.fem import (
    USpec,
    assemble_mass,
    assemble_stiffness_elementwise,
    build_auxiliary_matrix,
    build_operators,
)
from derham_aux.mesh import DomainKind, build_mesh, differential, grid_mesh

COMBOS = [(d, k) for d in ("cube", "hole") for k in (1, 2)]


@pytest.mark.parametrize("domain", ["cube", "hole"])
@pytest.mark.parametrize("level", [1, 2])
def test_nodal_mass_sums_to_volume(domain, level):
    M0 = assemble_mass(build_mesh(domain, level), 0)
    assert M0.sum() == pytest.approx(DomainKind.parse(domain).volume, rel=1e-10)


@pytest.mark.parametrize("domain", ["cube", "hole"])
def test_constant_face_field(domain):
    m = build_mesh(domain, 2)
    c = (m.spans(2)[:, 0] == 0).astype(float)  # unit mean normal on x-normal faces
    M2 = assemble_mass(m, 2)
    assert c @ (M2 @ c) == pytest.approx(DomainKind.parse(domain).volume, rel=1e-12)


def test_single_cell_nodal_mass_is_tensor_product():
    m = grid_mesh("cube", 1)
    h = m.h
    m1 = h / 6 * np.array([[2.0, 1.0], [1.0, 2.0]])
    # node ids run x fastest, then y, then z
    expected = np.kron(m1, np.kron(m1, m1))
    np.testing.assert_allclose(assemble_mass(m, 0).toarray(), expected, rtol=1e-13)


def test_mass_degree_check():
    with pytest.raises(ValueError):
        assemble_mass(build_mesh("cube", 1), 4)


@pytest.mark.parametrize("domain,k", COMBOS)
@pytest.mark.parametrize("level", [1, 2])
def test_mass_matrices_spd(domain, k, level):
    ops = build_operators(build_mesh(domain, level), k)
    for M in (ops.Mk, ops.Mkm1):
        assert abs(M - M.T).max() == 0
        np.linalg.cholesky(M.toarray())


def test_level1_shapes():
    ops = build_operators(build_mesh("cube", 1), 1)
    assert ops.A.shape == (300, 300)
    assert ops.B.shape == (125, 300)
    assert ops.U.shape == (125, 125)


@pytest.mark.parametrize("domain,k", COMBOS)
@pytest.mark.parametrize("level", [1, 2])
def test_stiffness_assembly_paths_agree(domain, k, level):
    mesh = build_mesh(domain, level)
    ops = build_operators(mesh, k)
    direct = assemble_stiffness_elementwise(mesh, k)
    diff = abs(direct - ops.A).max()
    assert diff <= 1e-12 * abs(ops.A).max()
    Dk = differential(mesh, k)
    composed = Dk.T @ assemble_mass(mesh, k + 1) @ Dk
    assert abs(composed - ops.A).max() <= 1e-12 * abs(ops.A).max()


@pytest.mark.parametrize("domain", ["cube", "hole"])
def test_gradients_in_curl_kernel(domain):
    mesh = build_mesh(domain, 2)
    ops = build_operators(mesh, 1)
    x = np.random.default_rng(0).standard_normal(mesh.n_nodes)
    g = differential(mesh, 0) @ x
    assert abs(g @ (ops.A @ g)) <= 1e-10 * (g @ (ops.Mk @ g))
    S = build_auxiliary_matrix(ops, c=0.0)
    assert g @ (S @ g) > 0


def test_zero_u_gives_original_matrix():
    ops = build_operators(build_mesh("cube", 1), 1, c=1.0, u_spec=USpec(factor=0.0))
    S = build_auxiliary_matrix(ops)
    assert abs(S - (ops.A + ops.Mk)).max() == 0


@pytest.mark.parametrize("domain,k", COMBOS)
def test_auxiliary_matrix_symmetric(domain, k):
    S = build_auxiliary_matrix(build_operators(build_mesh(domain, 2), k))
    assert abs(S - S.T).max() == 0


@pytest.mark.parametrize("domain,k", COMBOS)
def test_auxiliary_term_forms_agree(domain, k):
    ops = build_operators(build_mesh(domain, 2), k)
    G = ops.auxiliary_term()
    ref = ops.B.T @ ops.U @ ops.B
    assert abs(G - ref).max() <= 1e-13 * abs(ref).max()
    x = np.random.default_rng(0).standard_normal(ops.n)
    np.testing.assert_allclose(ops.apply_BtUB(x), G @ x, rtol=1e-12, atol=1e-12 * np.abs(G @ x).max())
    S = build_auxiliary_matrix(ops)
    dense = (ops.A + ref + ops.Mk).toarray()
    assert np.abs(S.toarray() - dense).max() <= 1e-13 * np.abs(dense).max()


def test_u_spec_scale():
    mesh = build_mesh("cube", 2)
    U = USpec().matrix(mesh, 7)
    np.testing.assert_allclose(U.diagonal(), 5.0 / mesh.h**3)
    assert USpec(factor=2.0, power=1.0).value(0.5) == 4.0


def test_operator_argument_checks():
    mesh = build_mesh("cube", 1)
    with pytest.raises(ValueError):
        build_operators(mesh, 3)
    with pytest.raises(ValueError):
        build_operators(mesh, 1, c=-1.0)


@pytest.mark.parametrize("domain,k", COMBOS)
@pytest.mark.parametrize("level", [1, 2])
def test_stiffness_annihilates_auxiliary_range(domain, k, level):
    ops = build_operators(build_mesh(domain, level), k)
    solve_k = spla.splu(ops.Mk.tocsc()).solve
    solve_km1 = spla.splu(ops.Mkm1.tocsc()).solve
    rng = np.random.default_rng(level)
    for _ in range(20):
        x = rng.standard_normal(ops.n)
        y = ops.A @ solve_k(ops.B.T @ solve_km1(ops.B @ x))
        assert np.linalg.norm(y) <= 1e-9 * np.linalg.norm(x)
        y = ops.A @ solve_k(ops.BtUB @ x)
        assert np.linalg.norm(y) <= 1e-9 * np.linalg.norm(x)


_OPS_L1 = {k: build_operators(build_mesh("hole", 1), k) for k in (1, 2)}


@settings(max_examples=40, deadline=None)
@given(k=st.sampled_from([1, 2]), seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3))
def test_corollary_with_diagonal_u(k, seed, scale):
    ops = _OPS_L1[k]
    x = scale * np.random.default_rng(seed).standard_normal(ops.n)
    y = ops.A @ spla.spsolve(ops.Mk.tocsc(), ops.BtUB @ x)
    assert np.linalg.norm(y) <= 1e-9 * np.linalg.norm(x)
