import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from mixedplate import quadrature
from mixedplate.assembly import (Coefficient, SchemeParams, apply_dirichlet, assemble_biharmonic,
                                 assemble_load, assemble_membrane, assemble_stiffness,
                                 assemble_vk_coupling, biharmonic_system, cofactor_2x2,
                                 vk_layout, vk_system)
from mixedplate.fe_spaces import build_space
from mixedplate.mesh import Mesh, domain_mesh, generate_square_mesh
from mixedplate.quadrature import triangle_rule

KAPPA = Coefficient(lambda x, y: x ** 2 + y ** 2 + 1, lambda x, y: (2 * x, 2 * y))


def perturbed(n, seed):
    m = generate_square_mesh(n)
    p = m.vertices.copy()
    inner = ~m.boundary_vertices
    p[inner] += np.random.default_rng(seed).uniform(-0.2, 0.2, (inner.sum(), 2)) / n
    return Mesh(p, m.triangles)


MESHES = {"square2": lambda: generate_square_mesh(2), "perturbed3": lambda: perturbed(3, 0),
          "omega1": lambda: domain_mesh("omega1", 2)}


def spaces(mesh, k=1, element="bdm"):
    return build_space(mesh, element, k), build_space(mesh, "lagrange", k + 1)


def energy_by_quadrature(W, V, X, coef, tau):
    """||sqrt(k) div w||^2 + sum_K tau/h_K^2 ||sqrt(k)(w - grad u)||^2 per column of X."""
    mesh = W.mesh
    rule = triangle_rule(2 * V.order + 4)
    _, _, det, _ = mesh.jacobians()
    x = mesh.map_points(rule.xy)
    k = coef.kappa(x[..., 0], x[..., 1])
    phi, div, _ = W.tabulate(None, rule.xy)
    _, g, _ = V.tabulate(None, rule.xy)
    cw = X[:W.ndofs][W.cell_dofs]          # (c, nw, N)
    cu = X[W.ndofs:][V.cell_dofs]
    dw = np.einsum("cqn,cnN->cqN", div, cw)
    e = np.einsum("cqnd,cnN->cqdN", phi, cw) - np.einsum("cqnd,cnN->cqdN", g, cu)
    wq = rule.weights * np.abs(det)[:, None] * k
    stab = tau / mesh.h_K ** 2
    return (np.einsum("cq,cqN->N", wq, dw ** 2)
            + np.einsum("c,cq,cqdN->N", stab, wq, e ** 2))


@pytest.mark.parametrize("name", list(MESHES))
@pytest.mark.parametrize("k,element", [(1, "bdm"), (2, "bdm"), (1, "vlagrange")])
def test_energy_identity_theta_minus_one(name, k, element):
    W, V = spaces(MESHES[name](), k, element)
    A = assemble_biharmonic(W, V, KAPPA, SchemeParams(theta=-1, tau=7.0))
    X = np.random.default_rng(1).normal(size=(A.shape[0], 100))
    quad = np.einsum("iN,iN->N", X, A @ X)
    ref = energy_by_quadrature(W, V, X, KAPPA, 7.0)
    np.testing.assert_allclose(quad, ref, rtol=1e-12)


@pytest.mark.parametrize("name", list(MESHES))
def test_theta_one_symmetric(name):
    W, V = spaces(MESHES[name](), 2)
    A = assemble_biharmonic(W, V, KAPPA, SchemeParams(theta=1, tau=10))
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    assert A.has_sorted_indices and A.has_canonical_format


def test_theta_minus_one_not_symmetric():
    W, V = spaces(generate_square_mesh(2), 1)
    A = assemble_biharmonic(W, V, KAPPA, SchemeParams(theta=-1, tau=10))
    assert abs(A - A.T).max() > 1e-6 * abs(A).max()


@pytest.mark.parametrize("element", ["bdm", "vlagrange"])
def test_positive_definite_after_elimination(element):
    W, V = spaces(generate_square_mesh(2), 1, element)
    s = biharmonic_system(W, V, Coefficient.constant(1.0), SchemeParams(1, 10.0),
                          lambda x, y: 0 * x)
    free = np.setdiff1d(np.arange(s.matrix.shape[0]), s.boundary_dofs)
    s = apply_dirichlet(s, s.boundary_dofs, np.zeros(len(s.boundary_dofs)))
    A = s.matrix.toarray()
    assert np.linalg.eigvalsh(0.5 * (A + A.T)).min() > 0
    assert np.linalg.eigvalsh(A[np.ix_(free, free)]).min() > 0
    assert np.abs(A - A.T).max() <= 1e-12 * np.abs(A).max()


def test_quadratic_form_of_exact_interpolants():
    W, V = spaces(perturbed(4, 3), 1)
    x = np.concatenate([W.interpolate(lambda x, y: (2 * x, 0 * x)),
                        V.interpolate(lambda x, y: x ** 2)])
    for theta in (-1, 1):
        A = assemble_biharmonic(W, V, Coefficient.constant(1.0), SchemeParams(theta, 10.0))
        assert x @ (A @ x) == pytest.approx(4.0, rel=1e-12)


def test_consistency_with_polynomial_solution():
    # u = x^2 solves the biharmonic problem with f = 0; interior residual vanishes
    W, V = spaces(perturbed(4, 5), 2)
    s = biharmonic_system(W, V, Coefficient.constant(1.0), SchemeParams(1, 10.0),
                          lambda x, y: 0 * x)
    x = np.concatenate([W.interpolate(lambda x, y: (2 * x, 0 * x)),
                        V.interpolate(lambda x, y: x ** 2)])
    r = s.matrix @ x - s.rhs
    interior = np.setdiff1d(np.arange(len(x)), s.boundary_dofs)
    assert np.abs(r[interior]).max() <= 1e-10
    # and with the boundary data eliminated, the solve returns the interpolants
    dw, vw = W.set_dirichlet_values(lambda x, y: (2 * x, 0 * x))
    dv, vv = V.set_dirichlet_values(lambda x, y: x ** 2)
    s2 = apply_dirichlet(s, np.concatenate([dw, dv + W.ndofs]), np.concatenate([vw, vv]))
    sol = sp.linalg.spsolve(s2.matrix.tocsc(), s2.rhs)
    np.testing.assert_allclose(sol, x, atol=1e-10)


def test_no_edge_quadrature_during_assembly():
    W, V = spaces(perturbed(3, 1), 2)
    xi = np.random.default_rng(0).normal(size=V.ndofs)
    quadrature.reset_edge_counter()
    A = assemble_biharmonic(W, V, KAPPA, SchemeParams(1, 10))
    assemble_load(V, lambda x, y: x * y)
    C = assemble_vk_coupling(V, xi)
    M = assemble_membrane(V, 3.0)
    vk_system(A, C, M, W, V, np.zeros(V.ndofs), np.zeros(V.ndofs))
    assert quadrature.EDGE_RULE_CALLS == 0


def test_nonpositive_kappa_and_mismatched_meshes_rejected():
    W, V = spaces(generate_square_mesh(2), 1)
    bad = Coefficient(lambda x, y: x - 0.5, lambda x, y: (1.0 + 0 * x, 0 * x))
    with pytest.raises(ValueError):
        assemble_biharmonic(W, V, bad, SchemeParams())
    V2 = build_space(generate_square_mesh(2), "lagrange", 2)
    with pytest.raises(ValueError):
        assemble_biharmonic(W, V2, KAPPA, SchemeParams())


@pytest.mark.parametrize("kw", [dict(theta=0.5), dict(theta=0.0), dict(tau=0.0),
                                dict(tau=-1.0)])
def test_scheme_params_validation(kw):
    with pytest.raises(ValueError):
        SchemeParams(**kw)


def test_any_theta_behind_flag():
    assert SchemeParams(theta=0.5, allow_any_theta=True).theta == 0.5


def test_load_vector():
    V = build_space(perturbed(4, 2), "lagrange", 2)
    assert not assemble_load(V, lambda x, y: 0 * x).any()
    b1 = assemble_load(V, lambda x, y: 1.0 + 0 * x)
    assert b1.sum() == pytest.approx(1.0, rel=1e-13)
    np.testing.assert_allclose(assemble_load(V, lambda x, y: 3.5 + 0 * x), 3.5 * b1, rtol=1e-14, atol=1e-15)
    W = build_space(V.mesh, "bdm", 1)
    s = biharmonic_system(W, V, KAPPA, SchemeParams(), lambda x, y: 1.0 + 0 * x)
    assert not s.rhs[:W.ndofs].any()


def test_apply_dirichlet():
    W, V = spaces(generate_square_mesh(3), 1)
    s = biharmonic_system(W, V, KAPPA, SchemeParams(1, 10), lambda x, y: x + 1)
    rng = np.random.default_rng(4)
    vals = rng.normal(size=len(s.boundary_dofs))
    e = apply_dirichlet(s, s.boundary_dofs, vals)
    A = e.matrix
    for i, d in enumerate(s.boundary_dofs[:20]):
        row = A.getrow(d).toarray().ravel()
        assert row[d] == 1.0 and np.count_nonzero(row) == 1
        assert e.rhs[d] == vals[i]
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    x = sp.linalg.spsolve(A.tocsc(), e.rhs)
    np.testing.assert_array_equal(x[s.boundary_dofs], vals)
    h = apply_dirichlet(s, s.boundary_dofs, np.zeros(len(s.boundary_dofs)))
    assert not h.rhs[s.boundary_dofs].any()
    interior = np.setdiff1d(np.arange(A.shape[0]), s.boundary_dofs)
    with pytest.raises(ValueError):
        apply_dirichlet(s, interior[:2], np.zeros(2))


def test_cofactor_examples():
    np.testing.assert_array_equal(cofactor_2x2([[2, 0], [0, 0]]), [[0, 0], [0, 2]])
    np.testing.assert_array_equal(cofactor_2x2(np.eye(2)), np.eye(2))
    np.testing.assert_array_equal(cofactor_2x2([[1, 3], [3, 5]]), [[5, -3], [-3, 1]])


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_cofactor_properties(abc):
    a, b, c = abc
    H = np.array([[a, b], [b, c]])
    C = cofactor_2x2(H)
    assert np.array_equal(C, C.T)
    assert np.trace(C) == np.trace(H)
    np.testing.assert_array_equal(cofactor_2x2(C), H)
    np.testing.assert_allclose(C @ H, np.linalg.det(H) * np.eye(2), atol=1e-9 * (1 + abs(H).max() ** 2))


def test_vk_coupling():
    V = build_space(perturbed(3, 6), "lagrange", 2)
    assert abs(assemble_vk_coupling(V, np.zeros(V.ndofs))).max() == 0
    # xi = x^2/2: cof(D^2 xi) = diag(0, 1), so C is the d/dy stiffness block
    C = assemble_vk_coupling(V, V.interpolate(lambda x, y: x ** 2 / 2))
    rule = triangle_rule(2 * V.order)
    _, _, det, _ = V.mesh.jacobians()
    _, g, _ = V.tabulate(None, rule.xy)
    loc = np.einsum("cq,cqj,cqi->cij", rule.weights * np.abs(det)[:, None], g[..., 1], g[..., 1])
    d = V.cell_dofs
    S = sp.coo_matrix((loc.ravel(), (np.repeat(d, d.shape[1], 1).ravel(),
                                     np.tile(d, (1, d.shape[1])).ravel())),
                      shape=C.shape).tocsr()
    assert abs(C - S).max() <= 1e-12 * abs(S).max()
    xi = np.random.default_rng(0).normal(size=V.ndofs)
    C = assemble_vk_coupling(V, xi)
    assert abs(C - C.T).max() <= 1e-12 * abs(C).max()


def test_membrane_block():
    V = build_space(generate_square_mesh(3), "lagrange", 2)
    K = assemble_stiffness(V)
    assert abs(assemble_membrane(V, 0.0)).max() == 0
    assert abs(assemble_membrane(V, 1.0) + K).max() == 0
    assert abs(assemble_membrane(V, 2.5) - 2.5 * assemble_membrane(V, 1.0)).max() <= 1e-14
    with pytest.raises(ValueError):
        assemble_membrane(V, -1.0)


def test_vk_system_layout():
    W, V = spaces(generate_square_mesh(2), 1)
    B = assemble_biharmonic(W, V, Coefficient.constant(1.0), SchemeParams())
    C = assemble_vk_coupling(V, np.random.default_rng(0).normal(size=V.ndofs))
    M = assemble_membrane(V, 2.0)
    f, g = np.arange(V.ndofs, dtype=float), -np.arange(V.ndofs, dtype=float)
    s = vk_system(B, C, M, W, V, f, g)
    o = vk_layout(W, V)
    A = s.matrix.toarray()
    assert s.offsets == o and A.shape == (o[-1], o[-1])
    np.testing.assert_array_equal(A[o[0]:o[2], o[0]:o[2]], B.toarray() + np.pad(
        M.toarray(), ((W.ndofs, 0), (W.ndofs, 0))))
    np.testing.assert_array_equal(A[o[2]:, o[2]:], B.toarray())
    np.testing.assert_array_equal(A[o[1]:o[2], o[3]:o[4]], C.toarray())
    np.testing.assert_array_equal(A[o[3]:o[4], o[1]:o[2]], -C.toarray())
    np.testing.assert_array_equal(s.rhs[o[1]:o[2]], f)
    np.testing.assert_array_equal(s.rhs[o[3]:o[4]], g)
    assert not s.rhs[o[0]:o[1]].any() and not s.rhs[o[2]:o[3]].any()


def test_assembly_bitwise_deterministic():
    W, V = spaces(perturbed(3, 2), 2)
    A1 = assemble_biharmonic(W, V, KAPPA, SchemeParams(-1, 10))
    A2 = assemble_biharmonic(W, V, KAPPA, SchemeParams(-1, 10))
    assert np.array_equal(A1.indptr, A2.indptr) and np.array_equal(A1.indices, A2.indices)
    assert np.array_equal(A1.data, A2.data)
