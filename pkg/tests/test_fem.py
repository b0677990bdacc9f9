import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from roughlayer.errors import AssemblyError, SolverError
from roughlayer.fem import (CachedLUSolver, FunctionSpace, ReusedLUSolver, SaddlePointSolver, assemble_operator,
                            assemble_stokes, boundary_flux, load_vector, mass_matrix, robin_coupling,
                            solve_sparse, solve_stokes, stiffness_matrix, supg_tau)
from roughlayer.fem.assembly import advection_matrix, edge_load_vector, edge_mass_matrix
from roughlayer.mesh import Sub, Tag, triangulate_macro


@pytest.fixture(scope="module")
def square():
    m, _ = triangulate_macro(0.125)
    return m


def _poly(x, y):
    return 1 + 2 * x - 3 * y + x * y + 0.5 * x * x


@pytest.mark.parametrize("order", [1, 2])
def test_mass_integrates_products(square, order):
    W = FunctionSpace(square, order)
    M = mass_matrix(W)
    one = np.ones(W.n_dofs)
    assert one @ M @ one == pytest.approx(1.0, rel=1e-13)
    x = W.dof_coordinates()[:, 0]
    # int_0^1 x dx over the unit square, x interpolated exactly
    assert one @ M @ x == pytest.approx(0.5, rel=1e-13)
    assert sp.linalg.norm(M - M.T) < 1e-15


@pytest.mark.parametrize("order", [1, 2])
def test_stiffness_kernel_and_energy(square, order):
    W = FunctionSpace(square, order)
    K = stiffness_matrix(W)
    assert np.abs(K @ np.ones(W.n_dofs)).max() < 1e-12
    x = W.dof_coordinates()[:, 0]
    assert x @ K @ x == pytest.approx(1.0, rel=1e-12)


def test_p2_reproduces_quadratics(square):
    W = FunctionSpace(square, 2)
    u = W.interpolate(_poly)
    xq, _ = W.quadrature()
    assert np.allclose(W.evaluate(u), _poly(xq[..., 0], xq[..., 1]), atol=1e-13)
    g = W.gradient(u)
    assert np.allclose(g[..., 0], 2 + xq[..., 1] + xq[..., 0], atol=1e-12)


def test_load_vector_of_constant(square):
    W = FunctionSpace(square, 1)
    assert load_vector(W, 3.0).sum() == pytest.approx(3.0, rel=1e-13)


def test_advection_matrix_antisymmetric_part(square):
    W = FunctionSpace(square, 1)
    A = advection_matrix(W, np.array([1.0, 0.0]))
    x = W.dof_coordinates()[:, 0]
    # int (d/dx x) * 1 = 1 and (A + A^T) is the boundary term int v.n phi_i phi_j
    assert np.ones(W.n_dofs) @ A @ x == pytest.approx(1.0, rel=1e-12)
    S = (A + A.T).toarray()
    one = np.ones(W.n_dofs)
    assert one @ S @ one == pytest.approx(0.0, abs=1e-12)


def test_supg_tau_limits(square):
    W = FunctionSpace(square, 1)
    tau_diff = supg_tau(W, np.array([1.0, 0.0]), 1e3)
    tau_adv = supg_tau(W, np.array([1.0, 0.0]), 1e-9)
    h = W.diameter
    assert np.all(tau_diff < 1e-3 * h)
    assert np.allclose(tau_adv, h / 2, rtol=1e-6)
    assert np.all(supg_tau(W, np.array([0.0, 0.0]), 1.0) == 0.0)


def test_assemble_operator_dispatch(square):
    W = FunctionSpace(square, 1)
    assert (assemble_operator(W, "mass") != mass_matrix(W)).nnz == 0
    with pytest.raises(AssemblyError):
        assemble_operator(W, "advection")
    with pytest.raises(AssemblyError):
        assemble_operator(W, "curl")


def test_edge_integrals(square):
    W = FunctionSpace(square, 1)
    bottom = square.edges_with(Tag.BOTTOM)
    Me = edge_mass_matrix(W, W, bottom)
    one = np.ones(W.n_dofs)
    assert one @ Me @ one == pytest.approx(1.0, rel=1e-13)
    b = edge_load_vector(W, bottom, lambda x, y: x)
    assert b.sum() == pytest.approx(0.5, rel=1e-13)


def _two_block_mesh():
    m, _ = triangulate_macro(0.125)
    c = m.vertices[m.triangles].mean(axis=1)
    m.subdomain = np.where(c[:, 1] < 0.5, int(Sub.FLUID), int(Sub.SOLID))
    v = m.vertices
    row = np.flatnonzero(np.isclose(v[:, 1], 0.5))
    row = row[np.argsort(v[row, 0])]
    edges = np.column_stack([row[:-1], row[1:]])
    return m, edges


def test_robin_block_psd_with_interface_kernel():
    m, edges = _two_block_mesh()
    Wf = FunctionSpace(m, 1, elements=np.flatnonzero(m.subdomain == Sub.FLUID))
    Ws = FunctionSpace(m, 1, elements=np.flatnonzero(m.subdomain == Sub.SOLID))
    r = robin_coupling(Wf, Ws, edges, 2.0)
    R = sp.bmat([[r["ss"], r["sf"]], [r["fs"], r["ff"]]]).toarray()
    assert np.allclose(R, R.T, atol=1e-15)
    ev = np.linalg.eigvalsh(R)
    assert ev.min() > -1e-12 * ev.max()
    # rank equals the number of interface vertices: only theta_s - theta_f on Gamma is seen
    assert np.sum(ev > 1e-10 * ev.max()) == len(np.unique(edges))
    rng = np.random.default_rng(0)
    ts = rng.normal(size=Ws.n_dofs)
    tf = rng.normal(size=Wf.n_dofs)
    gv = np.unique(edges)
    tf[Wf.node_to_dof[gv]] = ts[Ws.node_to_dof[gv]]
    v = np.concatenate([ts, tf])
    assert np.abs(R @ v).max() < 1e-13


def test_poiseuille_is_exact_for_taylor_hood():
    m, _ = triangulate_macro(0.25)
    V = FunctionSpace(m, 2, components=2)
    Q = FunctionSpace(m, 1)
    system = assemble_stokes(V, Q, viscosity=0.5)
    b = V.boundary_dofs(Tag.BOTTOM, Tag.SOLID_OUTER)
    xy = V.dof_coordinates()[b]
    ux = xy[:, 1] * (1 - xy[:, 1])
    sol = solve_stokes(system, V.vector_dofs(b), np.concatenate([ux, 0 * ux]))
    xq, _ = V.quadrature()
    u = V.evaluate(sol.u)
    assert np.allclose(u[..., 0], xq[..., 1] * (1 - xq[..., 1]), atol=1e-9)
    assert np.allclose(u[..., 1], 0.0, atol=1e-9)
    # -mu u'' + p_x = 0 with mu = 0.5 gives p = -x + const
    pq = Q.evaluate(sol.p)
    assert np.allclose(pq, -(xq[..., 0] - 0.5), atol=1e-8)
    assert abs(system.m @ sol.p) < 1e-10


def test_saddle_solver_matches_direct_bordered_solve():
    m, _ = triangulate_macro(0.25)
    V = FunctionSpace(m, 2, components=2)
    Q = FunctionSpace(m, 1)
    xq, _ = V.quadrature()
    mu = 1e-3 * np.exp(3 * xq[..., 0])
    system = assemble_stokes(V, Q, viscosity=mu, body_force=(1.0, lambda x, y: x))
    b = V.boundary_dofs(Tag.BOTTOM, Tag.SOLID_OUTER)
    bottom = V.boundary_dofs(Tag.BOTTOM)
    vals = np.zeros((V.n_scalar, 2))
    vals[bottom, 0] = 1.0
    dofs = V.vector_dofs(b)
    g = np.concatenate([vals[b, 0], vals[b, 1]])
    a = solve_stokes(system, dofs, g, method="direct")
    s = SaddlePointSolver(tol=1e-12).solve(system, dofs, g)
    assert np.allclose(a.u, s.u, atol=1e-9)
    assert np.allclose(a.p, s.p, atol=1e-9 * np.abs(a.p).max())
    assert abs(system.m @ s.p) < 1e-10
    assert s.divergence_residual < 1e-8


def test_boundary_flux_of_divergence_free_field():
    m, _ = triangulate_macro(0.25)
    V = FunctionSpace(m, 2, components=2)
    u = V.interpolate(lambda x, y: np.stack([x * x, -2 * x * y]))
    edges = m.edges
    assert abs(boundary_flux(V, u, edges)) < 1e-13
    # flux through the right side alone: int_0^1 1 dy
    right = edges[np.all(np.isclose(m.vertices[edges, 0], 1.0), axis=1)]
    assert boundary_flux(V, u, right) == pytest.approx(1.0, rel=1e-13)


def _spd(n, seed):
    rng = np.random.default_rng(seed)
    A = sp.random(n, n, density=0.2, random_state=rng) + n * sp.eye(n)
    return sp.csr_matrix(A), rng.normal(size=n)


@settings(max_examples=15, deadline=None)
@given(st.integers(5, 60), st.integers(0, 1000))
def test_direct_and_iterative_agree(n, seed):
    A, b = _spd(n, seed)
    x1 = solve_sparse(A, b)
    x2 = solve_sparse(A, b, method="gmres", tol=1e-12)
    assert np.allclose(x1, x2, atol=1e-8)
    assert np.linalg.norm(A @ x1 - b) <= 1e-10 * (np.linalg.norm(b) + 1)


def test_reused_and_cached_solvers():
    A, b = _spd(40, 3)
    r = ReusedLUSolver()
    x = r.solve(A, b)
    x2 = r.solve(A * 1.01, b)
    assert np.allclose((A * 1.01) @ x2, b, atol=1e-9)
    assert r.n_factorizations == 1
    c = CachedLUSolver()
    c.solve(A, b)
    c.solve(A.copy(), 2 * b)
    assert c.n_factorizations == 1
    c.solve(A * 2.0, b)
    assert c.n_factorizations == 2


def test_singular_matrix_raises_with_diagnostics():
    A = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(SolverError) as info:
        solve_sparse(A, np.ones(2))
    assert info.value.diagnostics
    with pytest.raises(SolverError):
        solve_sparse(A, np.ones(2), method="cholesky")
