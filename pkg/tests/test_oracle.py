"""Element-by-element dense assembly compared with the sparse vectorised path."""
import numpy as np
import pytest

from roughlayer.fem import assemble_stokes
from roughlayer.fem.assembly import supg_tau
from roughlayer.macro import MacroState, build_effective_problem, macro_heat_step
from roughlayer.micro import MicroState, build_micro_problem, heat_step, initial_state, stokes_step
from roughlayer.mesh import Sub, Tag

from conftest import coarse_config


def p1_element(xy):
    """Area and barycentric gradients of a triangle (rows: vertices)."""
    (x0, y0), (x1, y1), (x2, y2) = xy
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    grads = np.array([[y1 - y2, x2 - x1], [y2 - y0, x0 - x2], [y0 - y1, x1 - x0]]) / det
    return 0.5 * det, grads


def dense_blocks(mesh, tris, dof_of, n, velocity=None, tau=None):
    """Mass, stiffness, advection and SUPG matrices of P1 on the listed triangles.

    ``velocity`` must be affine so that vertex averages give exact integrals.
    """
    M, K, A, S, Sm = (np.zeros((n, n)) for _ in range(5))
    for k, t in enumerate(tris):
        xy = mesh.vertices[mesh.triangles[t]]
        area, g = p1_element(xy)
        d = dof_of[mesh.triangles[t]]
        for i in range(3):
            for j in range(3):
                M[d[i], d[j]] += area / 12 * (2 if i == j else 1)
                K[d[i], d[j]] += area * g[i] @ g[j]
        if velocity is None:
            continue
        v = velocity(xy[:, 0], xy[:, 1]).T            # (3, 2) at the vertices
        # int lambda_i v = area/12 (v_i + sum v); v.grad lambda_j is affine
        for i in range(3):
            vi = area / 12 * (v[i] + v.sum(axis=0))
            vbar = v.mean(axis=0)
            for j in range(3):
                A[d[i], d[j]] += vi @ g[j]
                # int (v.g_i)(v.g_j): exact for affine v via the degree-2 edge-midpoint rule
                mids = 0.5 * (v + np.roll(v, -1, axis=0))
                S[d[i], d[j]] += tau[k] * area / 3 * np.sum((mids @ g[i]) * (mids @ g[j]))
                Sm[d[i], d[j]] += tau[k] * area / 12 * ((v[j] + v.sum(axis=0)) @ g[i])
    return M, K, A, S, Sm


def dense_edges(mesh, edges, dof_a, dof_b, n_a, n_b):
    C = np.zeros((n_a, n_b))
    for a, b in edges:
        L = np.linalg.norm(mesh.vertices[a] - mesh.vertices[b])
        for (p, q), w in (((a, a), 2), ((b, b), 2), ((a, b), 1), ((b, a), 1)):
            C[dof_a[p], dof_b[q]] += L / 6 * w
    return C


def _affine_velocity(x, y):
    return np.stack([0.8 + 0.5 * y - 0.2 * x, 0.3 * x - 0.1])


def test_micro_heat_step_matches_dense_oracle():
    cfg = coarse_config()
    p = build_micro_problem(cfg)
    mesh, eps, dt = p.mesh, cfg.epsilon, cfg.dt
    u = p.V.interpolate(_affine_velocity)
    uq = p.V.evaluate(u)
    tau = supg_tau(p.Wf, uq, cfg.kappa_f)
    fluid = np.flatnonzero(mesh.subdomain == Sub.FLUID)
    solid = np.flatnonzero(mesh.subdomain == Sub.SOLID)
    ns, nf = p.Ws.n_dofs, p.Wf.n_dofs
    Mf, Kf, Af, Sf, Smf = dense_blocks(mesh, fluid, p.Wf.node_to_dof, nf, _affine_velocity, tau)
    Ms, Ks, *_ = dense_blocks(mesh, solid, p.Ws.node_to_dof, ns)
    gam = mesh.edges_with(Tag.ROUGH_INTERFACE)
    Css = dense_edges(mesh, gam, p.Ws.node_to_dof, p.Ws.node_to_dof, ns, ns)
    Cff = dense_edges(mesh, gam, p.Wf.node_to_dof, p.Wf.node_to_dof, nf, nf)
    Csf = dense_edges(mesh, gam, p.Ws.node_to_dof, p.Wf.node_to_dof, ns, nf)
    a = cfg.alpha
    L = np.block([[Ms / dt + cfg.kappa_s * Ks + a * Css, -a * Csf],
                  [-a * Csf.T, (Mf / dt + cfg.kappa_f * Kf + Af + Sf + Smf / dt) / eps + a * Cff]])
    # solid source (1 - x2/eps)/(1 - gamma0) is affine along each interface edge
    bs = np.zeros(ns)
    for e0, e1 in gam:
        L_e = np.linalg.norm(mesh.vertices[e0] - mesh.vertices[e1])
        f0, f1 = ((1 - mesh.vertices[[e0, e1], 1] / eps) / (1 - cfg.gamma0))
        bs[p.Ws.node_to_dof[e0]] += L_e / 6 * (2 * f0 + f1)
        bs[p.Ws.node_to_dof[e1]] += L_e / 6 * (f0 + 2 * f1)
    rng = np.random.default_rng(7)
    ts, tf = rng.uniform(0, 1, ns), rng.uniform(0, 1, nf)
    tf[p.inflow_dofs] = 0.0
    rhs = np.concatenate([Ms @ ts / dt + bs, (Mf + Smf) @ tf / dt / eps])
    free = np.ones(ns + nf, dtype=bool)
    free[ns + p.inflow_dofs] = False
    x = np.zeros(ns + nf)
    x[free] = np.linalg.solve(L[free][:, free], rhs[free])

    ts_new, tf_new = heat_step(p, MicroState(ts, tf, None, None), u, dt)
    got = np.concatenate([ts_new, tf_new])
    assert np.abs(got - x).max() <= 1e-10 * np.abs(x).max()


def test_micro_stokes_step_matches_dense_saddle_solve():
    cfg = coarse_config(stokes_tol=1e-13)
    p = build_micro_problem(cfg)
    st = initial_state(p)
    xy = p.Wf.dof_coordinates()
    st = MicroState(st.theta_s, 0.3 * xy[:, 0], None, None)
    u, pr = stokes_step(p, st)
    system = assemble_stokes(p.V, p.Q, cfg.viscosity(p.Wf.evaluate(st.theta_f)))
    K = system.saddle_matrix().toarray()
    n_u = system.n_u
    free = np.ones(K.shape[0], dtype=bool)
    free[p.velocity_dofs] = False
    x = np.zeros(K.shape[0])
    x[p.velocity_dofs] = p.velocity_values
    rhs = -K @ x
    x[free] = np.linalg.solve(K[free][:, free], rhs[free])
    assert np.abs(u - x[:n_u]).max() <= 1e-10 * np.abs(x[:n_u]).max()
    assert np.abs(pr - x[n_u:-1]).max() <= 1e-10 * np.abs(x[n_u:-1]).max()


def test_macro_step_matches_dense_oracle():
    cfg = coarse_config(macro_h=0.125)
    prob = build_effective_problem(cfg)
    c, dt = prob.coeffs, cfg.dt
    W, x = prob.W, prob.x
    ns, nf = W.n_dofs, len(x)
    Ms, Ks, *_ = dense_blocks(W.mesh, np.arange(W.mesh.n_triangles), W.node_to_dof, ns)
    M1, K1, D1, S1, Sm1 = (np.zeros((nf, nf)) for _ in range(5))
    ub = prob.u_bar
    for k in range(nf - 1):
        h = x[k + 1] - x[k]
        pe = ub * h / (2 * c.kappa_tilde)
        tau = h / (2 * ub) * (1 / np.tanh(pe) - 1 / pe)
        e = [k, k + 1]
        M1[np.ix_(e, e)] += h / 6 * np.array([[2, 1], [1, 2]])
        K1[np.ix_(e, e)] += np.array([[1, -1], [-1, 1]]) / h
        D1[np.ix_(e, e)] += 0.5 * np.array([[-1, 1], [-1, 1]])
        S1[np.ix_(e, e)] += tau * ub**2 / h * np.array([[1, -1], [-1, 1]])
        Sm1[np.ix_(e, e)] += 0.5 * tau * ub * np.array([[-1, -1], [1, 1]])
    T = np.zeros((nf, ns))
    T[np.arange(nf), W.node_to_dof[prob.interface.bulk_vertex]] = 1.0
    a = cfg.alpha * c.gamma_measure
    L = np.block([[Ms / dt + cfg.kappa_s * Ks + a * T.T @ M1 @ T, -a * T.T @ M1],
                  [-a * (M1 + Sm1) @ T, c.z_volume * (M1 + Sm1) / dt + c.kappa_tilde * K1 + ub * D1 + S1
                   + a * (M1 + Sm1)]])
    rng = np.random.default_rng(3)
    ts, tf = rng.uniform(0, 1, ns), rng.uniform(0, 1, nf)
    tf[0] = 0.0
    rhs = np.concatenate([Ms @ ts / dt + T.T @ M1 @ np.full(nf, c.f_bar_s),
                          c.z_volume * (M1 + Sm1) @ tf / dt])
    free = np.ones(ns + nf, dtype=bool)
    free[ns] = False
    sol = np.zeros(ns + nf)
    sol[free] = np.linalg.solve(L[free][:, free], rhs[free])
    got_s, got_f = macro_heat_step(prob, MacroState(ts, tf), dt)
    got = np.concatenate([got_s, got_f])
    assert np.abs(got - sol).max() <= 1e-10 * np.abs(sol).max()
