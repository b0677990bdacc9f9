"""Taylor-Hood (P2/P1) Stokes saddle-point systems with a zero-mean pressure.

The discrete problem is::

    [ A   B^T  0 ] [u]   [f]
    [ B   0    m ] [p] = [0]
    [ 0   m^T  0 ] [l]   [0]

with ``A = (mu grad u, grad v)`` per component, ``B = -(q, div v)`` and
``m = (1, q)``; the last row enforces ``int p = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import AssemblyError, SolverError
from .assembly import (_edge_basis, coefficient_at_quadrature, edge_dofs, edge_quadrature, load_vector,
                       mass_matrix, stiffness_matrix)
from .solvers import solve_sparse
from .spaces import FunctionSpace, edge_index, mesh_edges


@dataclass
class StokesSystem:
    V: FunctionSpace          # P2 vector velocity
    Q: FunctionSpace          # P1 scalar pressure
    A: sp.csr_matrix
    B: sp.csr_matrix
    m: np.ndarray
    f: np.ndarray
    mu_scale: float = 1.0

    @property
    def n_u(self):
        return self.V.n_dofs

    @property
    def n_p(self):
        return self.Q.n_dofs

    def saddle_matrix(self):
        m = sp.csr_matrix(self.m.reshape(1, -1))
        Z = sp.csr_matrix((self.n_p, self.n_p))
        K = sp.bmat([[self.A, self.B.T, None], [self.B, Z, m.T], [None, m, None]], format="csr")
        K.sort_indices()
        return K


def divergence_matrix(V: FunctionSpace, Q: FunctionSpace):
    """``B[q, j] = -int psi_q div(phi_j)`` for the vector space ``V``."""
    if not V.same_elements(Q):
        raise AssemblyError("velocity and pressure spaces must share elements")
    val_q, _ = Q.tabulate()
    _, g = V.tabulate()
    _, w = V.quadrature()
    blocks = []
    for c in range(2):
        local = -np.einsum("eq,qi,eqj->eij", w, val_q, g[..., c], optimize=True)
        r, cc = np.broadcast_arrays(Q.cell_dofs[:, :, None], V.cell_dofs[:, None, :])
        blocks.append(sp.coo_matrix((local.ravel(), (r.ravel(), cc.ravel())),
                                    shape=(Q.n_scalar, V.n_scalar)).tocsr())
    B = sp.hstack(blocks, format="csr")
    B.sum_duplicates()
    B.sort_indices()
    return B


def assemble_stokes(V: FunctionSpace, Q: FunctionSpace, viscosity=1.0, body_force=None, divergence=None):
    """Assemble the Taylor-Hood blocks.

    ``viscosity`` is a constant, callable or quadrature samples ``(ne, nq)``;
    every sample must be positive.  ``body_force`` is a 2-vector or a pair
    of coefficients accepted by :func:`load_vector`.  ``divergence`` may
    pass a previously assembled ``(B, m)`` pair for the same spaces.
    """
    if V.order != 2 or V.components != 2 or Q.order != 1 or Q.components != 1:
        raise AssemblyError("Taylor-Hood needs a P2 vector velocity and a P1 scalar pressure")
    mu = coefficient_at_quadrature(V, viscosity)
    if not np.all(mu > 0) or not np.all(np.isfinite(mu)):
        raise AssemblyError("viscosity must be positive and finite at every quadrature point")
    scalar = V.scalar()
    K = stiffness_matrix(scalar, mu)
    A = sp.block_diag([K, K], format="csr")
    A.sort_indices()
    if divergence is None:
        B, m = divergence_matrix(V, Q), load_vector(Q, 1.0)
    else:
        B, m = divergence
    f = np.zeros(V.n_dofs)
    if body_force is not None:
        fx, fy = body_force
        f[:V.n_scalar] = load_vector(scalar, fx)
        f[V.n_scalar:] = load_vector(scalar, fy)
    _, w = V.quadrature()
    mu_scale = float(np.sum(w * mu) / np.sum(w))
    return StokesSystem(V=V, Q=Q, A=A, B=B, m=m, f=f, mu_scale=mu_scale)


@dataclass
class StokesSolution:
    u: np.ndarray
    p: np.ndarray
    multiplier: float
    divergence_residual: float
    residual: float = 0.0
    iterations: int = 0


def _dirichlet_split(system: StokesSystem, dirichlet_dofs, dirichlet_values):
    d = np.asarray(dirichlet_dofs, dtype=int)
    g = np.asarray(dirichlet_values, dtype=float)
    if len(np.unique(d)) != len(d):
        raise AssemblyError("duplicate Dirichlet dofs")
    if d.shape != g.shape:
        raise AssemblyError("Dirichlet dofs and values differ in length")
    free = np.ones(system.n_u, dtype=bool)
    free[d] = False
    ug = np.zeros(system.n_u)
    ug[d] = g
    return free, ug


class SaddlePointSolver:
    """Solver for Dirichlet-reduced Taylor-Hood systems with a zero-mean pressure.

    The matrix ``[[A, B^T], [B, -delta C]]`` (``C`` the pressure mass matrix)
    is quasi-definite, so it can be factorized with diagonal pivots in a
    symmetric fill-reducing order.  Those factors precondition GMRES on the
    exact system; the pressure constant is then fixed by the mean constraint
    and the multiplier is recovered from the constant test function.  With
    ``reuse=True`` the factors are kept across calls (e.g. time steps with a
    slowly changing viscosity) until GMRES needs more than ``max_iter``
    iterations.

    The residual is measured after scaling momentum rows by ``1/diag(A)``.
    The target is ``tol * ||rhs||`` plus ``rounding * eps_mach * || |K| |x| ||``,
    the rounding floor of evaluating the residual itself, which dominates
    when the viscosity varies over many orders of magnitude.  After a
    fresh factorization, a refinement that stalls within ``stall * tol`` of
    the scaled right-hand side is accepted.
    """

    def __init__(self, delta=1e-5, tol=1e-10, max_iter=30, reuse=True, rounding=10.0, stall=1e3):
        self.delta = delta
        self.stall = stall
        self.rounding = rounding
        self.tol = tol
        self.max_iter = max_iter
        self.reuse = reuse
        self._lu = None
        self._key = None
        self.n_factorizations = 0
        self.last_iterations = 0

    def _factor(self, A, B, C):
        K = sp.bmat([[A, B.T], [B, -self.delta * C]], format="csc")
        try:
            self._lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                 options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise SolverError("saddle-point factorization failed", {"shape": K.shape, "reason": str(exc)}) from exc
        self.n_factorizations += 1

    def solve(self, system: StokesSystem, dirichlet_dofs, dirichlet_values) -> StokesSolution:
        free, ug = _dirichlet_split(system, dirichlet_dofs, dirichlet_values)
        A = system.A[free][:, free]
        Bf = system.B[:, free]
        ones = np.ones(system.n_p)
        if np.linalg.norm(Bf.T @ ones) > 1e-9 * (abs(system.B).sum() / max(system.n_p, 1) + 1.0):
            # pressure is determined without the constraint: solve the bordered system directly
            return solve_stokes(system, np.flatnonzero(~free), ug[~free], method="direct")
        ru = system.f[free] - system.A[free][:, ~free] @ ug[~free]
        rp = -(system.B[:, ~free] @ ug[~free])
        area = float(system.m.sum())
        lam = float(rp.sum()) / area
        rp = rp - system.m * lam
        nf = int(np.count_nonzero(free))
        K0 = sp.bmat([[A, Bf.T], [Bf, None]], format="csr")
        # Rows of the momentum block are scaled by 1/diag(A) and pressure
        # unknowns by the local viscosity, so residuals are measured in
        # velocity units whatever the viscosity range.
        rl = np.concatenate([1.0 / A.diagonal(), np.ones(system.n_p)])
        rr = np.concatenate([np.ones(nf), _nodal_viscosity(system, A, free)])
        Ks = sp.diags(rl) @ K0 @ sp.diags(rr)
        rhs = rl * np.concatenate([ru, rp])
        key = (K0.shape, nf)
        if self._lu is None or not self.reuse or key != self._key:
            self._factor(A, Bf, _pressure_mass(system.Q) / system.mu_scale)
            self._key = key
        target = self.tol * (np.linalg.norm(rhs) + np.linalg.norm(rl[:nf] * system.f[free]) + 1e-300)
        x, its = self._iterate(Ks, rl, rr, rhs, target)
        if x is None:
            self._factor(A, Bf, _pressure_mass(system.Q) / system.mu_scale)
            x, its = self._iterate(Ks, rl, rr, rhs, target, cycles=5, stall=self.stall * target)
            if x is None:
                raise SolverError("saddle-point iteration stagnated after refactorization",
                                  {"residual": self._last_residual[0], "target": self._last_residual[1],
                                   "iterations": its, "size": K0.shape[0]})
        self.last_iterations = its
        x = rr * x
        u = ug.copy()
        u[free] = x[:nf]
        p = x[nf:]
        p = p - (system.m @ p) / area
        div = float(np.linalg.norm(system.B @ u + system.m * lam))
        res = float(np.linalg.norm(K0 @ np.concatenate([x[:nf], p]) - np.concatenate([ru, rp])))
        return StokesSolution(u=u, p=p, multiplier=lam, divergence_residual=div, residual=res, iterations=its)

    def _iterate(self, Ks, rl, rr, rhs, target, cycles=1, stall=None):
        """GMRES refinement from the factor solution.

        Runs up to ``cycles`` restarts; a run that stops improving is accepted
        when its residual is below ``stall`` (rounding floor), else rejected.
        """
        def prec(v):
            return self._lu.solve(v / rl) / rr

        x = prec(rhs)
        floor = self.rounding * np.finfo(float).eps * np.linalg.norm(abs(Ks) @ np.abs(x))
        target = target + floor
        r = rhs - Ks @ x
        rn = np.linalg.norm(r)
        # right preconditioning, so GMRES monitors the true residual
        op = spla.LinearOperator(Ks.shape, lambda v: Ks @ prec(v))
        count = [0]

        def cb(_):
            count[0] += 1

        for _ in range(cycles):
            if rn <= target:
                break
            y, _ = spla.gmres(op, r, rtol=0.0, atol=0.5 * target, restart=self.max_iter, maxiter=1,
                              callback=cb, callback_type="pr_norm")
            xn = x + prec(y)
            r_new = rhs - Ks @ xn
            rn_new = np.linalg.norm(r_new)
            if not rn_new < rn:
                break
            improved = rn_new < 0.5 * rn
            x, r, rn = xn, r_new, rn_new
            if not improved:
                break
        self._last_residual = (float(rn), float(target))
        if rn <= target or (stall is not None and rn <= stall):
            return x, count[0]
        return None, count[0]


def _nodal_viscosity(system: StokesSystem, A, free):
    """Viscosity scale per pressure node: mean diagonal of the adjacent velocity rows."""
    d = np.zeros(system.n_u)
    d[free] = A.diagonal()
    Babs = abs(system.B)
    w = np.asarray(Babs.sum(axis=1)).ravel()
    s = Babs @ d
    scale = np.where(w > 0, s / np.maximum(w, 1e-300), 1.0)
    ref = float(np.max(scale)) if np.any(scale > 0) else 1.0
    return np.where(scale > 0, scale, ref)


def _pressure_mass(Q: FunctionSpace):
    return mass_matrix(Q)


def solve_stokes(system: StokesSystem, dirichlet_dofs, dirichlet_values, method="saddle", solver=None):
    """Solve with strongly imposed velocity Dirichlet data.

    ``dirichlet_dofs`` index the vector velocity space.  ``method="saddle"``
    uses :class:`SaddlePointSolver` (or the given ``solver``); ``"direct"``
    factorizes the bordered system including the multiplier row (small
    problems only).
    """
    if solver is not None or method == "saddle":
        return (solver or SaddlePointSolver(reuse=False)).solve(system, dirichlet_dofs, dirichlet_values)
    n_u, n_p = system.n_u, system.n_p
    free_u, ug = _dirichlet_split(system, dirichlet_dofs, dirichlet_values)
    K = system.saddle_matrix()
    n = K.shape[0]
    x = np.zeros(n)
    x[:n_u] = ug
    rhs = np.concatenate([system.f, np.zeros(n_p + 1)]) - K @ x
    free = np.concatenate([free_u, np.ones(n_p + 1, dtype=bool)])
    Kff = K[free][:, free]
    x[free] = solve_sparse(Kff, rhs[free], method=method)
    u = x[:n_u]
    p = x[n_u:n_u + n_p]
    div = float(np.linalg.norm(system.B @ u + system.m * x[-1]))
    res = float(np.linalg.norm(Kff @ x[free] - rhs[free]))
    return StokesSolution(u=u, p=p, multiplier=float(x[-1]), divergence_residual=div, residual=res)


def orient_outward(space: FunctionSpace, edges):
    """Direct boundary edges so the adjacent element of ``space`` lies to the left."""
    edges = np.asarray(edges, dtype=int).reshape(-1, 2).copy()
    _, tri_edges = mesh_edges(space.mesh)
    idx = edge_index(space.mesh, edges)
    owner = -np.ones(len(mesh_edges(space.mesh)[0]), dtype=int)
    local = tri_edges[space.elements]
    owner[local.ravel()] = np.repeat(space.elements, 3)
    tri = owner[idx]
    if np.any(idx < 0) or np.any(tri < 0):
        raise AssemblyError("edge is not on an element of the space")
    p = space.mesh.vertices
    third = space.mesh.triangles[tri].sum(axis=1) - edges[:, 0] - edges[:, 1]
    a, b, c = p[edges[:, 0]], p[edges[:, 1]], p[third]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    flip = cross < 0
    edges[flip] = edges[flip][:, ::-1]
    return edges


def boundary_flux(V: FunctionSpace, u, edges, n=4):
    """Outward flux ``int u . n`` of a vector field over boundary edges."""
    edges = np.asarray(edges, dtype=int)
    if len(edges) == 0:
        return 0.0
    edges = orient_outward(V, edges)
    _, w, normal, t = edge_quadrature(V.mesh, edges, n=n)
    b = _edge_basis(V.order, t)
    dofs = edge_dofs(V, edges)
    ux = np.einsum("qi,ei->eq", b, u[dofs])
    uy = np.einsum("qi,ei->eq", b, u[dofs + V.n_scalar])
    un = ux * normal[:, 0:1] + uy * normal[:, 1:2]
    return float(np.sum(w * un))
