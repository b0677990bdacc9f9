"""Vectorised assembly of bilinear and linear forms.

Coefficients may be given as a constant, a callable ``f(x, y)`` or an array of
values at the quadrature points of the space's elements (``(ne, nq)``).
Every matrix comes back as a scipy CSR matrix with sorted, duplicate-free
column indices.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import AssemblyError
from .quadrature import line_rule
from .spaces import FunctionSpace, edge_index


def _csr(rows, cols, vals, shape):
    m = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return m


def _scatter(test: FunctionSpace, trial: FunctionSpace, local):
    """Global matrix from local blocks ``local[e, i, j]`` (test i, trial j)."""
    r = test.cell_dofs[:, :, None]
    c = trial.cell_dofs[:, None, :]
    r, c = np.broadcast_arrays(r, c)
    return _csr(r, c, local, (test.n_scalar, trial.n_scalar))


def coefficient_at_quadrature(space: FunctionSpace, coef):
    x, _ = space.quadrature()
    if coef is None:
        return np.ones(x.shape[:2])
    if callable(coef):
        return np.broadcast_to(np.asarray(coef(x[..., 0], x[..., 1]), dtype=float), x.shape[:2])
    coef = np.asarray(coef, dtype=float)
    if coef.ndim == 0:
        return np.full(x.shape[:2], float(coef))
    if coef.shape != x.shape[:2]:
        raise AssemblyError(f"coefficient shape {coef.shape} does not match quadrature {x.shape[:2]}")
    return coef


def _velocity_at_quadrature(space, velocity):
    x, _ = space.quadrature()
    v = np.asarray(velocity, dtype=float)
    if v.shape == (2,):
        return np.broadcast_to(v, x.shape).copy()
    if v.shape != x.shape:
        raise AssemblyError("velocity must be sampled at the quadrature points of the same elements")
    return v


def mass_matrix(space: FunctionSpace, coef=None):
    val, _ = space.tabulate()
    _, w = space.quadrature()
    c = coefficient_at_quadrature(space, coef) * w
    local = np.einsum("eq,qi,qj->eij", c, val, val, optimize=True)
    return _scatter(space, space, local)


def stiffness_matrix(space: FunctionSpace, coef=None):
    _, g = space.tabulate()
    _, w = space.quadrature()
    c = coefficient_at_quadrature(space, coef) * w
    local = np.einsum("eq,eqid,eqjd->eij", c, g, g, optimize=True)
    return _scatter(space, space, local)


def advection_matrix(space: FunctionSpace, velocity):
    """``A[i, j] = int (v . grad phi_j) phi_i``."""
    val, g = space.tabulate()
    _, w = space.quadrature()
    v = _velocity_at_quadrature(space, velocity)
    vg = np.einsum("eqd,eqjd->eqj", v, g)
    local = np.einsum("eq,qi,eqj->eij", w, val, vg, optimize=True)
    return _scatter(space, space, local)


def supg_tau(space: FunctionSpace, velocity, kappa):
    """Element parameter ``h/(2|v|) (coth Pe - 1/Pe)`` with ``Pe = |v| h / (2 kappa)``."""
    v = _velocity_at_quadrature(space, velocity)
    speed = np.mean(np.linalg.norm(v, axis=-1), axis=1)
    h = space.diameter
    pe = speed * h / (2.0 * kappa)
    xi = np.empty_like(pe)
    small = pe < 1e-3
    xi[small] = pe[small] / 3.0 - pe[small] ** 3 / 45.0
    big = ~small
    xi[big] = 1.0 / np.tanh(pe[big]) - 1.0 / pe[big]
    tau = np.zeros_like(pe)
    moving = speed > 0
    tau[moving] = h[moving] / (2.0 * speed[moving]) * xi[moving]
    return tau


def supg_matrices(space: FunctionSpace, velocity, tau):
    """Streamline terms: ``S = sum tau (v.grad phi_j, v.grad phi_i)`` and
    ``S_m = sum tau (phi_j, v.grad phi_i)`` (the time-derivative part)."""
    val, g = space.tabulate()
    _, w = space.quadrature()
    v = _velocity_at_quadrature(space, velocity)
    vg = np.einsum("eqd,eqjd->eqj", v, g)
    tw = tau[:, None] * w
    S = np.einsum("eq,eqi,eqj->eij", tw, vg, vg, optimize=True)
    Sm = np.einsum("eq,eqi,qj->eij", tw, vg, val, optimize=True)
    return _scatter(space, space, S), _scatter(space, space, Sm)


def load_vector(space: FunctionSpace, f):
    val, _ = space.tabulate()
    _, w = space.quadrature()
    c = coefficient_at_quadrature(space, f) * w
    local = np.einsum("eq,qi->ei", c, val)
    return np.bincount(space.cell_dofs.ravel(), local.ravel(), minlength=space.n_scalar)


def supg_load(space: FunctionSpace, velocity, tau, f):
    _, g = space.tabulate()
    _, w = space.quadrature()
    v = _velocity_at_quadrature(space, velocity)
    vg = np.einsum("eqd,eqjd->eqj", v, g)
    c = coefficient_at_quadrature(space, f) * w * tau[:, None]
    local = np.einsum("eq,eqi->ei", c, vg)
    return np.bincount(space.cell_dofs.ravel(), local.ravel(), minlength=space.n_scalar)


# ---------------------------------------------------------------------------
# edge (boundary / interface) integrals

def _edge_basis(order, t):
    if order == 1:
        return np.column_stack([1 - t, t])
    return np.column_stack([(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)])


def edge_dofs(space: FunctionSpace, edges):
    """(n_edges, nloc) dofs of the edge nodes; raises if a node is missing."""
    edges = np.asarray(edges, dtype=int)
    cols = [space.node_to_dof[edges[:, 0]], space.node_to_dof[edges[:, 1]]]
    if space.order == 2:
        idx = edge_index(space.mesh, edges)
        if np.any(idx < 0):
            raise AssemblyError("edge not present in mesh")
        cols.append(space.node_to_dof[space.mesh.n_vertices + idx])
    d = np.column_stack(cols)
    if np.any(d < 0):
        raise AssemblyError("edge nodes are not part of the space (mismatched interface discretization)")
    return d


def edge_quadrature(mesh, edges, n=3):
    """Points (ne, nq, 2), weights (ne, nq) and unit normals (ne, 2).

    The normal is the edge direction rotated clockwise, i.e. it points to the
    right of the directed edge ``a -> b``.
    """
    t, w = line_rule(n)
    a = mesh.vertices[edges[:, 0]]
    b = mesh.vertices[edges[:, 1]]
    d = b - a
    length = np.linalg.norm(d, axis=1)
    x = a[:, None, :] + t[None, :, None] * d[:, None, :]
    normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    return x, length[:, None] * w[None, :], normal, t


def edge_mass_matrix(test: FunctionSpace, trial: FunctionSpace, edges, coef=1.0):
    edges = np.asarray(edges, dtype=int)
    if test.mesh is not trial.mesh:
        raise AssemblyError("edge mass between spaces on different meshes")
    x, w, _, t = edge_quadrature(test.mesh, edges, n=3)
    c = coef(x[..., 0], x[..., 1]) if callable(coef) else coef
    cw = np.broadcast_to(c, w.shape) * w
    bi = _edge_basis(test.order, t)
    bj = _edge_basis(trial.order, t)
    local = np.einsum("eq,qi,qj->eij", cw, bi, bj, optimize=True)
    di, dj = edge_dofs(test, edges), edge_dofs(trial, edges)
    r, c2 = np.broadcast_arrays(di[:, :, None], dj[:, None, :])
    return _csr(r, c2, local, (test.n_scalar, trial.n_scalar))


def edge_load_vector(space: FunctionSpace, edges, f, n=4):
    """``int_edges f phi_i`` with ``f(x, y)`` callable or constant."""
    edges = np.asarray(edges, dtype=int)
    x, w, _, t = edge_quadrature(space.mesh, edges, n=n)
    c = f(x[..., 0], x[..., 1]) if callable(f) else f
    cw = np.broadcast_to(np.asarray(c, dtype=float), w.shape) * w
    local = np.einsum("eq,qi->ei", cw, _edge_basis(space.order, t))
    d = edge_dofs(space, edges)
    return np.bincount(d.ravel(), local.ravel(), minlength=space.n_scalar)


def robin_coupling(fluid: FunctionSpace, solid: FunctionSpace, edges, alpha):
    """Blocks of ``alpha (theta_f - theta_s, phi_f - phi_s)_Gamma``.

    Returns ``{"ss", "sf", "fs", "ff"}``; ordered as ``[solid, fluid]`` the
    assembled matrix is ``alpha [[M_s, -C], [-C^T, M_f]]``.
    """
    Ms = edge_mass_matrix(solid, solid, edges)
    Mf = edge_mass_matrix(fluid, fluid, edges)
    C = edge_mass_matrix(solid, fluid, edges)
    return {"ss": alpha * Ms, "sf": -alpha * C, "fs": (-alpha * C).T.tocsr(), "ff": alpha * Mf}


def assemble_operator(space: FunctionSpace, kind: str, coefficient=None, velocity=None, tau=None,
                      velocity_space: FunctionSpace | None = None):
    """Dispatch on ``kind``: mass, stiffness, advection, supg, supg_mass.

    ``velocity`` is either a constant 2-vector, quadrature samples, or the
    coefficient vector of a field on ``velocity_space`` (which must cover the
    same elements of the same mesh).
    """
    if velocity is not None and velocity_space is not None:
        if not velocity_space.same_elements(space):
            raise AssemblyError("velocity field lives on a different mesh or element set")
        velocity = velocity_space.evaluate(velocity)
    kind = kind.lower()
    if kind == "mass":
        return mass_matrix(space, coefficient)
    if kind == "stiffness":
        return stiffness_matrix(space, coefficient)
    if kind in ("advection", "supg", "supg_mass") and velocity is None:
        raise AssemblyError(f"{kind} operator needs a velocity")
    if kind == "advection":
        return advection_matrix(space, velocity)
    if kind in ("supg", "supg_mass"):
        if tau is None:
            tau = supg_tau(space, velocity, 1.0 if coefficient is None else coefficient)
        S, Sm = supg_matrices(space, velocity, tau)
        return S if kind == "supg" else Sm
    raise AssemblyError(f"unknown operator kind {kind!r}")
