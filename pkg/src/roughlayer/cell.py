"""Periodic cell problems on ``Z`` and the effective coefficients they define.

Three problems are solved on a laterally periodic mesh of the fluid cell:

* conduction: ``-lap w = 0`` in ``Z`` with ``(grad w + e1) . n = 0`` on the
  bottom and the roughness graph; ``kappa_tilde = kappa_f int_Z (1 + d1 w)``;
* permeability: Stokes flow driven by the unit body force ``e1`` with no-slip
  on bottom and graph; ``K = int_Z xi . e1``;
* motion: Stokes flow with the bottom moving at ``u_motion`` and a no-slip
  graph; ``xi0_bar = int_Z xi0 . e1``.

The cell pressures are reported in the sign convention of the cell system
``-lap xi - grad eta = f``, i.e. ``eta = -P`` where ``P`` is the standard
Stokes pressure returned by the saddle solve.
"""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, GeometryError
from .fem import (FunctionSpace, SaddlePointSolver, assemble_stokes, load_vector, solve_sparse, solve_stokes,
                  stiffness_matrix)
from .geometry import CellGeometry, RoughnessProfile, build_cell_geometry
from .mesh import Mesh, Tag, triangulate_cell


@dataclass
class CellSolutions:
    mesh: Mesh
    omega_space: FunctionSpace
    velocity_space: FunctionSpace
    pressure_space: FunctionSpace
    omega: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    xi0: np.ndarray
    eta0: np.ndarray
    u_motion: tuple = (1.0, 0.0)


@dataclass
class EffectiveCoefficients:
    """Coefficients of the homogenized model (2D: scalars)."""

    kappa_tilde: float
    K: float
    xi0_bar: float
    z_volume: float
    gamma_measure: float
    f_bar_s: float = 0.0
    f_bar_f: float = 0.0
    kappa_f: float = 0.1
    cell_h: float | None = None
    vertical_xi: float = 0.0
    vertical_xi0: float = 0.0
    profile: str = ""
    extras: dict = field(default_factory=dict)

    def as_record(self):
        d = dataclasses.asdict(self)
        d.pop("extras")
        d["kappa_ratio"] = self.kappa_tilde / self.kappa_f
        d.update(self.extras)
        return d


def _cell_spaces(mesh: Mesh, omega_order=1):
    W = FunctionSpace(mesh, omega_order, periodic=True)
    V = FunctionSpace(mesh, 2, periodic=True, components=2)
    Q = FunctionSpace(mesh, 1, periodic=True)
    return W, V, Q


def solve_conduction_cell(mesh: Mesh, kappa_f: float, space: FunctionSpace | None = None):
    """Returns ``(omega, kappa_tilde, space)`` with the zero-mean gauge."""
    W = space if space is not None else FunctionSpace(mesh, 1, periodic=True)
    K = stiffness_matrix(W)
    # weak form: (grad w, grad phi) = -(e1, grad phi)
    _, g = W.tabulate()
    _, wq = W.quadrature()
    local = -np.einsum("eq,eqi->ei", wq, g[..., 0])
    b = np.bincount(W.cell_dofs.ravel(), local.ravel(), minlength=W.n_scalar)
    m = load_vector(W, 1.0)
    A = sp.bmat([[K, sp.csr_matrix(m.reshape(-1, 1))], [sp.csr_matrix(m.reshape(1, -1)), None]], format="csr")
    x = solve_sparse(A, np.concatenate([b, [0.0]]))
    omega = x[:-1]
    d1 = W.gradient(omega)[..., 0]
    area = float(np.sum(wq))
    kappa_tilde = kappa_f * (area + float(np.sum(wq * d1)))
    return omega, kappa_tilde, W


def _no_slip_dofs(V: FunctionSpace):
    bottom = V.boundary_dofs(Tag.CELL_BOTTOM)
    graph = np.setdiff1d(V.boundary_dofs(Tag.ROUGH_INTERFACE), bottom)
    return bottom, graph


def _stokes_cell(V, Q, force, bottom_value, solver):
    system = assemble_stokes(V, Q, 1.0, body_force=force)
    bottom, graph = _no_slip_dofs(V)
    n = V.n_scalar
    dofs = np.concatenate([bottom, graph, bottom + n, graph + n])
    vals = np.concatenate([np.full(len(bottom), bottom_value[0]), np.zeros(len(graph)),
                           np.full(len(bottom), bottom_value[1]), np.zeros(len(graph))])
    sol = solve_stokes(system, dofs, vals, solver=solver)
    return sol.u, -sol.p


def _component_integrals(V: FunctionSpace, u):
    _, w = V.quadrature()
    uq = V.evaluate(u)
    return float(np.sum(w * uq[..., 0])), float(np.sum(w * uq[..., 1]))


def solve_permeability_cell(mesh: Mesh, spaces=None, solver=None):
    """Returns ``(xi, eta, K, vertical)``; ``vertical = int_Z xi . e2``."""
    if spaces is None:
        spaces = _cell_spaces(mesh)[1:]
    V, Q = spaces
    xi, eta = _stokes_cell(V, Q, (1.0, 0.0), (0.0, 0.0), solver)
    k, vert = _component_integrals(V, xi)
    return xi, eta, k, vert


def solve_motion_cell(mesh: Mesh, u_motion=(1.0, 0.0), spaces=None, solver=None):
    """Returns ``(xi0, eta0, xi0_bar, vertical)``."""
    u_motion = tuple(float(c) for c in u_motion)
    if u_motion[1] != 0.0:
        raise ConfigError("inflow assumption: u_motion must be horizontal (zero vertical component)")
    if spaces is None:
        spaces = _cell_spaces(mesh)[1:]
    V, Q = spaces
    xi0, eta0 = _stokes_cell(V, Q, None, u_motion, solver)
    bar, vert = _component_integrals(V, xi0)
    return xi0, eta0, bar, vert


def effective_interface_source(geom: CellGeometry, f, x1=None):
    """``int_Gamma f(y) dsigma`` by arclength quadrature over the graph.

    ``f`` is a constant or ``f(y1, y2)``; with ``x1`` given it is called as
    ``f(x1, y1, y2)`` and an array over ``x1`` is returned.
    """
    if not callable(f):
        return float(f) * geom.interface_length
    y1, y2 = geom.gamma_points[:, 0], geom.gamma_points[:, 1]
    w = geom.gamma_weights
    if x1 is None:
        return float(np.sum(w * np.broadcast_to(np.asarray(f(y1, y2), dtype=float), y1.shape)))
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    vals = np.asarray(f(x1[:, None], y1[None, :], y2[None, :]), dtype=float)
    return np.sum(np.broadcast_to(vals, (len(x1), len(y1))) * w, axis=1)


def default_solid_source(gamma0):
    """Heat production concentrated at the roughness tips: ``(1 - y2)/(1 - gamma0)``."""
    if gamma0 >= 1.0:
        raise GeometryError("the default source needs gamma0 < 1")
    return lambda y1, y2: (1.0 - y2) / (1.0 - gamma0)


def compute_effective_coefficients(profile: RoughnessProfile, h=0.01, kappa_f=0.1, u_motion=(1.0, 0.0),
                                   source_s=None, source_f=0.0, quadrature_n=64, mesh=None,
                                   return_solutions=False):
    """Run the three cell problems and assemble :class:`EffectiveCoefficients`.

    ``source_s``/``source_f`` are constants or callables of ``(y1, y2)``;
    ``source_s=None`` selects :func:`default_solid_source`.
    """
    if profile.gamma0 >= 1.0:
        raise GeometryError("cell problems require gamma0 < 1")
    t0 = time.perf_counter()
    geom = build_cell_geometry(profile, quadrature_n)
    if mesh is None:
        mesh = triangulate_cell(geom, h)
    W, V, Q = _cell_spaces(mesh)
    omega, kt, _ = solve_conduction_cell(mesh, kappa_f, W)
    solver = SaddlePointSolver()
    xi, eta, k, vert = solve_permeability_cell(mesh, (V, Q), solver)
    xi0, eta0, bar, vert0 = solve_motion_cell(mesh, u_motion, (V, Q), solver)
    if source_s is None:
        source_s = default_solid_source(profile.gamma0)
    coeffs = EffectiveCoefficients(
        kappa_tilde=kt, K=k, xi0_bar=bar,
        z_volume=float(np.sum(V.area)), gamma_measure=geom.interface_length,
        f_bar_s=effective_interface_source(geom, source_s),
        f_bar_f=effective_interface_source(geom, source_f),
        kappa_f=kappa_f, cell_h=mesh.meta.get("h", h),
        vertical_xi=vert, vertical_xi0=vert0, profile=profile.label,
        extras={"seconds": time.perf_counter() - t0, "n_vertices": mesh.n_vertices},
    )
    if not return_solutions:
        return coeffs
    sols = CellSolutions(mesh=mesh, omega_space=W, velocity_space=V, pressure_space=Q, omega=omega,
                         xi=xi, eta=eta, xi0=xi0, eta0=eta0, u_motion=tuple(u_motion))
    return coeffs, sols


def flat_channel_coefficients(gamma0, kappa_f=0.1, u_motion=1.0):
    """Closed forms for the flat cell: ``(kappa_f gamma0, gamma0^3/12, u gamma0/2)``."""
    return kappa_f * gamma0, gamma0**3 / 12.0, u_motion * gamma0 / 2.0


__all__ = [
    "CellSolutions", "EffectiveCoefficients", "solve_conduction_cell", "solve_permeability_cell",
    "solve_motion_cell", "effective_interface_source", "compute_effective_coefficients",
    "default_solid_source", "flat_channel_coefficients",
]
