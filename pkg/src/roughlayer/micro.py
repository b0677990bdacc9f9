"""Resolved model in the rough layer: quasi-stationary Stokes plus two-domain heat.

Per time level the Stokes system is solved with the viscosity of the previous
fluid temperature, then one implicit Euler step of the coupled heat problem
is taken with the new velocity.  Fluid temperature terms carry the ``1/eps``
weights of the layer scaling; the two temperatures are separate P1 fields
that meet on the rough interface through the Robin exchange term.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .config import Expression, ScenarioConfig
from .errors import ConfigError, SolverError, StepError
from .fem import FunctionSpace, SaddlePointSolver, assemble_stokes, solve_stokes
from .fem.solvers import ReusedLUSolver
from .fem.assembly import (advection_matrix, edge_load_vector, load_vector, mass_matrix, robin_coupling,
                           stiffness_matrix, supg_matrices, supg_tau)
from .fem.stokes import divergence_matrix
from .geometry import build_layer_domain
from .mesh import Mesh, PointLocator, Sub, Tag, triangulate_micro
from .trajectory import SolutionTrajectory


def inflow_profile(family, x2_scaled, gamma0, u_motion=(1.0, 0.0)):
    """Lateral velocity data as a function of ``x2/eps``; returns shape (..., 2)."""
    y = np.asarray(x2_scaled, dtype=float)
    if np.any(y < -1e-12) or np.any(y > 1 + 1e-12):
        raise ConfigError("x2/eps must lie in [0, 1]")
    family = str(family).lower()
    if family == "lin":
        s = np.where(y <= gamma0, 1.0 - y / gamma0, 0.0)
    elif family == "quad":
        s = np.where(y <= gamma0, 1.0 - (y / gamma0) ** 2, 0.0)
    elif family == "lin2":
        s = 1.0 - y
    else:
        raise ConfigError(f"unknown inflow family {family!r}")
    u = np.asarray(u_motion, dtype=float)
    return s[..., None] * u


def source_function(expr: Expression, eps, gamma0, gamma_len):
    """``f(x, y)`` on the physical domain from a config expression."""
    def f(x, y):
        return np.asarray(expr(x1=x, x2=y, eps=eps, gamma0=gamma0, gamma_len=gamma_len,
                               y1=np.mod(x / eps, 1.0), y2=y / eps), dtype=float) * np.ones_like(x)
    return f


@dataclass
class MicroState:
    theta_s: np.ndarray
    theta_f: np.ndarray
    u: np.ndarray | None
    p: np.ndarray | None
    t: float = 0.0


@dataclass
class MicroProblem:
    cfg: ScenarioConfig
    mesh: Mesh
    Ws: FunctionSpace
    Wf: FunctionSpace
    V: FunctionSpace
    Q: FunctionSpace
    interface_edges: np.ndarray
    inflow_dofs: np.ndarray
    velocity_dofs: np.ndarray
    velocity_values: np.ndarray
    gamma_len: float = 1.0
    matrices: dict = field(repr=False, default_factory=dict)
    line_points: np.ndarray | None = None
    line_locations: dict = field(repr=False, default_factory=dict)
    stokes_solver: SaddlePointSolver | None = None
    heat_solver: ReusedLUSolver | None = None

    @property
    def epsilon(self):
        return self.cfg.epsilon

    @property
    def n_s(self):
        return self.Ws.n_dofs


def _local(space: FunctionSpace, global_tri):
    loc = np.searchsorted(space.elements, global_tri)
    return loc


def build_micro_problem(cfg: ScenarioConfig, mesh: Mesh | None = None) -> MicroProblem:
    eps = cfg.epsilon
    domain = build_layer_domain(cfg.roughness, eps)
    if mesh is None:
        mesh = triangulate_micro(domain, cfg.h_bulk, cfg.layer_h, cfg.grading)
    fluid = np.flatnonzero(mesh.subdomain == Sub.FLUID)
    solid = np.flatnonzero(mesh.subdomain == Sub.SOLID)
    Ws = FunctionSpace(mesh, 1, elements=solid)
    Wf = FunctionSpace(mesh, 1, elements=fluid)
    V = FunctionSpace(mesh, 2, elements=fluid, components=2)
    Q = FunctionSpace(mesh, 1, elements=fluid)
    gamma_edges = mesh.edges_with(Tag.ROUGH_INTERFACE)
    inflow = np.array([], dtype=int) if cfg.inflow_closed else Wf.boundary_dofs(Tag.INFLOW)

    # velocity Dirichlet data: lateral profiles, moving bottom, no-slip interface (applied last)
    xy = V.dof_coordinates()
    n = V.n_scalar
    vals = np.zeros((n, 2))
    mask = np.zeros(n, dtype=bool)
    lat = V.boundary_dofs(Tag.INFLOW, Tag.OUTFLOW)
    vals[lat] = inflow_profile(cfg.inflow, np.clip(xy[lat, 1] / eps, 0.0, 1.0), cfg.gamma0, cfg.u_motion)
    mask[lat] = True
    bot = V.boundary_dofs(Tag.BOTTOM)
    vals[bot] = np.asarray(cfg.u_motion, dtype=float)
    mask[bot] = True
    wall = V.boundary_dofs(Tag.ROUGH_INTERFACE)
    vals[wall] = 0.0
    mask[wall] = True
    d = np.flatnonzero(mask)
    vdofs = np.concatenate([d, d + n])
    vvals = np.concatenate([vals[d, 0], vals[d, 1]])

    gamma_len = domain.cell.interface_length
    fs_expr, ff_expr = cfg.source_expressions()
    mats = {
        "Ms": mass_matrix(Ws), "Ks": stiffness_matrix(Ws),
        "Mf": mass_matrix(Wf), "Kf": stiffness_matrix(Wf),
        "robin": robin_coupling(Wf, Ws, gamma_edges, cfg.alpha),
        "bs": edge_load_vector(Ws, gamma_edges, source_function(fs_expr, eps, cfg.gamma0, gamma_len)),
        "bf": edge_load_vector(Wf, gamma_edges, source_function(ff_expr, eps, cfg.gamma0, gamma_len)),
        "divergence": (divergence_matrix(V, Q), load_vector(Q, 1.0)),
    }
    prob = MicroProblem(cfg=cfg, mesh=mesh, Ws=Ws, Wf=Wf, V=V, Q=Q, interface_edges=gamma_edges,
                        inflow_dofs=inflow, velocity_dofs=vdofs, velocity_values=vvals, gamma_len=gamma_len,
                        matrices=mats,
                        stokes_solver=SaddlePointSolver(tol=cfg.stokes_tol, reuse=cfg.stokes_reuse),
                        heat_solver=ReusedLUSolver(tol=cfg.solver_tol))
    _setup_line(prob)
    return prob


def _setup_line(prob: MicroProblem):
    cfg = prob.cfg
    x1 = np.linspace(0.0, 1.0, cfg.line_samples)
    x1 = np.clip(x1, 1e-9, 1.0 - 1e-9)
    pts = np.column_stack([x1, np.full_like(x1, 0.5 * cfg.epsilon)])
    tri, bary = PointLocator(prob.mesh, prob.Wf.elements).locate(pts)
    inside = tri >= 0        # for gamma0 < 1/2 the line crosses the solid teeth
    prob.line_points = pts[inside]
    prob.line_locations = {"elements": _local(prob.Wf, tri[inside]), "bary": bary[inside]}


def initial_state(prob: MicroProblem) -> MicroState:
    cfg = prob.cfg
    eps = cfg.epsilon
    gl = prob.gamma_len
    ts = source_function(Expression(cfg.theta0_s), eps, cfg.gamma0, gl)
    tf = source_function(Expression(cfg.theta0_f), eps, cfg.gamma0, gl)
    theta_s = prob.Ws.interpolate(ts)
    theta_f = prob.Wf.interpolate(tf)
    theta_f[prob.inflow_dofs] = 0.0
    return MicroState(theta_s=theta_s, theta_f=theta_f, u=None, p=None, t=0.0)


def viscosity_samples(prob: MicroProblem, theta_f):
    """``mu(theta_f)`` at the quadrature points of the fluid elements."""
    return prob.cfg.viscosity(prob.Wf.evaluate(theta_f))


def stokes_step(prob: MicroProblem, state: MicroState):
    """Velocity and pressure for the viscosity of ``state.theta_f``."""
    cfg = prob.cfg
    if (state.u is not None and cfg.skip_stokes_if_unchanged and cfg.viscosity.is_constant):
        return state.u, state.p
    mu = viscosity_samples(prob, state.theta_f)
    system = assemble_stokes(prob.V, prob.Q, mu, divergence=prob.matrices["divergence"])
    sol = solve_stokes(system, prob.velocity_dofs, prob.velocity_values, solver=prob.stokes_solver)
    return sol.u, sol.p


def heat_operator(prob: MicroProblem, u, dt):
    """System matrix of one implicit Euler step, unknowns ``[theta_s, theta_f]``.

    Returns the matrix and the matrices multiplying the old temperatures.
    """
    cfg = prob.cfg
    eps = cfg.epsilon
    m = prob.matrices
    r = m["robin"]
    uq = prob.V.evaluate(u) if u is not None else np.zeros(prob.Wf.quadrature()[0].shape)
    adv = advection_matrix(prob.Wf, uq)
    fluid = m["Mf"] / dt + cfg.kappa_f * m["Kf"] + adv
    old_f = m["Mf"] / dt
    if cfg.supg:
        tau = supg_tau(prob.Wf, uq, cfg.kappa_f)
        S, Sm = supg_matrices(prob.Wf, uq, tau)
        fluid = fluid + S + Sm / dt
        old_f = old_f + Sm / dt
    solid = m["Ms"] / dt + cfg.kappa_s * m["Ks"]
    L = sp.bmat([[solid + r["ss"], r["sf"]], [r["fs"], fluid / eps + r["ff"]]], format="csr")
    return L, m["Ms"] / dt, old_f / eps


def heat_step(prob: MicroProblem, state: MicroState, u_new, dt):
    """One implicit Euler step; returns ``(theta_s, theta_f)``."""
    L, old_s, old_f = heat_operator(prob, u_new, dt)
    rhs = np.concatenate([old_s @ state.theta_s + prob.matrices["bs"],
                          old_f @ state.theta_f + prob.matrices["bf"]])
    ns = prob.n_s
    free = np.ones(L.shape[0], dtype=bool)
    free[ns + prob.inflow_dofs] = False           # theta_f = 0 on the inflow boundary
    x = np.zeros(L.shape[0])
    x[free] = prob.heat_solver.solve(L[free][:, free], rhs[free])
    return x[:ns], x[ns:]


def sample_line(prob: MicroProblem, state: MicroState):
    loc = prob.line_locations
    e, b = loc["elements"], loc["bary"]
    eps = prob.cfg.epsilon
    out = {
        "x1": prob.line_points[:, 0],
        "theta_f": prob.Wf.evaluate_at(state.theta_f, e, b),
        "pressure_eps2": (eps**2 * prob.Q.evaluate_at(state.p, e, b)) if state.p is not None
        else np.full(len(e), np.nan),
        "u1": prob.V.evaluate_at(state.u, e, b)[:, 0] if state.u is not None else np.full(len(e), np.nan),
    }
    return out


def run_micro(cfg: ScenarioConfig, problem: MicroProblem | None = None, record_all=False,
              observer=None) -> SolutionTrajectory:
    """Time loop; fields are kept at output times (or every step with ``record_all``).

    ``observer(n, state, problem)`` is called after every time level,
    including the initial one, which lets callers reduce fields on the fly.
    """
    t0 = time.perf_counter()
    prob = problem if problem is not None else build_micro_problem(cfg)
    state = initial_state(prob)
    traj = SolutionTrajectory(kind="micro", spaces={"theta_s": prob.Ws, "theta_f": prob.Wf, "u": prob.V,
                                                     "p": prob.Q},
                              meta={"epsilon": cfg.epsilon, "dt": cfg.dt, "T_end": cfg.T_end,
                                    "n_vertices": prob.mesh.n_vertices, "config": cfg.to_dict()})
    outputs = np.asarray(cfg.outputs, dtype=float)
    steps_out = set(int(round(t / cfg.dt)) for t in outputs)
    if 0 in steps_out or record_all:
        traj.record(0.0, _fields(state), sample_line(prob, state) if 0 in steps_out else None)
    if observer is not None:
        observer(0, state, prob)
    for n in range(1, cfg.n_steps + 1):
        try:
            u, p = stokes_step(prob, state)
            ts, tf = heat_step(prob, MicroState(state.theta_s, state.theta_f, u, p, state.t), u, cfg.dt)
        except (SolverError, ValueError) as exc:
            diag = getattr(exc, "diagnostics", {})
            raise StepError(f"micro step {n} (t={n * cfg.dt:g}) failed: {exc}", traj, diag) from exc
        state = MicroState(ts, tf, u, p, n * cfg.dt)
        if observer is not None:
            observer(n, state, prob)
        if record_all or n in steps_out:
            traj.record(state.t, _fields(state), sample_line(prob, state) if n in steps_out else None)
    traj.meta["seconds"] = time.perf_counter() - t0
    traj.meta["stokes_factorizations"] = prob.stokes_solver.n_factorizations
    traj.problem = prob
    return traj


def _fields(state: MicroState):
    return {"theta_s": state.theta_s.copy(), "theta_f": state.theta_f.copy(),
            "u": None if state.u is None else state.u.copy(), "p": None if state.p is None else state.p.copy()}


__all__ = ["inflow_profile", "MicroState", "MicroProblem", "build_micro_problem", "initial_state",
           "stokes_step", "heat_step", "heat_operator", "run_micro", "sample_line", "viscosity_samples"]
