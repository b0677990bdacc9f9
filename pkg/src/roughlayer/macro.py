"""Homogenized model: bulk heat on the unit square coupled to a 1D layer.

Unknowns are the solid temperature on ``Omega = (0,1)^2`` (P1) and the fluid
temperature and pressure on the interface ``Sigma = (0,1) x {0}`` (P1 on the
bottom row of bulk vertices).  The layer flux is constant along ``Sigma``
because its divergence vanishes, so it equals the effective inflow; Darcy's
law then gives the pressure gradient pointwise.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .cell import EffectiveCoefficients, compute_effective_coefficients, effective_interface_source
from .config import Expression, ScenarioConfig
from .errors import ConfigError, SolverError, StepError
from .fem import FunctionSpace, mass_matrix, stiffness_matrix
from .fem.solvers import factorize
from .geometry import build_cell_geometry
from .mesh import InterfaceMesh1D, triangulate_macro
from .trajectory import SolutionTrajectory

_GAUSS2 = (np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]), np.array([0.5, 0.5]))


def effective_inflow(family, gamma0, u_motion=(1.0, 0.0)):
    """Height average of the lateral inflow profile (first component)."""
    family = str(family).lower()
    u1 = float(np.asarray(u_motion, dtype=float)[0])
    if family == "lin":
        return 0.5 * gamma0 * u1
    if family == "quad":
        return 2.0 * gamma0 / 3.0 * u1
    if family == "lin2":
        return 0.5 * u1
    raise ConfigError(f"unknown inflow family {family!r}")


@dataclass
class InterfaceSpace:
    """P1 nodes on ``Sigma`` in the form the trajectory writers expect."""

    x: np.ndarray
    components: int = 1

    @property
    def n_dofs(self):
        return len(self.x)

    def dof_coordinates(self):
        return np.column_stack([self.x, np.zeros_like(self.x)])


def interface_matrices(x):
    """1D P1 mass, stiffness and the ``(phi_j', phi_i)`` derivative matrix."""
    h = np.diff(x)
    n = len(x)
    i = np.arange(n - 1)
    rows = np.concatenate([i, i, i + 1, i + 1])
    cols = np.concatenate([i, i + 1, i, i + 1])
    M = sp.csr_matrix((np.concatenate([h / 3, h / 6, h / 6, h / 3]), (rows, cols)), shape=(n, n))
    K = sp.csr_matrix((np.concatenate([1 / h, -1 / h, -1 / h, 1 / h]), (rows, cols)), shape=(n, n))
    # int phi_j' phi_i over a segment: phi_j' = -+1/h, int phi_i = h/2
    D = sp.csr_matrix((np.concatenate([-0.5 * np.ones(n - 1), 0.5 * np.ones(n - 1),
                                       -0.5 * np.ones(n - 1), 0.5 * np.ones(n - 1)]), (rows, cols)), shape=(n, n))
    return M, K, D


def interface_supg(x, u_bar, kappa):
    """SUPG blocks on ``Sigma`` for the constant velocity ``u_bar``.

    Returns ``(S, Sm)`` with ``S = tau u^2 (phi_j', phi_i')`` and
    ``Sm = tau u (phi_j, phi_i')``, plus the per-segment ``tau``.
    """
    h = np.diff(x)
    n = len(x)
    speed = abs(u_bar)
    if speed == 0.0:
        z = sp.csr_matrix((n, n))
        return z, z, np.zeros(n - 1)
    pe = speed * h / (2.0 * kappa)
    xi = np.where(pe < 1e-3, pe / 3.0 - pe**3 / 45.0, 1.0 / np.tanh(np.maximum(pe, 1e-3)) - 1.0 / np.maximum(pe, 1e-3))
    tau = h / (2.0 * speed) * xi
    i = np.arange(n - 1)
    rows = np.concatenate([i, i, i + 1, i + 1])
    cols = np.concatenate([i, i + 1, i, i + 1])
    s = tau * u_bar**2 / h
    S = sp.csr_matrix((np.concatenate([s, -s, -s, s]), (rows, cols)), shape=(n, n))
    # test phi_i' = -1/h (left node), +1/h (right); int phi_j = h/2
    m = 0.5 * tau * u_bar
    Sm = sp.csr_matrix((np.concatenate([-m, -m, m, m]), (rows, cols)), shape=(n, n))
    return S, Sm, tau


def interface_load(x, f):
    """``int f phi_i`` on ``Sigma`` for nodal ``f`` values or a callable of ``x``."""
    if callable(f):
        h = np.diff(x)
        q, w = _GAUSS2
        xq = x[:-1, None] + h[:, None] * q[None, :]
        fq = np.broadcast_to(np.asarray(f(xq), dtype=float), xq.shape)
        b = np.zeros(len(x))
        np.add.at(b, np.arange(len(x) - 1), np.sum(w * fq * (1 - q) * h[:, None], axis=1))
        np.add.at(b, np.arange(1, len(x)), np.sum(w * fq * q * h[:, None], axis=1))
        return b
    M, _, _ = interface_matrices(x)
    return M @ np.asarray(f, dtype=float)


def darcy_pressure(x, theta_f, coeffs: EffectiveCoefficients, u_bar, viscosity):
    """Zero-mean pressure solving ``mu(theta_f) u_bar = -K p' + mu(theta_f) xi0_bar``.

    ``p'`` is piecewise smooth; it is integrated segment by segment with
    two-point Gauss quadrature of ``mu`` along the linear ``theta_f``.
    Returns nodal values and the per-segment mean slope.
    """
    h = np.diff(x)
    q, w = _GAUSS2
    th = theta_f[:-1, None] * (1 - q) + theta_f[1:, None] * q
    mu = np.sum(w * viscosity(th), axis=1)
    slope = mu * (coeffs.xi0_bar - u_bar) / coeffs.K
    p = np.concatenate([[0.0], np.cumsum(slope * h)])
    mean = float(np.sum(0.5 * h * (p[:-1] + p[1:])))
    return p - mean, slope


def darcy_update(x, theta_f, coeffs: EffectiveCoefficients, u_bc, viscosity):
    """Layer flux and pressure for the current fluid temperature.

    In 2D the flux is divergence free along ``Sigma`` and fixed by the
    boundary flux, so ``u_bar = u_bc``; returns ``(u_bar, p)``.
    """
    if not coeffs.K > 0:
        raise ConfigError(f"permeability must be positive, got {coeffs.K}")
    p, _ = darcy_pressure(x, theta_f, coeffs, u_bc, viscosity)
    return float(u_bc), p


def pressure_gradient(x_query, x, theta_f, coeffs: EffectiveCoefficients, u_bar, viscosity):
    """Pointwise ``dp/dx1 = mu(theta_f) (xi0_bar - u_bar) / K`` at ``x_query``."""
    th = np.interp(x_query, x, theta_f)
    return viscosity(th) * (coeffs.xi0_bar - u_bar) / coeffs.K


@dataclass
class EffectiveScenario:
    """Assembled homogenized problem for one scenario."""

    cfg: ScenarioConfig
    coeffs: EffectiveCoefficients
    u_bar: float
    W: FunctionSpace
    interface: InterfaceMesh1D
    matrices: dict = field(repr=False, default_factory=dict)
    factors: object = field(repr=False, default=None)

    @property
    def x(self):
        return self.interface.x

    @property
    def n_s(self):
        return self.W.n_dofs


def _interface_source(expr: Expression, geom, gamma0):
    """``x1 -> int_Gamma f(x1, y) dsigma`` with ``eps = 1`` and ``x2 = y2``."""
    def f(x1, y1, y2):
        return expr(x1=x1, x2=y2, eps=1.0, gamma0=gamma0, gamma_len=geom.interface_length, y1=y1, y2=y2)
    if not expr._uses("x1"):
        val = effective_interface_source(geom, lambda y1, y2: f(0.0, y1, y2))
        return lambda x: np.full_like(np.asarray(x, dtype=float), val)
    return lambda x: effective_interface_source(geom, f, np.ravel(x)).reshape(np.shape(x))


def build_effective_problem(cfg: ScenarioConfig, coeffs: EffectiveCoefficients | None = None) -> EffectiveScenario:
    """Coefficients (computed on ``cfg.cell_h`` unless given), meshes and matrices."""
    geom = build_cell_geometry(cfg.roughness)
    fs_expr, ff_expr = cfg.source_expressions()
    if coeffs is None:
        coeffs = compute_effective_coefficients(cfg.roughness, h=cfg.cell_h, kappa_f=cfg.kappa_f,
                                                u_motion=cfg.u_motion)
    mesh, iface = triangulate_macro(cfg.macro_h)
    W = FunctionSpace(mesh, 1)
    x = iface.x
    u_bar = effective_inflow(cfg.inflow, cfg.gamma0, cfg.u_motion)
    M1, K1, D1 = interface_matrices(x)
    fbar_s = _interface_source(fs_expr, geom, cfg.gamma0)
    fbar_f = _interface_source(ff_expr, geom, cfg.gamma0)
    coeffs.f_bar_s = float(np.mean(fbar_s(np.linspace(0, 1, 5))))
    coeffs.f_bar_f = float(np.mean(fbar_f(np.linspace(0, 1, 5))))
    mats = {"Ms": mass_matrix(W), "Ks": stiffness_matrix(W), "M1": M1, "K1": K1, "D1": D1,
            "bs_if": interface_load(x, fbar_s), "bf": interface_load(x, fbar_f)}
    if cfg.supg_interface:
        S, Sm, tau = interface_supg(x, u_bar, coeffs.kappa_tilde)
        mats.update(S1=S, Sm1=Sm, tau=tau)
        # consistent source term of the streamline test function tau u phi'
        mats["bf_supg"] = _supg_load(x, fbar_f, tau, u_bar)
    return EffectiveScenario(cfg=cfg, coeffs=coeffs, u_bar=u_bar, W=W, interface=iface, matrices=mats)


def _supg_load(x, f, tau, u_bar):
    h = np.diff(x)
    q, w = _GAUSS2
    xq = x[:-1, None] + h[:, None] * q[None, :]
    fint = np.sum(w * np.broadcast_to(np.asarray(f(xq), dtype=float), xq.shape), axis=1) * h
    b = np.zeros(len(x))
    np.add.at(b, np.arange(len(x) - 1), -tau * u_bar * fint / h)
    np.add.at(b, np.arange(1, len(x)), tau * u_bar * fint / h)
    return b


def _trace(prob: EffectiveScenario):
    """Sparse map from bulk dofs to interface nodes (identity on the bottom row)."""
    iface = prob.interface
    n = iface.n_vertices
    dof = prob.W.node_to_dof[iface.bulk_vertex]
    return sp.csr_matrix((np.ones(n), (np.arange(n), dof)), shape=(n, prob.n_s))


def macro_operator(prob: EffectiveScenario, dt):
    """Implicit Euler matrix for ``[theta_s, theta_f]`` and the old-value blocks.

    Fluid rows follow the weak form: storage ``|Z|``, diffusion ``kappa_tilde``,
    advection ``u_bar``, exchange ``alpha |Gamma| (theta_f - theta_s)``.
    """
    cfg, c, m = prob.cfg, prob.coeffs, prob.matrices
    T = _trace(prob)
    a = cfg.alpha * c.gamma_measure
    M1 = m["M1"]
    solid = m["Ms"] / dt + cfg.kappa_s * m["Ks"] + a * (T.T @ M1 @ T)
    fluid = c.z_volume * M1 / dt + c.kappa_tilde * m["K1"] + prob.u_bar * m["D1"] + a * M1
    sf = -a * (T.T @ M1)
    fs = -a * (M1 @ T)
    old_f = c.z_volume * M1 / dt
    if cfg.supg_interface and "S1" in m:
        Sm = m["Sm1"]
        fluid = fluid + m["S1"] + c.z_volume * Sm / dt + a * Sm
        fs = fs - a * (Sm @ T)
        old_f = old_f + c.z_volume * Sm / dt
    L = sp.bmat([[solid, sf], [fs, fluid]], format="csr")
    return L, m["Ms"] / dt, old_f


@dataclass
class MacroState:
    theta_s: np.ndarray
    theta_f: np.ndarray
    p: np.ndarray | None = None
    t: float = 0.0


def initial_macro_state(prob: EffectiveScenario) -> MacroState:
    cfg = prob.cfg
    xy = prob.W.dof_coordinates()
    env = dict(eps=cfg.epsilon, gamma0=cfg.gamma0, gamma_len=prob.coeffs.gamma_measure)
    ts = np.broadcast_to(Expression(cfg.theta0_s)(x1=xy[:, 0], x2=xy[:, 1], y1=np.mod(xy[:, 0] / cfg.epsilon, 1.0),
                                                  y2=xy[:, 1] / cfg.epsilon, **env), (len(xy),)).astype(float)
    x = prob.x
    tf = np.broadcast_to(Expression(cfg.theta0_f)(x1=x, x2=0.0 * x, y1=np.mod(x / cfg.epsilon, 1.0), y2=0.0 * x,
                                                  **env), x.shape).astype(float)
    tf = tf.copy()
    tf[0] = 0.0
    return MacroState(ts.copy(), tf)


def macro_heat_step(prob: EffectiveScenario, state: MacroState, dt):
    """One implicit Euler step of the monolithic bulk-interface system."""
    cfg, m = prob.cfg, prob.matrices
    ns = prob.n_s
    if prob.factors is None or prob.factors[0] != dt:
        L, old_s, old_f = macro_operator(prob, dt)
        free = np.ones(L.shape[0], dtype=bool)
        free[ns] = False                            # theta_f = 0 at the inflow end
        prob.factors = (dt, factorize(L[free][:, free]), L, old_s, old_f, free)
    _, lu, L, old_s, old_f, free = prob.factors
    T = _trace(prob)
    bs = T.T @ m["bs_if"]
    bf = m["bf"] + (m["bf_supg"] if "bf_supg" in m else 0.0)
    rhs = np.concatenate([old_s @ state.theta_s + bs, old_f @ state.theta_f + bf])
    x = np.zeros(L.shape[0])
    x[free] = lu.solve(rhs[free])
    r = float(np.linalg.norm(L[free][:, free] @ x[free] - rhs[free]))
    if not np.isfinite(r) or r > cfg.solver_tol * (np.linalg.norm(rhs) + 1.0):
        raise SolverError("macro heat solve residual too large", {"residual": r})
    return x[:ns], x[ns:]


def sample_macro_line(prob: EffectiveScenario, state: MacroState, n=None):
    """Line columns on ``Sigma``: ``u1`` carries the layer flux ``u_bar``."""
    n = n or prob.cfg.line_samples
    xs = np.linspace(0.0, 1.0, n)
    return {"x1": xs, "theta_f": np.interp(xs, prob.x, state.theta_f),
            "pressure_eps2": np.interp(xs, prob.x, state.p) if state.p is not None else np.full(n, np.nan),
            "u1": np.full(n, prob.u_bar)}


def run_macro(cfg: ScenarioConfig, problem: EffectiveScenario | None = None, coeffs=None,
              record_all=False) -> SolutionTrajectory:
    """Time loop of the homogenized model.

    Per step the pressure is computed from the fluid temperature of the
    previous level (the flux is fixed), then the heat system is advanced.
    This mirrors the flow-then-heat splitting of :func:`run_micro`.
    """
    t0 = time.perf_counter()
    prob = problem if problem is not None else build_effective_problem(cfg, coeffs)
    state = initial_macro_state(prob)
    visc = cfg.viscosity
    _, state.p = darcy_update(prob.x, state.theta_f, prob.coeffs, prob.u_bar, visc)
    ispace = InterfaceSpace(prob.x)
    traj = SolutionTrajectory(kind="macro", spaces={"theta_s": prob.W, "theta_f": ispace, "p": ispace},
                              meta={"dt": cfg.dt, "T_end": cfg.T_end, "u_bar": prob.u_bar,
                                    "coefficients": prob.coeffs.as_record(), "config": cfg.to_dict()})
    steps_out = set(int(round(t / cfg.dt)) for t in cfg.outputs)
    if 0 in steps_out or record_all:
        traj.record(0.0, _fields(state), sample_macro_line(prob, state) if 0 in steps_out else None)
    for n in range(1, cfg.n_steps + 1):
        # same splitting as the layer model: flow from the previous temperature, then heat
        _, p = darcy_update(prob.x, state.theta_f, prob.coeffs, prob.u_bar, visc)
        try:
            ts, tf = macro_heat_step(prob, state, cfg.dt)
        except (SolverError, ValueError) as exc:
            raise StepError(f"macro step {n} failed: {exc}", traj, getattr(exc, "diagnostics", {})) from exc
        state = MacroState(ts, tf, p, n * cfg.dt)
        if record_all or n in steps_out:
            traj.record(state.t, _fields(state), sample_macro_line(prob, state) if n in steps_out else None)
    traj.meta["seconds"] = time.perf_counter() - t0
    traj.problem = prob
    return traj


def _fields(state: MacroState):
    return {"theta_s": state.theta_s.copy(), "theta_f": state.theta_f.copy(),
            "p": None if state.p is None else state.p.copy()}


__all__ = ["effective_inflow", "interface_matrices", "interface_supg", "darcy_pressure", "darcy_update",
           "pressure_gradient",
           "EffectiveScenario", "build_effective_problem", "macro_operator", "macro_heat_step", "MacroState",
           "initial_macro_state", "run_macro", "sample_macro_line", "InterfaceSpace"]
