"""Reconstruction of layer fields from the homogenized solution and eps-convergence.

Micro fluid triangles are scaled copies of the cell triangles with the same
local vertex order, so cell fields evaluated at the cell quadrature points
are exactly the cell fields at the micro quadrature points (``y = x/eps``).
Errors are space-time L2 norms with the right-endpoint rule in time.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .cell import CellSolutions, EffectiveCoefficients, compute_effective_coefficients
from .config import ScenarioConfig
from .errors import AnalysisError
from .macro import build_effective_problem, run_macro
from .mesh import PointLocator
from .micro import MicroProblem, MicroState, build_micro_problem, run_micro

QUANTITIES = ("theta_f", "p", "u", "theta_s")


def corrector_theta1(dtheta_dx, omega):
    """First-order fluid temperature corrector ``omega(y) d1 theta_f``."""
    return np.asarray(omega) * np.asarray(dtheta_dx)


def corrector_pressure_velocity(dpdx, mu, xi0, xi1, eta0, eta1):
    """Pressure corrector and leading-order velocity from the cell fields.

    Cell pressures follow the cell convention ``eta = -P`` (``P`` the
    standard Stokes pressure at unit viscosity).  The layer balance
    ``-mu lap_y u + grad_y q1 = -grad p`` gives
    ``q1 = -mu eta0 + d1p eta1`` and ``u = xi0 - xi1 d1p / mu``.
    Vector fields carry their components in the last axis.
    """
    dpdx = np.asarray(dpdx, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise AnalysisError("viscosity must be positive")
    q1 = -mu * np.asarray(eta0) + dpdx * np.asarray(eta1)
    u = np.asarray(xi0) - np.asarray(xi1) * (dpdx / mu)[..., None]
    return q1, u


def l2_error(micro_values, reconstructed, weights, dt):
    """``sqrt(sum_n dt sum w (micro - rec)^2)`` over matching time levels.

    Values are sequences over time levels of arrays broadcastable against
    ``weights`` (a trailing component axis is summed).
    """
    if len(micro_values) != len(reconstructed):
        raise AnalysisError(f"time grids differ: {len(micro_values)} vs {len(reconstructed)} levels")
    total = 0.0
    for a, b in zip(micro_values, reconstructed):
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if d.ndim == np.ndim(weights) + 1:
            d2 = np.sum(d * d, axis=-1)
        else:
            d2 = d * d
        total += dt * float(np.sum(weights * d2))
    return float(np.sqrt(total))


def fit_order(errors: dict):
    """Least-squares slope of ``log(error)`` against ``log(eps)``."""
    eps, err = _pairs(errors)
    return float(np.polyfit(np.log(eps), np.log(err), 1)[0])


def _pairs(errors):
    if len(errors) < 3:
        raise AnalysisError("order fits need at least three (eps, error) pairs")
    eps = np.array(sorted(errors), dtype=float)
    err = np.array([errors[e] for e in sorted(errors)], dtype=float)
    if np.any(err <= 0) or np.any(eps <= 0) or not np.all(np.isfinite(err)):
        raise AnalysisError("errors and eps values must be positive and finite")
    return eps, err


def fit_residual(errors: dict):
    """RMS residual of the log-log line fit."""
    eps, err = _pairs(errors)
    c = np.polyfit(np.log(eps), np.log(err), 1)
    return float(np.sqrt(np.mean((np.polyval(c, np.log(eps)) - np.log(err)) ** 2)))


@dataclass
class ErrorReport:
    """Per-eps space-time errors and fitted orders."""

    eps: list
    errors: dict                         # quantity -> {eps: error}
    slopes: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    seconds: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def fit(self):
        for q, errs in self.errors.items():
            if len(errs) >= 3:
                self.slopes[q] = fit_order(errs)
                self.residuals[q] = fit_residual(errs)
        return self

    def rows(self):
        return [(e, *(self.errors[q][e] for q in QUANTITIES)) for e in self.eps]


class Reconstruction:
    """Reconstructed fluid fields at the micro fluid quadrature points.

    ``at(n)`` returns ``theta_f``, ``p`` (the ``eps^2 p_eps`` scale, zero
    mean over the layer), ``u`` and the macro ``theta_s`` at the micro solid
    quadrature points for time level ``n`` of the macro trajectory.
    """

    def __init__(self, prob: MicroProblem, cell: CellSolutions, macro, coeffs: EffectiveCoefficients):
        self.prob = prob
        self.eps = prob.cfg.epsilon
        self.macro = macro
        self.coeffs = coeffs
        meta = prob.mesh.meta
        ctri = np.asarray(meta["cell_triangle"])
        if cell.mesh is not meta["cell_mesh"] or not np.array_equal(prob.Wf.elements, np.arange(len(ctri))):
            raise AnalysisError("cell solutions must live on the cell mesh tiled into the micro mesh")
        self.omega = cell.omega_space.evaluate(cell.omega)[ctri]
        self.xi0 = cell.velocity_space.evaluate(cell.xi0)[ctri]
        self.xi1 = cell.velocity_space.evaluate(cell.xi)[ctri]
        self.eta0 = cell.pressure_space.evaluate(cell.eta0)[ctri]
        self.eta1 = cell.pressure_space.evaluate(cell.eta)[ctri]
        xq, self.w_f = prob.Wf.quadrature()
        self.x1 = xq[..., 0]
        mprob = macro.problem
        self.x = mprob.x
        self.seg = np.clip(np.searchsorted(self.x, self.x1, side="right") - 1, 0, len(self.x) - 2)
        xs, self.w_s = prob.Ws.quadrature()
        W = mprob.W
        tri, bary = PointLocator(W.mesh, W.elements).locate(xs.reshape(-1, 2))
        if np.any(tri < 0):
            raise AnalysisError("solid quadrature points outside the macro mesh")
        self._solid_loc = (np.searchsorted(W.elements, tri), bary, xs.shape[:2])

    def _macro_fields(self, n):
        if n >= len(self.macro.times) or abs(self.macro.times[n] - n * self.prob.cfg.dt) > 1e-9:
            raise AnalysisError(f"macro trajectory has no level {n}")
        return self.macro.fields[n]

    def at(self, n):
        f = self._macro_fields(n)
        tf, p = f["theta_f"], f["p"]
        x, eps = self.x, self.eps
        mprob = self.macro.problem
        theta = np.interp(self.x1, x, tf)
        dtheta = (np.diff(tf) / np.diff(x))[self.seg]
        mu = self.prob.cfg.viscosity(theta)
        dpdx = mu * (self.coeffs.xi0_bar - mprob.u_bar) / self.coeffs.K
        q1, u = corrector_pressure_velocity(dpdx, mu, self.xi0, self.xi1, self.eta0, self.eta1)
        pr = np.interp(self.x1, x, p) + eps * q1
        pr = pr - np.sum(self.w_f * pr) / np.sum(self.w_f)
        th = theta + eps * corrector_theta1(dtheta, self.omega)
        loc, bary, shape = self._solid_loc
        ts = mprob.W.evaluate_at(f["theta_s"], loc, bary).reshape(shape)
        return {"theta_f": th, "p": pr, "u": u, "theta_s": ts}


class ErrorAccumulator:
    """Observer for :func:`run_micro` summing squared errors per time level."""

    def __init__(self, rec: Reconstruction, include_initial=False):
        self.rec = rec
        self.dt = rec.prob.cfg.dt
        self.include_initial = include_initial
        self.sq = {q: 0.0 for q in QUANTITIES}
        self.levels = 0

    def __call__(self, n, state: MicroState, prob: MicroProblem):
        if n == 0 and not self.include_initial:
            return
        r = self.rec.at(n)
        eps = prob.cfg.epsilon
        wf, ws = self.rec.w_f, self.rec.w_s
        self.sq["theta_f"] += self.dt * float(np.sum(wf * (prob.Wf.evaluate(state.theta_f) - r["theta_f"]) ** 2))
        self.sq["theta_s"] += self.dt * float(np.sum(ws * (prob.Ws.evaluate(state.theta_s) - r["theta_s"]) ** 2))
        if state.p is not None:
            self.sq["p"] += self.dt * float(np.sum(wf * (eps**2 * prob.Q.evaluate(state.p) - r["p"]) ** 2))
            du = prob.V.evaluate(state.u) - r["u"]
            self.sq["u"] += self.dt * float(np.sum(wf * np.sum(du * du, axis=-1)))
        self.levels += 1

    @property
    def errors(self):
        return {q: float(np.sqrt(v)) for q, v in self.sq.items()}


def vertical_points(cfg: ScenarioConfig, x1=0.5, n=41):
    """Points on ``{x1} x (0, eps * gamma(x1/eps))`` inside the fluid."""
    eps = cfg.epsilon
    top = eps * float(cfg.roughness.evaluate_periodic(x1 / eps))
    x2 = np.linspace(0.0, top, n)
    x2[0], x2[-1] = 1e-9 * eps, top * (1 - 1e-9)
    return np.column_stack([np.full(n, x1), x2])


def micro_vertical_profile(prob: MicroProblem, state: MicroState, x1=0.5, n=41):
    """Horizontal velocity of a layer state along a vertical line."""
    pts = vertical_points(prob.cfg, x1, n)
    tri, bary = PointLocator(prob.mesh, prob.Wf.elements).locate(pts)
    keep = tri >= 0
    loc = np.searchsorted(prob.Wf.elements, tri[keep])
    return pts[keep, 1], prob.V.evaluate_at(state.u, loc, bary[keep])[:, 0]


def reconstructed_vertical_profile(cfg: ScenarioConfig, cell: CellSolutions, coeffs: EffectiveCoefficients,
                                   u_bar, x1=0.5, n=41):
    """Leading-order velocity ``xi0 - xi1 (xi0_bar - u_bar)/K`` on a vertical line.

    The viscosity cancels between ``d1 p`` and ``1/mu``, so the profile does
    not depend on the temperature.
    """
    eps = cfg.epsilon
    pts = vertical_points(cfg, x1, n)
    y = np.column_stack([(pts[:, 0] / eps) % 1.0, pts[:, 1] / eps])
    V = cell.velocity_space
    tri, bary = PointLocator(cell.mesh, V.elements).locate(y)
    keep = tri >= 0
    loc = np.searchsorted(V.elements, tri[keep])
    xi0 = V.evaluate_at(cell.xi0, loc, bary[keep])[:, 0]
    xi1 = V.evaluate_at(cell.xi, loc, bary[keep])[:, 0]
    return pts[keep, 1], xi0 - xi1 * (coeffs.xi0_bar - u_bar) / coeffs.K


def compare_at_eps(cfg: ScenarioConfig, macro_h=None, coefficients="tiled"):
    """Run micro and macro for one eps and return the space-time errors.

    ``coefficients="tiled"`` takes the effective coefficients from the cell
    mesh tiled into the micro mesh (consistent discrete homogenization);
    ``"cell_h"`` uses a separate cell solve at ``cfg.cell_h``.
    """
    t0 = time.perf_counter()
    prob = build_micro_problem(cfg)
    cell_mesh = prob.mesh.meta["cell_mesh"]
    tiled, sols = compute_effective_coefficients(cfg.roughness, kappa_f=cfg.kappa_f, u_motion=cfg.u_motion,
                                                 mesh=cell_mesh, return_solutions=True)
    if coefficients == "tiled":
        coeffs = tiled
    elif coefficients == "cell_h":
        coeffs = compute_effective_coefficients(cfg.roughness, h=cfg.cell_h, kappa_f=cfg.kappa_f,
                                                u_motion=cfg.u_motion)
    else:
        raise AnalysisError(f"unknown coefficient source {coefficients!r}")
    mcfg = cfg if macro_h is None else cfg.replace(macro_h=macro_h)
    macro = run_macro(mcfg, build_effective_problem(mcfg, coeffs), record_all=True)
    rec = Reconstruction(prob, sols, macro, coeffs)
    acc = ErrorAccumulator(rec)
    traj = run_micro(cfg, prob, observer=acc)
    return acc.errors, {"seconds": time.perf_counter() - t0, "micro": traj, "macro": macro,
                        "coefficients": coeffs.as_record()}


def convergence_study(cfg: ScenarioConfig, eps_list=(0.2, 0.1, 0.05), macro_h=0.01, coefficients="tiled",
                      progress=None) -> ErrorReport:
    """Errors between micro runs and reconstructed macro solutions over ``eps_list``."""
    report = ErrorReport(eps=list(eps_list), errors={q: {} for q in QUANTITIES},
                         meta={"macro_h": macro_h, "coefficients": coefficients})
    for e in eps_list:
        errs, info = compare_at_eps(cfg.replace(epsilon=e), macro_h=macro_h, coefficients=coefficients)
        for q in QUANTITIES:
            report.errors[q][e] = errs[q]
        report.seconds[e] = info["seconds"]
        if progress is not None:
            progress(e, errs, info)
    return report.fit()


__all__ = ["corrector_theta1", "corrector_pressure_velocity", "l2_error", "fit_order", "fit_residual",
           "ErrorReport", "Reconstruction", "ErrorAccumulator", "compare_at_eps", "convergence_study", "QUANTITIES",
           "vertical_points", "micro_vertical_profile", "reconstructed_vertical_profile"]
