"""Exact (function based) description of the rough thin layer.

The fluid part of the periodic reference cell is the region below the graph
of a roughness profile ``gamma: [0, 1] -> [gamma0, 1]``::

    Z = {(y1, y2) : 0 < y1 < 1, 0 < y2 < gamma(y1)}

and the layer of thickness ``eps`` is the ``eps``-scaled periodic repetition
of ``Z`` along the bottom edge of the unit square.  Nothing here is
discretized; the mesh module samples these functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GeometryError

PROFILE_KINDS = ("sine", "rect", "flat")

# Lateral band where every non-flat profile touches the cell top.
_RAMP_START = 0.1
_RAMP_END = 0.9


def _smoothstep(t):
    return -2.0 * t**3 + 3.0 * t**2


def _smoothstep_prime(t):
    return -6.0 * t**2 + 6.0 * t


@dataclass(frozen=True)
class RoughnessProfile:
    """Periodic graph describing the solid tooth of one cell.

    ``kind`` is one of ``"sine"``, ``"rect"`` (smoothed rectangle) or
    ``"flat"`` (constant height ``gamma0``, used for closed-form checks).
    """

    kind: str
    gamma0: float

    def __post_init__(self):
        kind = str(self.kind).lower()
        object.__setattr__(self, "kind", kind)
        if kind not in PROFILE_KINDS:
            raise GeometryError(f"unknown profile kind {self.kind!r}; expected one of {PROFILE_KINDS}")
        if not (0.0 < self.gamma0 <= 1.0):
            raise GeometryError(f"gamma0 must lie in (0, 1], got {self.gamma0}")

    @property
    def label(self):
        return f"{self.kind}-{self.gamma0:g}"

    def breakpoints(self):
        """Points where the piecewise definition switches formula."""
        if self.kind == "flat":
            return np.array([0.0, 1.0])
        if self.kind == "sine":
            return np.array([0.0, _RAMP_START, _RAMP_END, 1.0])
        return np.array([0.0, 0.1, 0.2, 0.8, 0.9, 1.0])

    def _check_domain(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > 1.0) or np.any(~np.isfinite(x)):
            raise GeometryError("profile coordinate outside [0, 1]")
        return x

    def evaluate(self, x1):
        """Height of the interface above the cell bottom at ``x1``."""
        x = self._check_domain(x1)
        g0 = self.gamma0
        if self.kind == "flat":
            out = np.full_like(x, g0)
        elif self.kind == "sine":
            inner = (x >= _RAMP_START) & (x <= _RAMP_END)
            s = np.sin(2.0 * np.pi * (x - 0.1) / 0.8 - 0.5 * np.pi) + 1.0
            out = np.where(inner, 1.0 - 0.5 * (1.0 - g0) * s, 1.0)
        else:
            out = np.ones_like(x)
            up = (x >= 0.1) & (x < 0.2)
            plateau = (x >= 0.2) & (x <= 0.8)
            down = (x > 0.8) & (x <= 0.9)
            out = np.where(up, 1.0 - (1.0 - g0) * _smoothstep((x - 0.1) / 0.1), out)
            out = np.where(plateau, g0, out)
            out = np.where(down, g0 + (1.0 - g0) * _smoothstep((x - 0.8) / 0.1), out)
        return out if out.ndim else float(out)

    def derivative(self, x1):
        x = self._check_domain(x1)
        g0 = self.gamma0
        if self.kind == "flat":
            out = np.zeros_like(x)
        elif self.kind == "sine":
            inner = (x >= _RAMP_START) & (x <= _RAMP_END)
            c = np.cos(2.0 * np.pi * (x - 0.1) / 0.8 - 0.5 * np.pi) * 2.0 * np.pi / 0.8
            out = np.where(inner, -0.5 * (1.0 - g0) * c, 0.0)
        else:
            out = np.zeros_like(x)
            up = (x >= 0.1) & (x < 0.2)
            down = (x > 0.8) & (x <= 0.9)
            out = np.where(up, -(1.0 - g0) * _smoothstep_prime((x - 0.1) / 0.1) / 0.1, out)
            out = np.where(down, (1.0 - g0) * _smoothstep_prime((x - 0.8) / 0.1) / 0.1, out)
        return out if out.ndim else float(out)

    def evaluate_periodic(self, x1):
        """Evaluate at ``x1 mod 1`` (any real input)."""
        x = np.mod(np.asarray(x1, dtype=float), 1.0)
        return self.evaluate(x)


def evaluate_profile(profile: RoughnessProfile, x1):
    return profile.evaluate(x1)


def _gauss_panels(edges, n_per_piece, order=5):
    """Composite Gauss-Legendre nodes/weights with the given panel edges."""
    gx, gw = np.polynomial.legendre.leggauss(order)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sub = np.linspace(a, b, n_per_piece + 1)
        lo, hi = sub[:-1, None], sub[1:, None]
        xs.append((0.5 * (hi - lo) * gx + 0.5 * (hi + lo)).ravel())
        ws.append((0.5 * (hi - lo) * gw).ravel())
    return np.concatenate(xs), np.concatenate(ws)


@dataclass(frozen=True)
class CellGeometry:
    """Reference cell measures.  ``Gamma_d`` is the graph plus ``{y2 = 0}``."""

    profile: RoughnessProfile
    fluid_area: float
    interface_length: float
    quadrature_n: int
    bottom_length: float = 1.0
    # arclength quadrature over the graph: points (y1, y2) and weights
    gamma_points: np.ndarray = field(repr=False, compare=False, default=None)
    gamma_weights: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def gamma_d_length(self):
        return self.interface_length + self.bottom_length

    def integrate_on_interface(self, f):
        """Arclength integral of ``f(y1, y2)`` over the graph."""
        y1, y2 = self.gamma_points[:, 0], self.gamma_points[:, 1]
        return float(np.sum(self.gamma_weights * np.asarray(f(y1, y2), dtype=float) * np.ones_like(y1)))


def build_cell_geometry(profile: RoughnessProfile, quadrature_n: int = 64) -> CellGeometry:
    if quadrature_n < 16:
        raise GeometryError("quadrature_n must be at least 16")
    x, w = _gauss_panels(profile.breakpoints(), quadrature_n)
    g = profile.evaluate(x)
    dg = profile.derivative(x)
    ds = np.sqrt(1.0 + dg**2)
    return CellGeometry(
        profile=profile,
        fluid_area=float(np.sum(w * g)),
        interface_length=float(np.sum(w * ds)),
        quadrature_n=quadrature_n,
        gamma_points=np.column_stack([x, g]),
        gamma_weights=w * ds,
    )


BOUNDARY_TAGS = ("bottom", "inflow", "outflow", "rough_interface", "solid_outer")


@dataclass(frozen=True)
class LayerDomain:
    """The unit square split into the rough fluid layer and the solid above.

    Tags: ``bottom`` (Sigma, moving wall), ``inflow``/``outflow`` (lateral
    fluid boundaries), ``rough_interface`` (Gamma_eps) and ``solid_outer``.
    """

    profile: RoughnessProfile
    epsilon: float
    cell_count: int
    cell: CellGeometry
    inflow_side: str = "left"
    outflow_side: str = "right"
    sigma_extent: float = 1.0
    tags: tuple = BOUNDARY_TAGS

    def interface_height(self, x1):
        x = np.asarray(x1, dtype=float)
        local = np.clip(x / self.epsilon - np.floor(x / self.epsilon), 0.0, 1.0)
        # the last cell must see its right edge, not the next cell's left
        local = np.where((x >= self.sigma_extent) & (local == 0.0), 1.0, local)
        return self.epsilon * self.profile.evaluate(local)

    @property
    def fluid_area(self):
        return self.epsilon * self.cell.fluid_area

    @property
    def solid_layer_area(self):
        """Area of the solid inside the strip ``Sigma x (0, eps)``."""
        return self.epsilon * (1.0 - self.cell.fluid_area)

    @property
    def interface_length(self):
        return self.cell_count * self.epsilon * self.cell.interface_length


def build_layer_domain(profile, epsilon, inflow_side="left", outflow_side="right",
                       quadrature_n=64) -> LayerDomain:
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    n = 1.0 / epsilon
    count = int(round(n))
    if abs(n - count) > 1e-9 * max(1.0, n) or count < 2:
        raise ConfigError(f"1/epsilon must be an integer >= 2, got 1/{epsilon} = {n}")
    if {inflow_side, outflow_side} != {"left", "right"}:
        raise ConfigError("inflow/outflow sides must be 'left' and 'right'")
    cell = build_cell_geometry(profile, quadrature_n)
    return LayerDomain(profile=profile, epsilon=1.0 / count, cell_count=count, cell=cell,
                       inflow_side=inflow_side, outflow_side=outflow_side)


def analytic_fluid_area(profile: RoughnessProfile) -> float:
    """Closed-form |Z| (both ramps of ``rect`` average to one half)."""
    g0 = profile.gamma0
    if profile.kind == "flat":
        return g0
    if profile.kind == "sine":
        return 1.0 - 0.8 * (1.0 - g0) / 2.0
    return 1.0 - (1.0 - g0) * (0.05 + 0.6 + 0.05)


__all__ = [
    "RoughnessProfile", "CellGeometry", "LayerDomain", "evaluate_profile",
    "build_cell_geometry", "build_layer_domain", "analytic_fluid_area", "PROFILE_KINDS",
]
