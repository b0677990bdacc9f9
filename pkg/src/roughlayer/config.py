"""Scenario configuration: defaults, JSON loading, validation and source expressions.

Sources and initial temperatures are closed-form expressions over the
variables ``x1, x2, eps, gamma0, gamma_len`` (plus ``y1, y2``, the cell
coordinates ``frac(x1/eps)`` and ``x2/eps``).  For the homogenized model an
expression is evaluated on the cell interface with ``eps = 1`` and
``x2 = y2``, so layer-scale sources should depend on the height through
``x2/eps`` (or ``y2``).
"""
from __future__ import annotations

import ast
import dataclasses
import json
import math
import operator
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import PROFILE_KINDS, RoughnessProfile
from .viscosity import ViscosityLaw

INFLOW_FAMILIES = ("lin", "quad", "lin2")

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
           ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
          "abs": np.abs, "tanh": np.tanh, "min": np.minimum, "max": np.maximum}
_CONSTS = {"pi": math.pi, "e": math.e}
VARIABLES = ("x1", "x2", "eps", "gamma0", "gamma_len", "y1", "y2")


class Expression:
    """A parsed arithmetic expression; evaluation broadcasts over arrays."""

    def __init__(self, text):
        self.text = str(text).strip()
        try:
            self._tree = ast.parse(self.text, mode="eval").body
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {self.text!r}: {exc.msg}") from exc
        self._check(self._tree)

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ConfigError(f"only numeric literals allowed in {self.text!r}")
        elif isinstance(node, ast.Name):
            if node.id not in VARIABLES and node.id not in _CONSTS:
                raise ConfigError(f"unknown name {node.id!r} in {self.text!r}; allowed: {VARIABLES}")
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            self._check(node.operand)
        elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            if node.keywords:
                raise ConfigError("keyword arguments are not allowed in expressions")
            for a in node.args:
                self._check(a)
        else:
            raise ConfigError(f"unsupported construct in expression {self.text!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, env))
        return _FUNCS[node.func.id](*[self._eval(a, env) for a in node.args])

    def __call__(self, **env):
        missing = [n for n in VARIABLES if n not in env and self._uses(n)]
        if missing:
            raise ConfigError(f"expression {self.text!r} needs {missing}")
        with np.errstate(all="ignore"):
            return self._eval(self._tree, env)

    def _uses(self, name):
        return any(isinstance(n, ast.Name) and n.id == name for n in ast.walk(self._tree))

    @property
    def is_zero(self):
        return isinstance(self._tree, ast.Constant) and float(self._tree.value) == 0.0

    def __repr__(self):
        return f"Expression({self.text!r})"


@dataclass
class ScenarioConfig:
    """All physical and numerical parameters of a run (defaults: the sine reference scenario)."""

    kappa_s: float = 0.5
    kappa_f: float = 0.1
    alpha: float = 1.0
    viscosity: ViscosityLaw = field(default_factory=ViscosityLaw)
    profile: str = "sine"
    gamma0: float = 0.5
    epsilon: float = 0.1
    inflow: str = "lin"
    u_motion: tuple = (1.0, 0.0)
    source_s: str = "(1 - x2/eps)/(1 - gamma0)"
    source_f: str = "0"
    theta0_s: str = "0"
    theta0_f: str = "0"
    T_end: float = 5.0
    dt: float = 0.05
    h_bulk: float = 0.03
    h_layer: float | None = None       # default h_bulk * epsilon
    grading: float = 0.25
    macro_h: float = 0.03
    cell_h: float = 0.01
    supg: bool = True
    supg_interface: bool = True
    inflow_closed: bool = False        # test-only: drops the inflow Dirichlet condition
    output_times: tuple | None = None  # default (T_end,)
    line_samples: int = 401
    solver_tol: float = 1e-10
    stokes_tol: float = 1e-8           # relative, in the viscosity-scaled residual
    stokes_reuse: bool = True
    skip_stokes_if_unchanged: bool = True
    warnings: list = field(default_factory=list, compare=False)

    # -- derived ------------------------------------------------------------
    @property
    def roughness(self) -> RoughnessProfile:
        return RoughnessProfile(self.profile, self.gamma0)

    @property
    def layer_h(self):
        return self.h_bulk * self.epsilon if self.h_layer is None else self.h_layer

    @property
    def n_steps(self):
        return int(round(self.T_end / self.dt))

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def outputs(self):
        return (self.T_end,) if self.output_times is None else tuple(self.output_times)

    def source_expressions(self):
        return Expression(self.source_s), Expression(self.source_f)

    def replace(self, **changes) -> "ScenarioConfig":
        return validate(dataclasses.replace(self, warnings=[], **changes))

    def to_dict(self):
        d = dataclasses.asdict(self)
        d.pop("warnings")
        d["viscosity"] = dataclasses.asdict(self.viscosity)
        d["u_motion"] = list(self.u_motion)
        if self.output_times is not None:
            d["output_times"] = list(self.output_times)
        return d


_FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig)} - {"warnings"}
_VISC_FIELDS = {f.name for f in dataclasses.fields(ViscosityLaw)}


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    """Check the data assumptions; raises ConfigError naming the violated one."""
    for name in ("kappa_s", "kappa_f", "alpha"):
        v = getattr(cfg, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ConfigError(f"positive coefficients: {name} must be positive, got {v}")
    if not isinstance(cfg.viscosity, ViscosityLaw):
        raise ConfigError("bounded viscosity: viscosity must be a ViscosityLaw")
    if cfg.profile not in PROFILE_KINDS:
        raise ConfigError(f"unknown profile {cfg.profile!r}")
    if not (0.0 < cfg.gamma0 < 1.0):
        raise ConfigError(f"gamma0 must lie in (0, 1), got {cfg.gamma0}")
    n = 1.0 / cfg.epsilon if cfg.epsilon > 0 else -1
    if cfg.epsilon <= 0 or abs(n - round(n)) > 1e-9 * n or round(n) < 2:
        raise ConfigError(f"1/epsilon must be an integer >= 2, got epsilon={cfg.epsilon}")
    u = tuple(float(c) for c in cfg.u_motion)
    if len(u) != 2:
        raise ConfigError("u_motion must have two components")
    if u[1] != 0.0:
        raise ConfigError("inflow assumption: u_motion must be horizontal (u_motion . e2 = 0)")
    cfg.u_motion = u
    if cfg.inflow not in INFLOW_FAMILIES:
        raise ConfigError(f"unknown inflow family {cfg.inflow!r}; expected one of {INFLOW_FAMILIES}")
    if cfg.inflow == "lin2" and not any(w.startswith("inflow assumption") for w in cfg.warnings):
        msg = "inflow assumption: inflow 'lin2' is nonzero above gamma0"
        cfg.warnings.append(msg)
        warnings.warn(msg, stacklevel=2)
    if u[0] <= 0 and cfg.inflow in INFLOW_FAMILIES:
        raise ConfigError("inflow assumption: the inflow must enter the layer (u_motion . e1 > 0)")
    for name in ("dt", "h_bulk", "macro_h", "cell_h"):
        v = getattr(cfg, name)
        if not (v > 0):
            raise ConfigError(f"{name} must be positive, got {v}")
    if cfg.T_end < 0:
        raise ConfigError("T_end must be nonnegative")
    if abs(cfg.T_end / cfg.dt - round(cfg.T_end / cfg.dt)) > 1e-8:
        raise ConfigError("T_end must be an integer multiple of dt")
    if cfg.h_layer is not None and not cfg.h_layer > 0:
        raise ConfigError("h_layer must be positive")
    if not (0 < cfg.solver_tol < 1 and 0 < cfg.stokes_tol < 1):
        raise ConfigError("solver tolerances must lie in (0, 1)")
    if cfg.line_samples < 2:
        raise ConfigError("line_samples must be at least 2")
    # initial data and sources: expressions parse and are bounded on a probe set
    rng = np.linspace(0.0, 1.0, 11)
    x1, x2 = np.meshgrid(rng, rng)
    env = dict(x1=x1, x2=cfg.epsilon * x2, eps=cfg.epsilon, gamma0=cfg.gamma0, gamma_len=1.0,
               y1=x1, y2=x2)
    for name, tag in (("source_s", "bounded sources"), ("source_f", "bounded sources"),
                      ("theta0_s", "bounded initial data"), ("theta0_f", "bounded initial data")):
        val = np.asarray(Expression(getattr(cfg, name))(**env), dtype=float)
        if not np.all(np.isfinite(val)):
            raise ConfigError(f"{tag}: {name} = {getattr(cfg, name)!r} is not bounded on the domain")
    if cfg.output_times is not None:
        ts = np.asarray(cfg.output_times, dtype=float)
        if np.any(ts < 0) or np.any(ts > cfg.T_end + 1e-12):
            raise ConfigError("output_times must lie in [0, T_end]")
    return cfg


def from_dict(data: dict) -> ScenarioConfig:
    data = dict(data or {})
    unknown = sorted(set(data) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    visc = data.pop("viscosity", None)
    if visc is not None:
        if isinstance(visc, ViscosityLaw):
            law = visc
        else:
            bad = sorted(set(visc) - _VISC_FIELDS)
            if bad:
                raise ConfigError(f"unknown viscosity keys: {bad}")
            try:
                law = ViscosityLaw(**visc)
            except ConfigError as exc:
                raise ConfigError(f"bounded viscosity: {exc}") from exc
        data["viscosity"] = law
    if "u_motion" in data:
        data["u_motion"] = tuple(data["u_motion"])
    if "output_times" in data and data["output_times"] is not None:
        data["output_times"] = tuple(float(t) for t in data["output_times"])
    if "profile" in data:
        data["profile"] = str(data["profile"]).lower()
    if "inflow" in data:
        data["inflow"] = str(data["inflow"]).lower()
    return validate(ScenarioConfig(**data))


def parse_config(path) -> ScenarioConfig:
    """Load a JSON scenario file (an empty object gives the default scenario)."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    text = p.read_text().strip()
    try:
        data = json.loads(text) if text else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a JSON object")
    return from_dict(data)


def default_config(**changes) -> ScenarioConfig:
    return from_dict(changes)


__all__ = ["ScenarioConfig", "Expression", "parse_config", "from_dict", "default_config", "validate",
           "INFLOW_FAMILIES"]
