"""Command-line front end: configuration, subcommand dispatch and result files.

Usage::

    roughlayer <subcommand> --config scenario.json --out results/ [--eps-list 0.2,0.1,0.05] [--threads N]

Every run writes ``manifest.json`` next to its CSV/JSON outputs.  Errors are
reported as one JSON object on stderr with a nonzero exit code.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (QUANTITIES, convergence_study, micro_vertical_profile, reconstructed_vertical_profile)
from .cell import compute_effective_coefficients
from .config import ScenarioConfig, default_config, from_dict, parse_config
from .errors import ConfigError, RoughLayerError
from .geometry import RoughnessProfile
from .macro import build_effective_problem, run_macro
from .micro import MicroState, run_micro

SUBCOMMANDS = ("cell", "micro", "macro", "convergence", "sweep-inflow", "sweep-height", "sweep-shape")
COEFFICIENT_SUITE = (("sine", 0.1), ("sine", 0.5), ("sine", 0.9), ("rect", 0.1), ("rect", 0.5), ("rect", 0.9))
COEFFICIENT_COLUMNS = ("profile", "gamma0", "cell_h", "kappa_ratio", "kappa_tilde", "K", "xi0_bar", "z_volume",
                       "gamma_measure", "vertical_xi", "vertical_xi0")
CONVERGENCE_COLUMNS = ("eps",) + tuple(f"err_{q}" for q in QUANTITIES)
PROFILE_COLUMNS = ("x2", "u1")
NORMALIZED_SOURCE = "1/gamma_len"


@dataclass
class RunManifest:
    """Record of one CLI run; ``outputs`` are paths relative to the output directory."""

    command: str
    config: dict
    version: str = __version__
    started: str = ""
    wall_clock: float = 0.0
    outputs: list = field(default_factory=list)
    coefficients: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def add(self, root: Path, path: Path):
        self.outputs.append(str(Path(path).relative_to(root)))

    def check(self, root):
        """Every listed output exists, is non-empty and parses."""
        root = Path(root)
        for rel in self.outputs:
            p = root / rel
            if not p.is_file() or p.stat().st_size == 0:
                raise RoughLayerError(f"manifest output {rel} is missing or empty")
            if p.suffix == ".json":
                json.loads(p.read_text())
            elif p.suffix == ".csv":
                with p.open(newline="") as fh:
                    rows = list(csv.reader(fh))
                width = len(rows[0])
                if width == 0 or any(len(r) != width for r in rows[1:]):
                    raise RoughLayerError(f"manifest output {rel} has ragged rows")
        return True

    def to_dict(self):
        return {"command": self.command, "version": self.version, "started": self.started,
                "wall_clock": self.wall_clock, "outputs": list(self.outputs),
                "coefficients": self.coefficients, "warnings": self.warnings, "config": self.config}

    def write(self, root):
        p = Path(root) / "manifest.json"
        p.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable) + "\n")
        return p


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def coefficient_row(coeffs, gamma0):
    rec = coeffs.as_record()
    kind = coeffs.profile.split("-")[0]
    return [kind, gamma0] + [rec[c] for c in COEFFICIENT_COLUMNS[2:]]


def _public_record(coeffs):
    rec = coeffs.as_record()
    rec.pop("seconds", None)      # keeps outputs reproducible
    return rec


# -- subcommands -------------------------------------------------------------

def run_cell(cfg: ScenarioConfig, out: Path, manifest: RunManifest, suite=False, **_):
    rows = COEFFICIENT_SUITE if suite else ((cfg.profile, cfg.gamma0),)
    table = []
    for kind, g0 in rows:
        c = compute_effective_coefficients(RoughnessProfile(kind, g0), h=cfg.cell_h, kappa_f=cfg.kappa_f,
                                           u_motion=cfg.u_motion)
        table.append(coefficient_row(c, g0))
        manifest.coefficients.append(_public_record(c))
    manifest.add(out, write_csv(out / "coefficients.csv", COEFFICIENT_COLUMNS, table))


def run_micro_cmd(cfg: ScenarioConfig, out: Path, manifest: RunManifest, **_):
    traj = run_micro(cfg)
    manifest.add(out, traj.write_line_csv(out / "micro_line.csv"))
    for p in traj.write_field_csvs(out / "fields", "micro"):
        manifest.add(out, p)


def run_macro_cmd(cfg: ScenarioConfig, out: Path, manifest: RunManifest, **_):
    traj = run_macro(cfg)
    coeffs = traj.problem.coeffs
    manifest.coefficients.append(_public_record(coeffs))
    manifest.add(out, write_csv(out / "coefficients.csv", COEFFICIENT_COLUMNS, [coefficient_row(coeffs, cfg.gamma0)]))
    manifest.add(out, traj.write_line_csv(out / "macro_line.csv"))
    for p in traj.write_field_csvs(out / "fields", "macro"):
        manifest.add(out, p)


def run_convergence(cfg: ScenarioConfig, out: Path, manifest: RunManifest, eps_list=(0.2, 0.1, 0.05),
                    macro_h=0.01, **_):
    def progress(e, errs, info):
        print(f"eps={e:g} " + " ".join(f"{q}={errs[q]:.4e}" for q in QUANTITIES)
              + f" ({info['seconds']:.1f}s)", file=sys.stderr, flush=True)

    report = convergence_study(cfg, eps_list, macro_h=macro_h, progress=progress)
    manifest.add(out, write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS, report.rows()))
    summary = {"eps": report.eps, "slopes": report.slopes, "fit_residuals": report.residuals,
               "macro_h": macro_h, "coefficients": report.meta["coefficients"]}
    p = out / "slopes.json"
    p.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    manifest.add(out, p)


def sweep_members(name, cfg: ScenarioConfig):
    """Member scenarios of a comparison sweep as ``(label, config)`` pairs.

    Assumption warnings are kept on each member's ``warnings`` list.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return _sweep_members(name, cfg)


def _sweep_members(name, cfg):
    if name == "sweep-inflow":
        return [(f"inflow_{f}", cfg.replace(inflow=f)) for f in ("lin", "quad", "lin2")]
    base = dict(inflow="lin2", source_s=NORMALIZED_SOURCE)
    if name == "sweep-height":
        return [(f"gamma0_{g:g}", cfg.replace(gamma0=g, **base)) for g in (0.1, 0.5, 0.9)]
    if name == "sweep-shape":
        return [(f"profile_{k}", cfg.replace(profile=k, gamma0=0.5, **base)) for k in ("sine", "rect")]
    raise ConfigError(f"{name} is not a sweep")


def run_member(cfg_dict, directory, macro_only=False, x1_profile=0.5):
    """Macro (and unless ``macro_only`` micro) run of one sweep member; returns written paths."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")     # already recorded on the parent's configs
        cfg = from_dict(cfg_dict)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    coeffs, sols = compute_effective_coefficients(cfg.roughness, h=cfg.cell_h, kappa_f=cfg.kappa_f,
                                                  u_motion=cfg.u_motion, return_solutions=True)
    macro = run_macro(cfg, build_effective_problem(cfg, coeffs))
    paths = [write_csv(directory / "coefficients.csv", COEFFICIENT_COLUMNS, [coefficient_row(coeffs, cfg.gamma0)]),
             macro.write_line_csv(directory / "macro_line.csv")]
    x2, u1 = reconstructed_vertical_profile(cfg, sols, coeffs, macro.problem.u_bar, x1_profile)
    paths.append(write_csv(directory / "vertical_u1_effective.csv", PROFILE_COLUMNS, zip(x2, u1)))
    if not macro_only:
        micro = run_micro(cfg)
        paths.append(micro.write_line_csv(directory / "micro_line.csv"))
        f = micro.fields[-1]
        state = MicroState(f["theta_s"], f["theta_f"], f["u"], f["p"], micro.times[-1])
        x2, u1 = micro_vertical_profile(micro.problem, state, x1_profile)
        paths.append(write_csv(directory / "vertical_u1_micro.csv", PROFILE_COLUMNS, zip(x2, u1)))
    return [str(p) for p in paths], _public_record(coeffs)


def run_sweep(cfg: ScenarioConfig, out: Path, manifest: RunManifest, name="", threads=1, macro_only=False, **_):
    members = sweep_members(name, cfg)
    jobs = [(m.to_dict(), str(out / label), macro_only) for label, m in members]
    for label, m in members:
        manifest.warnings.extend(f"{label}: {w}" for w in m.warnings if f"{label}: {w}" not in manifest.warnings)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            results = list(pool.map(run_member, *zip(*jobs)))
    else:
        results = [run_member(*j) for j in jobs]
    for paths, rec in results:
        for p in paths:
            manifest.add(out, Path(p))
        manifest.coefficients.append(rec)


_DISPATCH = {"cell": run_cell, "micro": run_micro_cmd, "macro": run_macro_cmd, "convergence": run_convergence,
             "sweep-inflow": run_sweep, "sweep-height": run_sweep, "sweep-shape": run_sweep}


def run_subcommand(name, config: ScenarioConfig, out, **options) -> RunManifest:
    """Run one subcommand into ``out`` and return its (written and checked) manifest."""
    if name not in _DISPATCH:
        raise ConfigError(f"unknown subcommand {name!r}; expected one of {SUBCOMMANDS}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command=name, config=config.to_dict(), warnings=list(config.warnings),
                           started=time.strftime("%Y-%m-%dT%H:%M:%S"))
    t0 = time.perf_counter()
    _DISPATCH[name](config, out, manifest, name=name, **options)
    manifest.wall_clock = time.perf_counter() - t0
    manifest.write(out)
    manifest.check(out)
    return manifest


# -- argument handling -------------------------------------------------------

def parse_eps_list(text):
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad eps list {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("eps list is empty")
    return vals


_HELP = {
    "cell": "effective coefficients from the cell problems",
    "micro": "resolved layer run at the configured eps",
    "macro": "homogenized run with cell coefficients",
    "convergence": "layer vs homogenized errors over --eps-list",
    "sweep-inflow": "lin, quad and lin2 inflow profiles",
    "sweep-height": "gamma0 in {0.1, 0.5, 0.9} with lin2 inflow",
    "sweep-shape": "sine and rect profiles at gamma0 = 0.5",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="roughlayer",
                                     description="Layer and homogenized heat/flow runs for thin rough layers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", type=Path, help="JSON scenario file (default: the reference scenario)")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--eps-list", type=parse_eps_list, default=(0.2, 0.1, 0.05),
                       help="comma-separated eps values (convergence only)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweep members")
        if name == "cell":
            p.add_argument("--suite", action="store_true", help="all six profile/height combinations")
        if name == "convergence":
            p.add_argument("--macro-h", type=float, default=0.01)
        if name.startswith("sweep"):
            p.add_argument("--macro-only", action="store_true", help="skip the resolved layer runs")
    return parser


def _error_json(exc):
    return json.dumps({"error": type(exc).__name__, "message": str(exc),
                       "diagnostics": getattr(exc, "diagnostics", {}) or {}}, default=_jsonable)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config) if args.config else default_config()
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        opts = {"threads": args.threads}
        if args.command == "cell":
            opts["suite"] = args.suite
        elif args.command == "convergence":
            opts.update(eps_list=args.eps_list, macro_h=args.macro_h)
        elif args.command.startswith("sweep"):
            opts["macro_only"] = args.macro_only
        manifest = run_subcommand(args.command, cfg, args.out, **opts)
    except (RoughLayerError, OSError) as exc:
        print(_error_json(exc), file=sys.stderr)
        return 1
    print(json.dumps({"out": str(args.out), "outputs": len(manifest.outputs),
                      "wall_clock": round(manifest.wall_clock, 3)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
