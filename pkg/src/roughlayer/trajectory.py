"""Time-indexed solution records and their CSV output."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LINE_COLUMNS = ("t", "x1", "theta_f", "pressure_eps2", "u1")


@dataclass
class SolutionTrajectory:
    """Fields at recorded times plus line samples in the shared CSV schema.

    ``fields[i]`` maps a field name to its coefficient vector at ``times[i]``;
    ``spaces`` gives the function space of each name.
    """

    kind: str
    spaces: dict = field(default_factory=dict)
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    line: list = field(default_factory=list)      # (t, dict of columns)
    meta: dict = field(default_factory=dict)
    problem: object = field(default=None, repr=False)

    def record(self, t, fields, line=None):
        self.times.append(float(t))
        self.fields.append(fields)
        if line is not None:
            self.line.append((float(t), line))

    def __len__(self):
        return len(self.times)

    def at(self, t, tol=1e-9):
        """Fields at time ``t`` (KeyError when not recorded)."""
        for ti, f in zip(self.times, self.fields):
            if abs(ti - t) <= tol:
                return f
        raise KeyError(f"time {t} not recorded")

    def line_rows(self):
        rows = []
        for t, cols in self.line:
            for i in range(len(cols["x1"])):
                rows.append((t, cols["x1"][i], cols["theta_f"][i], cols["pressure_eps2"][i], cols["u1"][i]))
        return rows

    def write_line_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LINE_COLUMNS)
            for row in self.line_rows():
                w.writerow([repr(float(v)) for v in row])
        return path

    def write_field_csvs(self, directory, prefix=None):
        """One CSV (x1, x2, value) per scalar field per recorded output time."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        out = []
        line_times = {t for t, _ in self.line}
        prefix = prefix or self.kind
        for t, fields in zip(self.times, self.fields):
            if line_times and t not in line_times:
                continue
            for name, values in fields.items():
                if values is None or name not in self.spaces:
                    continue
                space = self.spaces[name]
                xy = space.dof_coordinates()
                comps = values.reshape(space.components, -1)
                labels = [name] if space.components == 1 else [f"{name}{c + 1}" for c in range(space.components)]
                for label, vals in zip(labels, comps):
                    p = directory / f"{prefix}_{label}_t{t:.4f}.csv"
                    with p.open("w", newline="") as fh:
                        w = csv.writer(fh)
                        w.writerow(("x1", "x2", "value"))
                        for (x, y), v in zip(xy, vals):
                            w.writerow((repr(float(x)), repr(float(y)), repr(float(v))))
                    out.append(p)
        return out


def read_line_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {c: np.atleast_1d(data[c]) for c in LINE_COLUMNS}
