import numpy as np
import pytest

from roughlayer.trajectory import LINE_COLUMNS, SolutionTrajectory, read_line_csv
from roughlayer.macro import run_macro


def _toy():
    tr = SolutionTrajectory(kind="toy")
    x = np.linspace(0, 1, 4)
    for t in (0.0, 0.5):
        tr.record(t, {"a": x * t}, {"x1": x, "theta_f": x + t, "pressure_eps2": -x, "u1": np.full(4, 0.25)})
    return tr


def test_record_and_lookup():
    tr = _toy()
    assert len(tr) == 2
    assert np.allclose(tr.at(0.5)["a"], np.linspace(0, 0.5, 4))
    with pytest.raises(KeyError):
        tr.at(0.3)
    assert len(tr.line_rows()) == 8


def test_line_csv_roundtrip_is_exact(tmp_path):
    tr = _toy()
    tr.line[1][1]["theta_f"][2] = 1 / 3
    path = tr.write_line_csv(tmp_path / "line.csv")
    assert path.read_text().splitlines()[0] == ",".join(LINE_COLUMNS)
    back = read_line_csv(path)
    assert back["theta_f"][6] == 1 / 3
    assert np.array_equal(back["t"], np.repeat([0.0, 0.5], 4))


def test_field_csvs(tmp_path, coarse_cfg):
    tr = run_macro(coarse_cfg)
    paths = tr.write_field_csvs(tmp_path / "fields")
    names = sorted(p.name for p in paths)
    assert any("theta_s" in n for n in names) and any("theta_f" in n for n in names)
    for p in paths:
        data = np.genfromtxt(p, delimiter=",", names=True)
        assert data.dtype.names == ("x1", "x2", "value")
        assert np.all(np.isfinite(data["value"]))
