import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughlayer.errors import ConfigError
from roughlayer.viscosity import ViscosityLaw, constant_viscosity, vft_viscosity

LAW = ViscosityLaw()


def test_reference_value_at_zero():
    # 0.2 exp(3 / (0 - 0.6)) = 0.2 exp(-5)
    assert LAW(0.0) == pytest.approx(0.2 * np.exp(-5.0), rel=1e-14)
    assert LAW(0.0) == pytest.approx(1.3476e-3, rel=1e-4)
    assert vft_viscosity(LAW, 0.0) == LAW(0.0)


def test_clamping():
    assert LAW(-5.0) == LAW(0.0)
    assert LAW(3.0) == LAW(0.5)
    assert LAW(0.5) == pytest.approx(0.2 * np.exp(-30.0), rel=1e-12)


def test_constant_law():
    law = constant_viscosity(0.7)
    assert np.all(law(np.linspace(-3, 3, 7)) == 0.7)
    assert law.lipschitz == 0.0 and law.is_constant


def test_clamp_containing_singularity_rejected():
    with pytest.raises(ConfigError):
        ViscosityLaw(clamp_hi=0.7)
    with pytest.raises(ConfigError):
        ViscosityLaw(mu0=-1.0)


@given(st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=50))
def test_bounds_hold_everywhere(thetas):
    lo, hi = LAW.bounds
    mu = LAW(np.array(thetas))
    assert np.all(mu >= lo * (1 - 1e-12)) and np.all(mu <= hi * (1 + 1e-12))


@given(st.floats(min_value=-1, max_value=1.5), st.floats(min_value=-1, max_value=1.5))
def test_lipschitz_bound(a, b):
    if a == b:
        return
    assert abs(LAW(a) - LAW(b)) <= LAW.lipschitz * abs(a - b) * (1 + 1e-6) + 1e-300


def test_monotone_on_clamp_interval_and_derivative():
    th = np.linspace(0.0, 0.5, 201)
    assert np.all(np.diff(LAW(th)) < 0)
    d = 1e-7
    mid = th[1:-1]
    fd = (LAW(mid + d) - LAW(mid - d)) / (2 * d)
    assert np.allclose(fd, LAW.derivative(mid), rtol=1e-5)
    assert np.all(LAW.derivative(np.array([-1.0, 0.7])) == 0.0)
