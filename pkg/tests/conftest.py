import warnings

import pytest

from roughlayer.config import default_config

# small meshes and short horizons shared by the unit and property tests
COARSE = dict(epsilon=0.5, h_bulk=0.15, h_layer=0.06, T_end=0.2, dt=0.05, macro_h=0.1, cell_h=0.05,
              line_samples=41)


def coarse_config(**changes):
    opts = dict(COARSE)
    opts.update(changes)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return default_config(**opts)


@pytest.fixture
def coarse_cfg():
    return coarse_config()
