import numpy as np
import pytest

from whiskersim.calibration import default_domain, fit_poly, sample_grid
from whiskersim.localization import build_characterized_model
from whiskersim.whisker import WhiskerParams

REGION = (10.0, 76.0, 3.0, 45.0)


@pytest.fixture(scope="session")
def params():
    return WhiskerParams()


@pytest.fixture(scope="session")
def quiet_params():
    return WhiskerParams(noise_std=0.0)


@pytest.fixture(scope="session")
def grid(quiet_params):
    return sample_grid(quiet_params, REGION, 3.0, seed=0)


@pytest.fixture(scope="session")
def poly(grid):
    model, _ = fit_poly(grid, default_domain(grid.region))
    return model


@pytest.fixture(scope="session")
def cm(poly, quiet_params):
    return build_characterized_model(poly, quiet_params.shaft_length,
                                     z_range=quiet_params.z_range)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
