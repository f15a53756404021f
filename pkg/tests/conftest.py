import warnings

import pytest

from fbplab.profile import FluxParams, Grid


@pytest.fixture(autouse=True)
def _quiet_tail_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="convolve lost mass")
        yield


@pytest.fixture
def unit_flux() -> FluxParams:
    return FluxParams(1.0)


@pytest.fixture
def medium_grid() -> Grid:
    return Grid(1.0 / 128, 384)
