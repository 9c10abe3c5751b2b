import time

import pytest

from qszilard import CODATA2018, Geometry, GridSpec
from qszilard.cycle import sweep_expansion, sweep_insertion

T300 = 300.0
KT300 = CODATA2018.k * T300


@pytest.fixture(scope="session")
def base_geometry():
    return Geometry.from_nm(20.0, 10.0)


@pytest.fixture(scope="session")
def insertion_sweep(base_geometry):
    """The 41-point default insertion sweep; expensive, computed once."""
    t0 = time.perf_counter()
    curve = sweep_insertion(base_geometry, T300, grid=GridSpec(), workers=1)
    curve.meta["elapsed_s"] = time.perf_counter() - t0
    return curve


@pytest.fixture(scope="session")
def superposed_sweep(base_geometry):
    t0 = time.perf_counter()
    curve = sweep_expansion(base_geometry, T300, localized=False, workers=1)
    curve.meta["elapsed_s"] = time.perf_counter() - t0
    return curve


@pytest.fixture(scope="session")
def localized_sweep(base_geometry):
    return sweep_expansion(base_geometry, T300, localized=True, workers=1)
