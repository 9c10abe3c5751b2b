import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from qszilard.core import (CODATA2018, NM, ZJ, DomainError, Geometry, GeometryError, GridSpec,
                           Mode, PhysicalConstants, UsageError, convert_energy, energy_to_joule,
                           thermal_wavelength)

temps = st.floats(1.0, 1e5)


def test_constants_are_codata_2018():
    assert CODATA2018.h == 6.62607015e-34
    assert CODATA2018.k == 1.380649e-23
    assert CODATA2018.m == 9.1093837015e-31
    assert CODATA2018.hbar == pytest.approx(1.054571817e-34, rel=1e-9)


def test_constants_reject_nonpositive():
    with pytest.raises(DomainError):
        PhysicalConstants(m=0.0)


def test_thermal_wavelength_oracle():
    mpmath.mp.dps = 30
    c = CODATA2018
    ref = mpmath.mpf(c.h) / mpmath.sqrt(2 * mpmath.pi * mpmath.mpf(c.m) * mpmath.mpf(c.k) * 300)
    assert thermal_wavelength(300.0) == pytest.approx(float(ref), rel=1e-14)
    assert thermal_wavelength(300.0) / NM == pytest.approx(4.3035, abs=1e-4)


@given(temps)
def test_thermal_wavelength_scaling(T):
    assert thermal_wavelength(4 * T) == pytest.approx(0.5 * thermal_wavelength(T), rel=1e-14)


@pytest.mark.parametrize("T", [0.0, -1.0, math.nan, math.inf])
def test_bad_temperature(T):
    with pytest.raises(DomainError):
        thermal_wavelength(T)


@given(st.floats(-1e-18, 1e-18), temps, st.sampled_from(["joule", "kT", "zJ", "kt", "J"]))
def test_unit_round_trip(x, T, unit):
    assert energy_to_joule(convert_energy(x, T, unit), T, unit) == pytest.approx(x, rel=1e-14, abs=1e-40)


def test_unit_values():
    kT = CODATA2018.k * 300
    assert convert_energy(kT, 300, "kT") == 1.0
    assert convert_energy(2 * ZJ, None, "zJ") == pytest.approx(2.0)
    assert convert_energy(5.0, None, "joule") == 5.0


def test_unknown_unit():
    with pytest.raises(UsageError):
        convert_energy(1.0, 300, "eV")


def test_geometry_defaults_and_validation():
    g = Geometry.from_nm(20, 10)
    assert g.l == pytest.approx(10 * NM)
    assert g.mode is Mode.FULL and not g.divided
    assert Geometry.from_nm(20, 10, 10).divided
    with pytest.raises(GeometryError):
        Geometry.from_nm(20, 10, 11)
    with pytest.raises(GeometryError):
        Geometry.from_nm(20, 10, 5, 20)
    with pytest.raises(GeometryError):
        Geometry.from_nm(20, 10, 5, mode=Mode.LEFT)
    with pytest.raises(GeometryError):
        Geometry.from_nm(-1, 10)


def test_grid_must_fit_box():
    with pytest.raises(GeometryError):
        GridSpec.from_nm(0.3).resolve(Geometry.from_nm(20, 10))


def test_three_cell_rule():
    grid = GridSpec.from_nm(0.5)
    with pytest.raises(GeometryError):
        grid.resolve(Geometry.from_nm(20, 10, 10, 1.0))
    grid.resolve(Geometry.from_nm(20, 10, 10, 1.5))
    grid.resolve(Geometry.from_nm(20, 10, 0.0, 0.5))  # no partition, no constraint


def test_free_masks():
    rg = GridSpec.from_nm(0.5).resolve(Geometry.from_nm(20, 10, 10))
    nx, ny, il = rg.nx, rg.ny, rg.il
    assert (nx, ny, il) == (40, 20, 20)
    full = rg.free_mask(Mode.FULL)
    assert full.shape == (ny + 1, nx + 1)
    assert full.sum() == (nx - 1) * (ny - 1) - (ny - 1)
    left, right = rg.free_mask(Mode.LEFT), rg.free_mask(Mode.RIGHT)
    assert left.sum() == right.sum() == (il - 1) * (ny - 1)
    assert not np.any(left & right)
    assert np.array_equal(left | right, full)


def test_partial_partition_mask():
    rg = GridSpec.from_nm(0.5).resolve(Geometry.from_nm(20, 10, 4))
    mask = rg.free_mask()
    assert rg.jd == 12
    assert not mask[12:, rg.il].any()
    assert mask[1:12, rg.il].all()
