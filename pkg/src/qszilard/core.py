"""Physical constants, unit handling and the geometry/grid descriptions."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np


class QSzilardError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(QSzilardError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UsageError(QSzilardError, ValueError):
    """Malformed request, e.g. an unknown unit tag or an empty sweep."""


class GeometryError(QSzilardError, ValueError):
    """Invalid box/partition geometry or a grid too coarse to represent it."""


@dataclass(frozen=True)
class PhysicalConstants:
    """SI constants used throughout (CODATA 2018, bare electron mass)."""

    h: float = 6.62607015e-34
    k: float = 1.380649e-23
    m: float = 9.1093837015e-31

    def __post_init__(self):
        for name in ("h", "k", "m"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"constant {name} must be positive, got {value!r}")

    @property
    def hbar(self) -> float:
        return self.h / (2.0 * math.pi)

    def as_dict(self) -> dict:
        return {"codata": "2018", "particle": "electron", **asdict(self)}


CODATA2018 = PhysicalConstants()

NM = 1e-9
ZJ = 1e-21


def _check_temperature(T: float) -> None:
    if not (T > 0 and math.isfinite(T)):
        raise DomainError(f"temperature must be positive and finite, got {T!r}")


def thermal_wavelength(T: float, c: PhysicalConstants = CODATA2018) -> float:
    """Thermal de Broglie wavelength ``h / sqrt(2 pi m k T)`` in metres."""
    _check_temperature(T)
    return c.h / math.sqrt(2.0 * math.pi * c.m * c.k * T)


ENERGY_UNITS = ("joule", "kT", "zJ")
_UNIT_ALIASES = {
    "joule": "joule", "j": "joule",
    "kt": "kT", "kt-units": "kT",
    "zj": "zJ", "zeptojoule": "zJ",
}


def _canonical_unit(unit: str) -> str:
    try:
        return _UNIT_ALIASES[unit.lower()]
    except (KeyError, AttributeError):
        raise UsageError(f"unknown energy unit {unit!r}; expected one of {ENERGY_UNITS}") from None


def convert_energy(x: float, T: float | None, unit: str,
                   c: PhysicalConstants = CODATA2018) -> float:
    """Express an energy given in joules in ``unit`` (joule, kT or zJ)."""
    unit = _canonical_unit(unit)
    if unit == "joule":
        return x
    if unit == "zJ":
        return x / ZJ
    _check_temperature(T)
    return x / (c.k * T)


def energy_to_joule(x: float, T: float | None, unit: str,
                    c: PhysicalConstants = CODATA2018) -> float:
    """Inverse of :func:`convert_energy`."""
    unit = _canonical_unit(unit)
    if unit == "joule":
        return x
    if unit == "zJ":
        return x * ZJ
    _check_temperature(T)
    return x * (c.k * T)


class Mode(str, Enum):
    FULL = "full-box"
    SUPERPOSED = "superposed-halves"
    LEFT = "localized-left"
    RIGHT = "localized-right"


@dataclass(frozen=True)
class Geometry:
    """Rectangular box with a zero-thickness partition.

    The partition is the segment ``x = l, Ly - d <= y <= Ly``: it enters
    through the top wall and reaches depth ``d``.  All lengths in metres.
    """

    Lx: float
    Ly: float
    d: float = 0.0
    l: float | None = None
    mode: Mode = Mode.FULL

    def __post_init__(self):
        if not (self.Lx > 0 and self.Ly > 0):
            raise GeometryError(f"box sides must be positive, got Lx={self.Lx}, Ly={self.Ly}")
        if self.l is None:
            object.__setattr__(self, "l", 0.5 * self.Lx)
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 0.0 <= self.d <= self.Ly * (1 + 1e-12):
            raise GeometryError(f"partition depth d={self.d} outside [0, Ly={self.Ly}]")
        if not 0.0 < self.l < self.Lx:
            raise GeometryError(f"partition position l={self.l} outside (0, Lx={self.Lx})")
        if self.mode is not Mode.FULL and not self.divided:
            raise GeometryError(f"mode {self.mode.value} requires a fully dividing partition (d = Ly)")

    @property
    def divided(self) -> bool:
        return math.isclose(self.d, self.Ly, rel_tol=1e-12)

    @classmethod
    def from_nm(cls, Lx: float, Ly: float, d: float = 0.0, l: float | None = None,
                mode: Mode | str = Mode.FULL) -> "Geometry":
        return cls(Lx * NM, Ly * NM, d * NM, None if l is None else l * NM, Mode(mode))


@dataclass(frozen=True)
class GridSpec:
    """Uniform finite-difference grid spacing (metres)."""

    hx: float = 0.05 * NM
    hy: float = 0.05 * NM

    def __post_init__(self):
        if not (self.hx > 0 and self.hy > 0):
            raise GeometryError(f"grid spacings must be positive, got {self.hx}, {self.hy}")

    @classmethod
    def from_nm(cls, hx: float, hy: float | None = None) -> "GridSpec":
        return cls(hx * NM, (hx if hy is None else hy) * NM)

    def resolve(self, g: Geometry) -> "ResolvedGrid":
        return ResolvedGrid.build(g, self)


def _intervals(length: float, h: float, what: str) -> int:
    n = round(length / h)
    if n < 2 or abs(n * h - length) > 1e-6 * h:
        raise GeometryError(f"{what}={length:g} m is not a whole number of grid cells of {h:g} m")
    return n


@dataclass(frozen=True)
class ResolvedGrid:
    """Grid laid over a particular geometry with the partition snapped to nodes.

    ``nx``/``ny`` count cells, so node indices run ``0..nx`` and ``0..ny``.
    The partition occupies column ``il`` for rows ``jd..ny``.
    """

    nx: int
    ny: int
    hx: float
    hy: float
    il: int
    jd: int
    l: float
    d: float

    @classmethod
    def build(cls, g: Geometry, grid: GridSpec) -> "ResolvedGrid":
        nx = _intervals(g.Lx, grid.hx, "Lx")
        ny = _intervals(g.Ly, grid.hy, "Ly")
        hx, hy = g.Lx / nx, g.Ly / ny
        il = int(round(g.l / hx))
        n_depth = int(round(g.d / hy))
        if n_depth > 0 and (il < 3 or nx - il < 3):
            raise GeometryError(
                f"partition at l={g.l:g} m leaves fewer than 3 grid cells on one side")
        return cls(nx, ny, hx, hy, il, ny - n_depth, il * hx, n_depth * hy)

    @property
    def x(self):
        return np.arange(self.nx + 1) * self.hx

    @property
    def y(self):
        return np.arange(self.ny + 1) * self.hy

    def free_mask(self, mode: Mode = Mode.FULL):
        """Boolean (ny+1, nx+1) array of nodes carrying unknowns, row-major in y."""
        mask = np.zeros((self.ny + 1, self.nx + 1), dtype=bool)
        mask[1:-1, 1:-1] = True
        if self.jd <= self.ny:
            mask[self.jd:, self.il] = False
        if mode is Mode.LEFT:
            mask[:, self.il:] = False
        elif mode is Mode.RIGHT:
            mask[:, :self.il + 1] = False
        return mask

    def as_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "hx_m": self.hx, "hy_m": self.hy,
                "l_m": self.l, "d_m": self.d}
