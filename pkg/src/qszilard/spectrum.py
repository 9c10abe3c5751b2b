"""Energy spectra of the box, the rectangle and the partitioned rectangle."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfcx

from .core import (CODATA2018, NM, Geometry, GridSpec, Mode, PhysicalConstants,
                   QSzilardError, ResolvedGrid, _check_temperature)
from .eigensolve import dirichlet_spectrum

EPS_TAIL = 1e-15
DEFAULT_CUTOFF_KT = 40.0
MERGE_RTOL = 1e-12


class SpectrumError(QSzilardError):
    """No level lies below the requested cutoff."""


class TruncationError(QSzilardError):
    """Retained levels miss more Boltzmann weight than allowed."""

    def __init__(self, message, required_e_max=None):
        self.required_e_max = required_e_max
        super().__init__(message)


@dataclass(frozen=True)
class Spectrum:
    """Ascending energy levels (J) with degeneracies.

    ``cutoff`` is the energy below which the list is complete.  ``weyl``
    holds ``(dimension, measure)`` of the domain (length in 1D, area in 2D)
    and feeds the tail estimate; hand-built spectra may leave it ``None``.
    """

    energies: np.ndarray
    degeneracies: np.ndarray
    provenance: str
    cutoff: float = math.inf
    weyl: tuple | None = None
    constants: PhysicalConstants = CODATA2018

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        g = np.asarray(self.degeneracies, dtype=np.int64)
        if e.ndim != 1 or e.shape != g.shape:
            raise ValueError("energies and degeneracies must be 1-D and of equal length")
        if e.size == 0:
            raise SpectrumError("spectrum has no levels")
        if np.any(np.diff(e) <= 0):
            raise ValueError("energies must be strictly ascending")
        if np.any(g < 1):
            raise ValueError("degeneracies must be >= 1")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "degeneracies", g)

    @classmethod
    def from_values(cls, values, provenance, rtol=MERGE_RTOL, **kw):
        """Build from an unsorted multiset of energies, merging near-equal values."""
        e, g = merge_levels(values, rtol)
        return cls(e, g, provenance, **kw)

    def __len__(self):
        return self.energies.size

    @property
    def ground(self) -> float:
        return float(self.energies[0])

    def expanded(self) -> np.ndarray:
        """Energies repeated according to degeneracy."""
        return np.repeat(self.energies, self.degeneracies)

    def tail_weight(self, T: float) -> float:
        """Estimated fraction of the Boltzmann weight above ``cutoff``."""
        if self.weyl is None or not math.isfinite(self.cutoff):
            return 0.0
        c = self.constants
        kT = c.k * T
        x = (self.energies - self.ground) / kT
        retained = math.fsum(self.degeneracies * np.exp(-x))
        return weyl_tail(self.weyl, self.cutoff, self.ground, T, c) / retained

    def required_cutoff(self, T: float, eps: float = EPS_TAIL) -> float:
        """Cutoff energy whose Weyl tail estimate drops below ``eps``."""
        kT = self.constants.k * T
        e = self.ground + kT
        while weyl_tail(self.weyl, e, self.ground, T, self.constants) > eps:
            e += kT
        return e


def merge_levels(values, rtol=MERGE_RTOL):
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return v, np.zeros(0, dtype=np.int64)
    starts = [0]
    for i in range(1, v.size):
        if v[i] - v[starts[-1]] > rtol * abs(v[starts[-1]]):
            starts.append(i)
    starts = np.array(starts)
    counts = np.diff(np.append(starts, v.size))
    return v[starts], counts


def weyl_tail(weyl, e_cut, e_ref, T, c=CODATA2018):
    """Weight ``int_{e_cut}^inf rho(E) exp(-(E - e_ref)/kT) dE`` for Weyl density rho.

    In 1D the integral is a Gaussian one (erfc); in 2D the leading Weyl
    density is constant and the integral is a plain exponential.
    """
    dim, measure = weyl
    kT = c.k * T
    if dim == 1:
        # rho(E) = L / (pi hbar) * sqrt(m / (2E))
        pref = measure / (math.pi * c.hbar) * math.sqrt(c.m / 2.0) * math.sqrt(math.pi * kT)
        return pref * erfcx(math.sqrt(e_cut / kT)) * math.exp(-(e_cut - e_ref) / kT)
    if dim == 2:
        rho = measure * c.m / (2.0 * math.pi * c.hbar**2)
        return rho * kT * math.exp(-(e_cut - e_ref) / kT)
    raise ValueError(f"unsupported dimension {dim}")


def cutoff_energy(ground: float, T: float, cutoff_kt: float = DEFAULT_CUTOFF_KT,
                  c: PhysicalConstants = CODATA2018) -> float:
    _check_temperature(T)
    return ground + cutoff_kt * c.k * T


def level_1d(n, L, c=CODATA2018):
    return n**2 * c.h**2 / (8.0 * c.m * L**2)


def energies_1d(L: float, E_max: float, c: PhysicalConstants = CODATA2018) -> Spectrum:
    """Particle-in-a-box levels ``n^2 h^2 / (8 m L^2)`` up to ``E_max``."""
    if not L > 0:
        raise QSzilardError(f"box length must be positive, got {L!r}")
    e1 = level_1d(1, L, c)
    if E_max < e1:
        raise SpectrumError(f"E_max={E_max:g} J lies below the ground level {e1:g} J")
    n_max = int(math.floor(math.sqrt(E_max / e1) * (1 + 1e-15)))
    n = np.arange(1, n_max + 1, dtype=float)
    e = n**2 * e1
    e = e[e <= E_max]
    return Spectrum(e, np.ones(e.size, dtype=np.int64), "analytic-1d", E_max, (1, L), c)


def energies_rect(Lx: float, Ly: float, E_max: float,
                  c: PhysicalConstants = CODATA2018) -> Spectrum:
    """Separable rectangle levels ``E_nx(Lx) + E_ny(Ly)`` up to ``E_max``."""
    ex1, ey1 = level_1d(1, Lx, c), level_1d(1, Ly, c)
    if E_max < ex1 + ey1:
        raise SpectrumError(f"E_max={E_max:g} J lies below the ground level {ex1 + ey1:g} J")
    nx = np.arange(1, int(math.sqrt((E_max - ey1) / ex1)) + 2, dtype=float)
    ny = np.arange(1, int(math.sqrt((E_max - ex1) / ey1)) + 2, dtype=float)
    total = (nx[:, None]**2 * ex1 + ny[None, :]**2 * ey1).ravel()
    total = total[total <= E_max]
    return Spectrum.from_values(total, "analytic-rect", cutoff=E_max, weyl=(2, Lx * Ly), constants=c)


def default_spectrum_1d(L: float, T: float, cutoff_kt: float = DEFAULT_CUTOFF_KT,
                        c: PhysicalConstants = CODATA2018) -> Spectrum:
    return energies_1d(L, cutoff_energy(level_1d(1, L, c), T, cutoff_kt, c), c)


# ---------------------------------------------------------------------------
# partitioned rectangle

@dataclass(frozen=True)
class EigenBasis:
    """Numeric spectrum plus grid eigenfunctions.

    ``energies`` lists every eigenvalue individually (ascending); ``vectors``
    has one row per eigenvalue holding the values on the free nodes of
    ``mask``, normalised so that ``sum |psi|^2 hx hy = 1``.
    """

    spectrum: Spectrum
    energies: np.ndarray
    vectors: np.ndarray | None
    grid: ResolvedGrid
    mask: np.ndarray
    geometry: Geometry
    info: dict = field(default_factory=dict)

    def field(self, i: int) -> np.ndarray:
        out = np.zeros(self.mask.shape)
        out[self.mask] = self.vectors[i]
        return out


def _operator_scale(c):
    # operator eigenvalues are in nm^-2
    return c.hbar**2 / (2.0 * c.m) / NM**2


def solve_partitioned_2d(g: Geometry, grid: GridSpec = GridSpec(), E_max: float | None = None,
                         c: PhysicalConstants = CODATA2018, *, T: float | None = None,
                         cutoff_kt: float = DEFAULT_CUTOFF_KT, vectors: bool = True,
                         method: str = "auto") -> EigenBasis:
    """Lowest eigenpairs of the Dirichlet problem on the partitioned rectangle.

    Either pass ``E_max`` explicitly or a temperature ``T``, in which case the
    cutoff is ``E_ground + cutoff_kt * kT``.  ``mode`` of the geometry selects
    the whole domain or a single compartment.
    """
    rg = grid.resolve(g)
    mask = rg.free_mask(g.mode)
    scale = _operator_scale(c)
    hx, hy = rg.hx / NM, rg.hy / NM
    if E_max is None:
        if T is None:
            raise ValueError("give E_max or T")
        _check_temperature(T)
        res = dirichlet_spectrum(mask, hx, hy, window=cutoff_kt * c.k * T / scale,
                                 vectors=vectors, method=method)
    else:
        res = dirichlet_spectrum(mask, hx, hy, e_max=E_max / scale, vectors=vectors, method=method)
    if res.values.size == 0:
        raise SpectrumError(f"no eigenvalue below E_max={E_max:g} J")
    energies = res.values * scale
    area = mask.sum() * rg.hx * rg.hy
    spec = Spectrum.from_values(energies, "numeric-fd", cutoff=res.cutoff * scale,
                                weyl=(2, area), constants=c)
    vecs = None
    if vectors:
        vecs = np.ascontiguousarray(res.vectors.T) / math.sqrt(rg.hx * rg.hy)
    info = {"blocks": res.n_blocks, "free_nodes": int(mask.sum())}
    return EigenBasis(spec, energies, vecs, rg, mask, g, info)


# ---------------------------------------------------------------------------
# densities

@dataclass(frozen=True)
class ScalarField:
    """Samples on the full node grid, row-major with y along rows (SI units)."""

    values: np.ndarray
    hx: float
    hy: float
    quantity: str = "density"

    @property
    def shape(self):
        return self.values.shape

    def integral(self) -> float:
        return math.fsum(self.values.ravel()) * self.hx * self.hy

    def to_csv(self, path, header_lines=()):
        ny1, nx1 = self.values.shape
        x = np.arange(nx1) * self.hx / NM
        y = np.arange(ny1) * self.hy / NM
        with open(path, "w") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write("x_nm,y_nm,density_per_nm2\n")
            dens = self.values * NM**2
            for j in range(ny1):
                for i in range(nx1):
                    fh.write(f"{x[i]:.9g},{y[j]:.9g},{dens[j, i]:.9g}\n")

    def to_dict(self) -> dict:
        ny1, nx1 = self.values.shape
        return {"quantity": self.quantity, "unit": "1/nm^2", "layout": "row-major, y rows",
                "nx_nodes": nx1, "ny_nodes": ny1, "hx_nm": self.hx / NM, "hy_nm": self.hy / NM,
                "values": (self.values * NM**2).ravel().tolist()}

    def to_json(self, path, extra=None):
        doc = self.to_dict()
        if extra:
            doc = {**extra, **doc}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)


def boltzmann_probabilities(energies, T, c=CODATA2018):
    """Normalised weights for a flat list of levels (ground factored out)."""
    x = (np.asarray(energies) - np.min(energies)) / (c.k * T)
    w = np.exp(-x)
    return w / math.fsum(w)


def density_map(basis: EigenBasis, T: float, c: PhysicalConstants = CODATA2018,
                eps_tail: float = EPS_TAIL) -> ScalarField:
    """Thermal probability density ``sum_n p_n |psi_n(r)|^2`` on the grid."""
    _check_temperature(T)
    if basis.vectors is None:
        raise ValueError("basis was solved without eigenvectors")
    tail = basis.spectrum.tail_weight(T)
    if tail > eps_tail:
        need = basis.spectrum.required_cutoff(T, eps_tail)
        raise TruncationError(
            f"retained levels miss a weight fraction {tail:.3g} > {eps_tail:g}; "
            f"solve up to E_max >= {need:.6g} J", required_e_max=need)
    p = boltzmann_probabilities(basis.energies, T, c)
    free = p @ (basis.vectors**2)
    values = np.zeros(basis.mask.shape)
    values[basis.mask] = free
    return ScalarField(values, basis.grid.hx, basis.grid.hy)
