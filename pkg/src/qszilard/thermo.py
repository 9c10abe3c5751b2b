"""Canonical-ensemble thermodynamics of a single particle with a given spectrum."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CODATA2018, DomainError, PhysicalConstants, QSzilardError, _check_temperature
from .spectrum import EPS_TAIL, Spectrum, TruncationError

IDENTITY_RTOL = 1e-12


class InvariantError(QSzilardError, ArithmeticError):
    """A thermodynamic identity failed beyond its tolerance."""


def _check_multiplicity(g):
    if g not in (1, 2):
        raise DomainError(f"side multiplicity must be 1 or 2, got {g!r}")


def _reduced(s: Spectrum, T: float, c: PhysicalConstants, eps_tail: float = EPS_TAIL):
    """Energies above ground in units of kT, degeneracy-weighted Boltzmann
    factors and their compensated sum."""
    _check_temperature(T)
    tail = s.tail_weight(T)
    if tail > eps_tail:
        need = s.required_cutoff(T, eps_tail)
        raise TruncationError(f"spectrum truncated too early at {T} K (tail {tail:.3g}); "
                              f"need E_max >= {need:.6g} J", required_e_max=need)
    x = (s.energies - s.ground) / (c.k * T)
    w = s.degeneracies * np.exp(-x)
    return x, w, math.fsum(w)


def log_partition_function(s: Spectrum, T: float, c: PhysicalConstants = CODATA2018) -> float:
    _, _, zr = _reduced(s, T, c)
    return -s.ground / (c.k * T) + math.log(zr)


def partition_function(s: Spectrum, T: float, c: PhysicalConstants = CODATA2018) -> float:
    """``Z = sum_n g_n exp(-E_n / kT)``; may underflow, see :func:`log_partition_function`."""
    return math.exp(log_partition_function(s, T, c))


def free_energy(Z: float, T: float, g: int = 1, c: PhysicalConstants = CODATA2018) -> float:
    """Helmholtz free energy ``-kT ln(g Z)``."""
    _check_temperature(T)
    _check_multiplicity(g)
    if not Z > 0:
        raise DomainError(f"partition function must be positive, got {Z!r}")
    return -c.k * T * (math.log(Z) + math.log(g))


def internal_energy(s: Spectrum, T: float, c: PhysicalConstants = CODATA2018) -> float:
    x, w, zr = _reduced(s, T, c)
    return s.ground + c.k * T * math.fsum(w * x) / zr


def entropy(s: Spectrum, T: float, g: int = 1, c: PhysicalConstants = CODATA2018) -> float:
    """Gibbs/von Neumann entropy of the thermal state over ``g`` identical sides.

    Each of the ``g * g_n`` states of level ``n`` carries probability
    ``exp(-E_n/kT) / (g Z)``.
    """
    _check_multiplicity(g)
    x, w, zr = _reduced(s, T, c)
    p = w / zr  # level probabilities within one side, already times g_n
    ln_p_state = -x - math.log(zr) - math.log(g)
    return -c.k * math.fsum(p * ln_p_state) + 0.0


@dataclass(frozen=True)
class ThermoState:
    """Equilibrium state; ``Z`` is per side, ``F = -kT ln(g Z)``."""

    T: float
    Z: float
    F: float
    S: float
    U: float
    g: int = 1
    lnZ: float = float("nan")

    def identity_residual(self) -> float:
        scale = max(abs(self.F), abs(self.U), abs(self.T * self.S))
        return abs(self.F - (self.U - self.T * self.S)) / scale if scale else 0.0

    def to_dict(self) -> dict:
        return {
            "T": {"value": self.T, "unit": "K"},
            "Z": {"value": self.Z, "unit": "1"},
            "lnZ": {"value": self.lnZ, "unit": "1"},
            "F": {"value": self.F, "unit": "J"},
            "S": {"value": self.S, "unit": "J/K"},
            "U": {"value": self.U, "unit": "J"},
            "g": {"value": self.g, "unit": "1"},
        }


def thermo_state(s: Spectrum, T: float, g: int = 1,
                 c: PhysicalConstants = CODATA2018) -> ThermoState:
    _check_multiplicity(g)
    lnZ = log_partition_function(s, T, c)
    F = -c.k * T * (lnZ + math.log(g))
    S = entropy(s, T, g, c)
    U = internal_energy(s, T, c)
    state = ThermoState(T, math.exp(lnZ), F, S, U, g, lnZ)
    if state.identity_residual() > IDENTITY_RTOL:
        raise InvariantError(f"F = U - TS violated: relative residual {state.identity_residual():.3g}")
    return state
