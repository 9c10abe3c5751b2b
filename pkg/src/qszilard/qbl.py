"""Closed-form boundary-layer approximations for the insertion step.

Near a Dirichlet wall the thermal density is depleted over a layer of
thickness ``delta = lambda_th / 4``.  Replacing each 1D compartment by an
effective length ``L - 2 delta`` gives analytic insertion work and energy.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

from .core import CODATA2018, NM, DomainError, PhysicalConstants, _check_temperature, thermal_wavelength
from .cycle import exact_1d, insertion_step

DEFAULT_MARGIN = 0.1
NEAR_BOUNDARY_FACTOR = 2.0


class ValidityError(DomainError):
    """Compartments too small for the boundary-layer picture (layers overlap)."""


def qbl_delta(T: float, c: PhysicalConstants = CODATA2018) -> float:
    return 0.25 * thermal_wavelength(T, c)


def _check_valid(L, T, margin, c):
    _check_temperature(T)
    if margin < 0:
        raise DomainError(f"margin must be non-negative, got {margin!r}")
    delta = qbl_delta(T, c)
    if not 0.5 * L > 2.0 * delta * (1.0 + margin):
        raise ValidityError(f"L/2 = {0.5 * L:.4g} m must exceed 2*delta*(1+{margin:g}) = "
                            f"{2.0 * delta * (1.0 + margin):.4g} m")
    return delta


def insertion_work_analytic(L: float, T: float, c: PhysicalConstants = CODATA2018,
                            margin: float = DEFAULT_MARGIN) -> float:
    """``kT ln[(L - 2 delta) / (L/2 - 2 delta)] - kT ln 2``."""
    delta = _check_valid(L, T, margin, c)
    return c.k * T * (math.log((L - 2 * delta) / (0.5 * L - 2 * delta)) - math.log(2.0))


def delta_u_insertion_analytic(L: float, T: float, c: PhysicalConstants = CODATA2018,
                               margin: float = DEFAULT_MARGIN) -> float:
    """``(kT/2) [(L/2)/(L/2 - 2 delta) - L/(L - 2 delta)]``."""
    delta = _check_valid(L, T, margin, c)
    half = 0.5 * L
    return 0.5 * c.k * T * (half / (half - 2 * delta) - L / (L - 2 * delta))


def insertion_heat_analytic(L: float, T: float, c: PhysicalConstants = CODATA2018,
                            margin: float = DEFAULT_MARGIN) -> float:
    return (delta_u_insertion_analytic(L, T, c, margin)
            - insertion_work_analytic(L, T, c, margin))


def relative_error(approx: float, exact: float, kT: float) -> float:
    return abs(approx - exact) / max(abs(exact), kT * 1e-18)


@dataclass(frozen=True)
class QblReport:
    L: float
    T: float
    delta: float
    W_analytic: float
    dU_analytic: float
    Q_analytic: float
    W_exact: float
    dU_exact: float
    Q_exact: float
    err_W: float
    err_dU: float
    err_Q: float
    near_boundary: bool

    @property
    def max_error(self) -> float:
        return max(self.err_W, self.err_dU, self.err_Q)

    def to_dict(self) -> dict:
        return {**asdict(self), "units": {"L": "m", "delta": "m", "T": "K",
                                          "W/dU/Q": "J", "err": "1"}}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def to_text(self) -> str:
        kT = CODATA2018.k * self.T
        lines = [f"L = {self.L / NM:g} nm, T = {self.T:g} K, delta = {self.delta / NM:.6g} nm"
                 + ("  [near validity boundary]" if self.near_boundary else ""),
                 f"{'':6}{'analytic/kT':>18}{'exact/kT':>18}{'rel. error':>12}"]
        for name, a, e, r in (("W", self.W_analytic, self.W_exact, self.err_W),
                              ("dU", self.dU_analytic, self.dU_exact, self.err_dU),
                              ("Q", self.Q_analytic, self.Q_exact, self.err_Q)):
            lines.append(f"{name:6}{a / kT:>18.12g}{e / kT:>18.12g}{r:>12.3e}")
        return "\n".join(lines) + "\n"


def validate_against_exact(L: float, T: float, c: PhysicalConstants = CODATA2018,
                           margin: float = DEFAULT_MARGIN) -> QblReport:
    """Compare the analytic triple with exact 1D spectral sums."""
    delta = _check_valid(L, T, margin, c)
    W = insertion_work_analytic(L, T, c, margin)
    dU = delta_u_insertion_analytic(L, T, c, margin)
    Q = dU - W
    ex = insertion_step(L, T, exact_1d(c=c), c)
    kT = c.k * T
    return QblReport(L, T, delta, W, dU, Q, ex.W, ex.dU, ex.Q,
                     relative_error(W, ex.W, kT), relative_error(dU, ex.dU, kT),
                     relative_error(Q, ex.Q, kT),
                     0.5 * L <= NEAR_BOUNDARY_FACTOR * 2.0 * delta)
