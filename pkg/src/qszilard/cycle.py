"""Work, heat and energy bookkeeping for the four-step Szilard cycle.

Sign convention: ``W`` is work done on the system and ``Q`` is heat absorbed
by the system from the bath, so every quasistatic isothermal step obeys
``dU = W + Q`` with ``W = dF`` and ``Q = T dS``.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (CODATA2018, NM, DomainError, Geometry, GridSpec, Mode, PhysicalConstants,
                   QSzilardError, UsageError, _check_temperature, convert_energy)
from .spectrum import (DEFAULT_CUTOFF_KT, Spectrum, cutoff_energy, default_spectrum_1d,
                       energies_rect, level_1d, solve_partitioned_2d)
from .thermo import InvariantError, ThermoState, thermo_state

FIRST_LAW_RTOL = 1e-10
STEPS = ("insertion", "measurement", "expansion", "removal")
STEP_LABELS = ("I", "II", "III", "IV")
COMPONENTS = ("S", "D", "B")
QUANTITIES = ("dF", "TdS", "dU")

SpectrumSource = Callable[[float, float], Spectrum]


def exact_1d(cutoff_kt: float = DEFAULT_CUTOFF_KT, c: PhysicalConstants = CODATA2018) -> SpectrumSource:
    """Spectrum source using exact particle-in-a-box levels along the expansion axis."""
    def source(L, T):
        return default_spectrum_1d(L, T, cutoff_kt, c)
    return source


def rectangle(Ly: float, cutoff_kt: float = DEFAULT_CUTOFF_KT,
              c: PhysicalConstants = CODATA2018) -> SpectrumSource:
    """Spectrum source for a 2D rectangle of fixed height ``Ly``."""
    def source(L, T):
        ground = level_1d(1, L, c) + level_1d(1, Ly, c)
        return energies_rect(L, Ly, cutoff_energy(ground, T, cutoff_kt, c), c)
    return source


@dataclass(frozen=True)
class StepExchange:
    step: str
    W: float
    Q: float
    dU: float

    def __post_init__(self):
        if self.step not in STEPS:
            raise ValueError(f"unknown step {self.step!r}")
        scale = max(abs(self.W), abs(self.Q), abs(self.dU))
        if scale and abs(self.dU - self.W - self.Q) > FIRST_LAW_RTOL * scale:
            raise InvariantError(f"first law violated in {self.step}: "
                                 f"dU={self.dU!r}, W={self.W!r}, Q={self.Q!r}")

    def in_units(self, T, unit, c=CODATA2018):
        return {k: convert_energy(getattr(self, k), T, unit, c) for k in ("W", "Q", "dU")}


@dataclass(frozen=True)
class CycleStates:
    """Equilibrium states at the start of each step: I full box, II superposed
    halves, III localized half, IV full box again (before removal)."""

    I: ThermoState
    II: ThermoState
    III: ThermoState
    IV: ThermoState


def cycle_states(L: float, T: float, source: SpectrumSource | None = None,
                 c: PhysicalConstants = CODATA2018) -> CycleStates:
    _check_temperature(T)
    if not L > 0:
        raise DomainError(f"box length must be positive, got {L!r}")
    source = source or exact_1d(c=c)
    full, half = source(L, T), source(0.5 * L, T)
    return CycleStates(thermo_state(full, T, 1, c), thermo_state(half, T, 2, c),
                       thermo_state(half, T, 1, c), thermo_state(full, T, 1, c))


def _between(step, a: ThermoState, b: ThermoState) -> StepExchange:
    T = a.T
    return StepExchange(step, b.F - a.F, T * (b.S - a.S), b.U - a.U)


def insertion_step(L: float, T: float, source: SpectrumSource | None = None,
                   c: PhysicalConstants = CODATA2018) -> StepExchange:
    """Quasistatic insertion: full box to two superposed halves."""
    st = cycle_states(L, T, source, c)
    return _between("insertion", st.I, st.II)


def measurement_step(T: float, c: PhysicalConstants = CODATA2018) -> StepExchange:
    """Localization by measurement: ``W = kT ln 2``, ``Q = -kT ln 2``, ``dU = 0``."""
    _check_temperature(T)
    w = c.k * T * math.log(2.0)
    return StepExchange("measurement", w, -w, 0.0)


def expansion_step(L: float, T: float, source: SpectrumSource | None = None,
                   c: PhysicalConstants = CODATA2018) -> StepExchange:
    """Quasistatic expansion of the localized particle from L/2 back to L."""
    st = cycle_states(L, T, source, c)
    return _between("expansion", st.III, st.IV)


def removal_step() -> StepExchange:
    return StepExchange("removal", 0.0, 0.0, 0.0)


def extractable_work_bound(dF: float, I: float, T: float,
                           c: PhysicalConstants = CODATA2018) -> float:
    """Upper bound ``-dF + kT I`` on work extractable with mutual information ``I`` (nats)."""
    _check_temperature(T)
    if I < 0:
        raise DomainError(f"mutual information must be non-negative, got {I!r}")
    return -dF + c.k * T * I


@dataclass(frozen=True)
class CycleLedger:
    """Changes of F, T*S and U per component (S, D, B) and step (I..IV).

    ``table[i, j, s]`` is quantity ``QUANTITIES[j]`` of component
    ``COMPONENTS[i]`` during step ``STEP_LABELS[s]``, in joules.
    """

    L: float
    T: float
    steps: tuple
    table: np.ndarray
    constants: PhysicalConstants = CODATA2018

    @property
    def kT(self) -> float:
        return self.constants.k * self.T

    def cell(self, component, quantity, step) -> float:
        return float(self.table[COMPONENTS.index(component), QUANTITIES.index(quantity),
                                STEP_LABELS.index(step)])

    def row_sums(self) -> np.ndarray:
        """Sum over steps, shape (component, quantity)."""
        return np.array([[math.fsum(self.table[i, j]) for j in range(3)] for i in range(3)])

    def column_sums(self) -> np.ndarray:
        """Sum over components, shape (quantity, step)."""
        return np.array([[math.fsum(self.table[:, j, s]) for s in range(4)] for j in range(3)])

    def net(self) -> dict:
        return {k: math.fsum(getattr(st, k) for st in self.steps) for k in ("W", "Q", "dU")}

    def violations(self, tol_kt: float = 1e-10) -> list[str]:
        """Names of zero-sum invariants that fail at ``tol_kt * kT``."""
        tol = tol_kt * self.kT
        bad = []
        rows = self.row_sums()
        for j, q in enumerate(QUANTITIES):
            if abs(rows[0, j]) > tol:
                bad.append(f"row S/{q}")
        cols = self.column_sums()
        for j, q in enumerate(QUANTITIES):
            for s, lab in enumerate(STEP_LABELS):
                if abs(cols[j, s]) > tol:
                    bad.append(f"column {lab}/{q}")
        dev = self.table[1].copy()
        dev[:, 1] = 0.0
        if np.any(dev != 0.0):
            bad.append("device active outside step II")
        if np.any(self.table[2, 2] != -self.table[0, 2]):
            bad.append("bath dU does not mirror system dU")
        for k, v in self.net().items():
            if abs(v) > 1e-12 * self.kT:
                bad.append(f"net {k}")
        return bad

    def to_text(self, unit: str = "kT") -> str:
        conv = lambda x: convert_energy(x, self.T, unit, self.constants)
        head = f"{'':4}{'':6}" + "".join(f"{lab:>16}" for lab in STEP_LABELS)
        lines = [f"Cycle ledger  L = {self.L / NM:g} nm, T = {self.T:g} K, energies in {unit}",
                 head, "-" * len(head)]
        for i, comp in enumerate(COMPONENTS):
            for j, q in enumerate(QUANTITIES):
                label = comp if j == 0 else ""
                cells = "".join(f"{conv(v):>16.9g}" for v in self.table[i, j])
                lines.append(f"{label:4}{q:6}{cells}")
            lines.append("-" * len(head))
        return "\n".join(lines) + "\n"

    def to_dict(self, unit: str = "joule") -> dict:
        conv = lambda x: convert_energy(x, self.T, unit, self.constants)
        return {
            "L_m": self.L, "T_K": self.T, "unit": unit,
            "steps": [{"step": st.step, **st.in_units(self.T, unit, self.constants)}
                      for st in self.steps],
            "table": {comp: {q: dict(zip(STEP_LABELS, map(conv, self.table[i, j])))
                             for j, q in enumerate(QUANTITIES)}
                      for i, comp in enumerate(COMPONENTS)},
            "net": {k: conv(v) for k, v in self.net().items()},
            "violations": self.violations(),
        }


def run_cycle(L: float, T: float, source: SpectrumSource | None = None,
              c: PhysicalConstants = CODATA2018) -> CycleLedger:
    st = cycle_states(L, T, source, c)
    steps = (_between("insertion", st.I, st.II), measurement_step(T, c),
             _between("expansion", st.III, st.IV), removal_step())
    table = np.zeros((3, 3, 4))
    for s, ex in enumerate(steps):
        table[0, :, s] = ex.W, ex.Q, ex.dU
        if ex.step == "measurement":
            table[1, :, s] = -ex.W, -ex.Q, 0.0
        else:
            # + 0.0 keeps empty cells at +0 rather than -0
            table[2, :, s] = -ex.W + 0.0, -ex.Q + 0.0, -ex.dU + 0.0
    return CycleLedger(L, T, steps, table, c)


def cycle_work_bound(ledger: CycleLedger) -> tuple[float, float]:
    """(bound, achieved) extractable work over the cycle; achieved = -sum W."""
    dF = ledger.cell("S", "dF", "II")
    bound = extractable_work_bound(dF, math.log(2.0), ledger.T, ledger.constants)
    return bound, -ledger.net()["W"]


# ---------------------------------------------------------------------------
# sweeps over partition depth and position

@dataclass
class SweepCurve:
    label: str
    points: np.ndarray
    F: np.ndarray
    S: np.ndarray
    U: np.ndarray
    status: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(s == "ok" for s in self.status)

    def to_csv(self, path, header_lines=(), quantities=("F", "S", "U")):
        names = {"F": "F_J", "S": "S_J_per_K", "U": "U_J"}
        with open(path, "w") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write(",".join(["abscissa_nm"] + [names[q] for q in quantities]) + "\n")
            for i, x in enumerate(self.points):
                vals = [format_number(x / NM)] + [format_number(getattr(self, q)[i])
                                                  for q in quantities]
                fh.write(",".join(vals) + "\n")

    def to_dict(self) -> dict:
        return {"abscissa": self.label, "abscissa_nm": (self.points / NM).tolist(),
                "F_J": self.F.tolist(), "S_J_per_K": self.S.tolist(), "U_J": self.U.tolist(),
                "status": list(self.status), "meta": self.meta}


def format_number(x: float, min_digits: int = 12) -> str:
    """Shortest decimal that round-trips, with at least ``min_digits`` significant digits."""
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    for p in range(min_digits, 18):
        s = f"{x:#.{p}g}"
        if float(s) == x:
            return s
    return repr(x)


def _sweep_point(args):
    geometry, grid, T, cutoff_kt, c = args
    try:
        basis = solve_partitioned_2d(geometry, grid, None, c, T=T, cutoff_kt=cutoff_kt,
                                     vectors=False)
        st = thermo_state(basis.spectrum, T, 1, c)
        return st.F, st.S, st.U, "ok"
    except QSzilardError as exc:
        return math.nan, math.nan, math.nan, f"{type(exc).__name__}: {exc}"


def _run_points(tasks, workers):
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(tasks) <= 1:
        return [_sweep_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, tasks))


def _assemble(label, points, results, meta):
    F, S, U, status = zip(*results)
    return SweepCurve(label, np.asarray(points, dtype=float), np.array(F), np.array(S),
                      np.array(U), list(status), meta)


def _check_increasing(points, what):
    if len(points) == 0:
        raise UsageError(f"no {what} sample points")
    if np.any(np.diff(points) <= 0):
        raise UsageError(f"{what} sample points must be strictly increasing after snapping to the grid")


def _snap(value, h):
    return round(value / h) * h


def sweep_insertion(base: Geometry, T: float, d_values=None, grid: GridSpec = GridSpec(),
                    c: PhysicalConstants = CODATA2018, *, points: int = 41,
                    cutoff_kt: float = DEFAULT_CUTOFF_KT, workers: int | None = 1) -> SweepCurve:
    """F, S, U against partition depth d at fixed lateral position ``base.l``."""
    _check_temperature(T)
    if d_values is None:
        if points < 1:
            raise UsageError("need at least one sweep point")
        d_values = np.linspace(0.0, base.Ly, points)
    d_snapped = np.array([min(_snap(d, grid.hy), base.Ly) for d in d_values])
    _check_increasing(d_snapped, "depth")
    tasks = [(Geometry(base.Lx, base.Ly, float(d), base.l), grid, T, cutoff_kt, c)
             for d in d_snapped]
    meta = {"sweep": "insertion", "T_K": T, "Lx_m": base.Lx, "Ly_m": base.Ly, "l_m": base.l,
            "grid_m": [grid.hx, grid.hy], "cutoff_kT": cutoff_kt, "localized": False}
    return _assemble("d", d_snapped, _run_points(tasks, workers), meta)


def default_positions(base: Geometry, localized: bool, points: int = 41) -> np.ndarray:
    """Partition positions: the whole box when superposed, centre to wall when localized."""
    if points < 1:
        raise UsageError("need at least one sweep point")
    start = 0.5 * base.Lx if localized else 0.0
    return np.linspace(start, base.Lx, points)


def sweep_expansion(base: Geometry, T: float, l_values=None, localized: bool = False,
                    grid: GridSpec = GridSpec(), c: PhysicalConstants = CODATA2018, *,
                    points: int = 41, cutoff_kt: float = DEFAULT_CUTOFF_KT,
                    workers: int | None = 1) -> SweepCurve:
    """F, S, U against partition position l with a fully dividing partition.

    Superposed: both compartments contribute, ``Z(l) = Z_left(l) + Z_right(Lx - l)``.
    Localized: only the left compartment.  A partition sitting on a wall
    (``l = 0`` or ``l = Lx``) is the empty box.
    """
    _check_temperature(T)
    if l_values is None:
        l_values = default_positions(base, localized, points)
    l_snapped = np.array([_snap(l, grid.hx) for l in l_values])
    _check_increasing(l_snapped, "position")
    mode = Mode.LEFT if localized else Mode.SUPERPOSED
    tasks, fixed = [], {}
    for i, l in enumerate(l_snapped):
        on_left_wall = l <= 0.5 * grid.hx
        on_right_wall = l >= base.Lx - 0.5 * grid.hx
        if on_right_wall or (on_left_wall and not localized):
            g = Geometry(base.Lx, base.Ly, 0.0)
        elif on_left_wall:
            fixed[i] = (math.nan, math.nan, math.nan,
                        "GeometryError: localized compartment has zero width")
            continue
        else:
            g = Geometry(base.Lx, base.Ly, base.Ly, float(l), mode)
        tasks.append((i, (g, grid, T, cutoff_kt, c)))
    computed = _run_points([t for _, t in tasks], workers)
    results = [None] * len(l_snapped)
    for (i, _), r in zip(tasks, computed):
        results[i] = r
    for i, r in fixed.items():
        results[i] = r
    meta = {"sweep": "expansion", "T_K": T, "Lx_m": base.Lx, "Ly_m": base.Ly,
            "grid_m": [grid.hx, grid.hy], "cutoff_kT": cutoff_kt, "localized": localized}
    return _assemble("l", l_snapped, results, meta)
