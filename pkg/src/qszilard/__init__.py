"""Thermodynamics of a single-particle quantum Szilard engine in a box."""

__version__ = "0.1.0"

from .core import (CODATA2018, DomainError, Geometry, GeometryError, GridSpec, Mode,
                   PhysicalConstants, QSzilardError, UsageError, thermal_wavelength)
from .spectrum import Spectrum, TruncationError, solve_partitioned_2d, density_map
from .thermo import InvariantError, ThermoState, thermo_state
from .cycle import (CycleLedger, StepExchange, SweepCurve, expansion_step, insertion_step,
                    measurement_step, removal_step, run_cycle, sweep_expansion,
                    sweep_insertion)
