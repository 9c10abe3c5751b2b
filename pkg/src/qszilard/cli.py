"""Command-line front end.

Exit codes: 0 success, 2 configuration or usage error, 3 failed numerical
invariant, 4 solver failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, fields

from . import __version__
from .core import (CODATA2018, NM, DomainError, Geometry, GeometryError, GridSpec, Mode,
                   QSzilardError, UsageError, _canonical_unit, convert_energy, thermal_wavelength)
from .cycle import run_cycle, sweep_expansion, sweep_insertion, cycle_work_bound
from .eigensolve import SolverError
from .qbl import ValidityError, qbl_delta, validate_against_exact
from .spectrum import SpectrumError, TruncationError, density_map, solve_partitioned_2d
from .thermo import InvariantError

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT, EXIT_SOLVER = 0, 2, 3, 4
QBL_CLAIM = 1e-6
SWEEPS = ("insert", "expand-superposed", "expand-localized")


@dataclass
class RunConfig:
    lx_nm: float = 20.0
    ly_nm: float = 10.0
    temp_k: float = 300.0
    grid_nm: float = 0.05
    cutoff_kt: float = 40.0
    points: int = 41
    out: str = "out"
    units: str = "kT"
    workers: int | None = None
    deterministic: bool = True
    d_nm: float | None = None
    l_nm: float | None = None
    mode: str = Mode.FULL.value
    qbl_l_nm: tuple = (10.0, 20.0, 50.0, 100.0, 200.0)
    qbl_t_k: tuple = (100.0, 300.0, 1000.0)

    @classmethod
    def load(cls, path=None, overrides=None) -> "RunConfig":
        data = {}
        if path is not None:
            try:
                with open(path) as fh:
                    data = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config {path}: {exc}") from None
            if not isinstance(data, dict):
                raise UsageError("config file must hold a flat JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        for key in ("qbl_l_nm", "qbl_t_k"):
            if key in data:
                data[key] = tuple(data[key])
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        for name in ("lx_nm", "ly_nm", "temp_k", "grid_nm", "cutoff_kt"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not (v > 0 and math.isfinite(v)):
                raise UsageError(f"{name} must be a positive number, got {v!r}")
        if isinstance(self.points, bool) or not isinstance(self.points, int) or self.points < 1:
            raise UsageError(f"points must be a positive integer, got {self.points!r}")
        if self.workers is not None and (not isinstance(self.workers, int) or self.workers < 1):
            raise UsageError(f"workers must be a positive integer, got {self.workers!r}")
        if self.deterministic is not True:
            raise UsageError("deterministic mode cannot be switched off")
        self.units = _canonical_unit(self.units)
        Mode(self.mode)
        self.geometry()
        GridSpec.from_nm(self.grid_nm).resolve(self.geometry())
        if any(not (x > 0) for x in self.qbl_l_nm + self.qbl_t_k):
            raise UsageError("qbl grids must hold positive values")

    def geometry(self, d_nm=0.0, l_nm=None, mode=Mode.FULL) -> Geometry:
        return Geometry.from_nm(self.lx_nm, self.ly_nm, d_nm, l_nm, mode)

    def grid(self) -> GridSpec:
        return GridSpec.from_nm(self.grid_nm)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["qbl_l_nm"], d["qbl_t_k"] = list(self.qbl_l_nm), list(self.qbl_t_k)
        return d

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    @property
    def n_workers(self) -> int:
        return self.workers or os.cpu_count() or 1


@dataclass
class RunReport:
    command: str
    config: RunConfig
    results: dict
    status: str = "ok"
    failures: tuple = ()
    timings: dict | None = None

    def header_lines(self) -> list[str]:
        return provenance_lines(self.config)

    def to_dict(self) -> dict:
        return {"tool": "qszilard", "version": __version__, "command": self.command,
                "config": self.config.to_dict(), "config_sha256": self.config.digest(),
                "constants": CODATA2018.as_dict(), "status": self.status,
                "failures": list(self.failures), "results": self.results}

    def write(self, out_dir):
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        # wall-clock data kept apart so report.json stays reproducible
        with open(os.path.join(out_dir, "timings.json"), "w") as fh:
            json.dump({"command": self.command, "config_sha256": self.config.digest(),
                       "seconds": self.timings or {}}, fh, indent=1, sort_keys=True)
            fh.write("\n")


def provenance_lines(cfg: RunConfig) -> list[str]:
    return [f"qszilard {__version__}",
            f"config_sha256 {cfg.digest()}",
            "config " + json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":")),
            "constants " + json.dumps(CODATA2018.as_dict(), sort_keys=True, separators=(",", ":"))]


def _write_text(path, text, cfg):
    with open(path, "w") as fh:
        for line in provenance_lines(cfg):
            fh.write(f"# {line}\n")
        fh.write(text)


def _write_json(path, doc, cfg):
    doc = {"config_sha256": cfg.digest(), "constants": CODATA2018.as_dict(), **doc}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands

def cmd_cycle(cfg: RunConfig) -> RunReport:
    t0 = time.perf_counter()
    led = run_cycle(cfg.lx_nm * NM, cfg.temp_k)
    bound, achieved = cycle_work_bound(led)
    bad = led.violations()
    _write_text(os.path.join(cfg.out, "ledger.txt"), led.to_text(cfg.units), cfg)
    _write_json(os.path.join(cfg.out, "ledger.json"), led.to_dict(cfg.units), cfg)
    results = {"ledger": led.to_dict(cfg.units),
               "work_bound": {"bound": convert_energy(bound, cfg.temp_k, cfg.units),
                              "achieved": convert_energy(achieved, cfg.temp_k, cfg.units),
                              "unit": cfg.units}}
    print(led.to_text(cfg.units), end="")
    return RunReport("cycle", cfg, results, "ok" if not bad else "invariant-failure",
                     tuple(bad), {"total": time.perf_counter() - t0})


def cmd_sweep(cfg: RunConfig, which: str) -> RunReport:
    if which not in SWEEPS:
        raise UsageError(f"unknown sweep {which!r}; expected one of {SWEEPS}")
    t0 = time.perf_counter()
    base, grid = cfg.geometry(), cfg.grid()
    kw = dict(points=cfg.points, cutoff_kt=cfg.cutoff_kt, workers=cfg.n_workers)
    if which == "insert":
        curve = sweep_insertion(base, cfg.temp_k, None, grid, **kw)
    else:
        curve = sweep_expansion(base, cfg.temp_k, None, which == "expand-localized", grid, **kw)
    header = provenance_lines(cfg) + [f"sweep {which}", f"abscissa {curve.label}"]
    stem = which.replace("-", "_")
    curve.to_csv(os.path.join(cfg.out, f"{stem}.csv"), header)
    for q in ("F", "S", "U"):
        curve.to_csv(os.path.join(cfg.out, f"{stem}_{q}.csv"), header, quantities=(q,))
    failed = [f"point {x / NM:g} nm: {s}" for x, s in zip(curve.points, curve.status) if s != "ok"]
    results = {"sweep": which, "curve": curve.to_dict()}
    print(f"{which}: {len(curve.points)} points, {len(failed)} failed")
    return RunReport("sweep " + which, cfg, results, "ok" if not failed else "solver-failure",
                     tuple(failed), {"total": time.perf_counter() - t0})


def cmd_density(cfg: RunConfig) -> RunReport:
    t0 = time.perf_counter()
    d = cfg.d_nm if cfg.d_nm is not None else 0.0
    g = cfg.geometry(d, cfg.l_nm, Mode(cfg.mode))
    basis = solve_partitioned_2d(g, cfg.grid(), None, T=cfg.temp_k, cutoff_kt=cfg.cutoff_kt)
    field = density_map(basis, cfg.temp_k)
    integral = field.integral()
    boundary = float(abs(field.values[~basis.mask]).max(initial=0.0))
    bad = []
    if abs(integral - 1.0) > 1e-6:
        bad.append(f"density integral {integral!r} differs from 1")
    if boundary != 0.0:
        bad.append("density nonzero on a Dirichlet node")
    header = provenance_lines(cfg) + [f"d_nm {d:g}", f"l_nm {g.l / NM:g}", f"mode {g.mode.value}"]
    field.to_csv(os.path.join(cfg.out, "density.csv"), header)
    results = {"d_nm": d, "l_nm": g.l / NM, "mode": g.mode.value, "integral": integral,
               "max_on_dirichlet_nodes": boundary, "levels": len(basis.energies),
               "grid": basis.grid.as_dict()}
    print(f"density: integral {integral:.12f}, {len(basis.energies)} levels")
    return RunReport("density", cfg, results, "ok" if not bad else "invariant-failure",
                     tuple(bad), {"total": time.perf_counter() - t0})


def cmd_qbl(cfg: RunConfig) -> RunReport:
    t0 = time.perf_counter()
    rows, text = [], []
    for T in cfg.qbl_t_k:
        for L in cfg.qbl_l_nm:
            try:
                rep = validate_against_exact(L * NM, T)
            except ValidityError as exc:
                rows.append({"L_nm": L, "T_K": T, "valid": False, "reason": str(exc)})
                text.append(f"L = {L:g} nm, T = {T:g} K: outside validity ({exc})\n")
                continue
            rows.append({"L_nm": L, "T_K": T, "valid": True, **rep.to_dict(),
                         "max_error": rep.max_error, "below_1e-6": rep.max_error < QBL_CLAIM})
            text.append(rep.to_text())
    body = "\n".join(text)
    _write_text(os.path.join(cfg.out, "qbl.txt"), body, cfg)
    results = {"delta_nm_at_temp": qbl_delta(cfg.temp_k) / NM,
               "thermal_wavelength_nm_at_temp": thermal_wavelength(cfg.temp_k) / NM,
               "points": rows}
    print(body, end="")
    return RunReport("qbl", cfg, results, "ok", (), {"total": time.perf_counter() - t0})


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat JSON configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--units", choices=["kt", "joule", "zj"], type=str.lower,
                        help="energy unit for tables")
    common.add_argument("--grid-nm", type=float, dest="grid_nm", metavar="F")
    common.add_argument("--temp-k", type=float, dest="temp_k", metavar="F")
    common.add_argument("--lx-nm", type=float, dest="lx_nm", metavar="F")
    common.add_argument("--ly-nm", type=float, dest="ly_nm", metavar="F")
    common.add_argument("--points", type=int, metavar="N")
    common.add_argument("--workers", type=int, metavar="N")

    p = argparse.ArgumentParser(prog="qszilard", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("cycle", parents=[common], help="four-step ledger")
    sw = sub.add_parser("sweep", parents=[common], help="F, S, U along a partition sweep")
    sw.add_argument("which", choices=SWEEPS)
    dn = sub.add_parser("density", parents=[common], help="thermal probability density map")
    dn.add_argument("--d-nm", type=float, dest="d_nm", metavar="F")
    dn.add_argument("--l-nm", type=float, dest="l_nm", metavar="F")
    dn.add_argument("--mode", choices=[m.value for m in Mode])
    sub.add_parser("qbl", parents=[common], help="boundary-layer formulas against exact sums")
    return p


_OVERRIDES = ("out", "units", "grid_nm", "temp_k", "lx_nm", "ly_nm", "points", "workers",
              "d_nm", "l_nm", "mode")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = RunConfig.load(args.config, {k: getattr(args, k, None) for k in _OVERRIDES})
        os.makedirs(cfg.out, exist_ok=True)
        if args.command == "cycle":
            report = cmd_cycle(cfg)
        elif args.command == "sweep":
            report = cmd_sweep(cfg, args.which)
        elif args.command == "density":
            report = cmd_density(cfg)
        else:
            report = cmd_qbl(cfg)
    except (UsageError, DomainError, GeometryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (SolverError, SpectrumError, TruncationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except QSzilardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    report.write(cfg.out)
    if report.status == "invariant-failure":
        for f in report.failures:
            print(f"invariant failure: {f}", file=sys.stderr)
        return EXIT_INVARIANT
    if report.status == "solver-failure":
        for f in report.failures:
            print(f"solver failure: {f}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
