import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qszilard.core import CODATA2018, NM, Geometry, GridSpec, UsageError, DomainError
from qszilard.cycle import (COMPONENTS, QUANTITIES, STEP_LABELS, StepExchange, cycle_states,
                            cycle_work_bound, exact_1d, expansion_step, extractable_work_bound,
                            format_number, insertion_step, measurement_step, rectangle,
                            removal_step, run_cycle, sweep_expansion, sweep_insertion)
from qszilard.thermo import InvariantError

c = CODATA2018
LN2 = math.log(2.0)
L20 = 20 * NM


def kT(T):
    return c.k * T


lengths = st.floats(10.0, 200.0)
temps = st.floats(100.0, 1000.0)


def test_insertion_values_at_20nm():
    ex = insertion_step(L20, 300.0)
    assert ex.W / kT(300) == pytest.approx(0.12846683, abs=1e-8)
    assert ex.W == pytest.approx(5.32e-22, rel=1e-3)
    assert ex.Q / kT(300) == pytest.approx(-0.05166176, abs=1e-8)
    assert ex.dU / kT(300) == pytest.approx(0.07680507, abs=1e-8)


def test_insertion_work_closed_form():
    st_ = cycle_states(L20, 300.0)
    Z_full, Z_half = st_.I.Z, st_.III.Z
    assert insertion_step(L20, 300.0).W == pytest.approx(kT(300) * math.log(Z_full / (2 * Z_half)),
                                                         rel=1e-13)


def test_expansion_value_at_20nm():
    assert expansion_step(L20, 300.0).W / kT(300) == pytest.approx(-0.8217, abs=1e-4)


def test_measurement_exact():
    for T in (1.0, 300.0, 12345.6):
        ex = measurement_step(T)
        assert ex.W == kT(T) * LN2
        assert ex.Q == -ex.W
        assert ex.dU == 0.0
        assert ex.W + ex.Q == 0.0
    assert measurement_step(600.0).W == 2 * measurement_step(300.0).W


def test_removal_zero():
    ex = removal_step()
    assert (ex.W, ex.Q, ex.dU) == (0.0, 0.0, 0.0)
    st_ = cycle_states(L20, 300.0)
    assert st_.I == st_.IV


def test_first_law_is_enforced():
    with pytest.raises(InvariantError):
        StepExchange("insertion", 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        StepExchange("stretching", 0.0, 0.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(lengths, temps)
def test_first_law_and_identities(L_nm, T):
    L = L_nm * NM
    ins, exp_ = insertion_step(L, T), expansion_step(L, T)
    for ex in (ins, exp_, measurement_step(T), removal_step()):
        assert abs(ex.dU - ex.W - ex.Q) <= 1e-10 * max(abs(ex.W), abs(ex.Q), abs(ex.dU), 1e-300)
    assert exp_.W == pytest.approx(-ins.W - kT(T) * LN2, rel=1e-12)
    assert exp_.Q == pytest.approx(-ins.Q + kT(T) * LN2, rel=1e-12)
    assert exp_.dU == pytest.approx(-ins.dU, rel=1e-12)
    assert ins.W > 0 > exp_.W


@settings(max_examples=30, deadline=None)
@given(lengths, temps)
def test_cycle_closes(L_nm, T):
    led = run_cycle(L_nm * NM, T)
    assert led.violations() == []
    for v in led.net().values():
        assert abs(v) < 1e-12 * kT(T)


def test_ledger_layout():
    led = run_cycle(L20, 300.0)
    assert led.table.shape == (3, 3, 4)
    assert led.cell("S", "dF", "II") == measurement_step(300.0).W
    assert led.cell("D", "dF", "II") == -measurement_step(300.0).W
    assert led.cell("D", "TdS", "II") == -measurement_step(300.0).Q
    for q in QUANTITIES:
        assert led.cell("B", q, "II") == 0.0
        for comp in COMPONENTS:
            assert led.cell(comp, q, "IV") == 0.0
    dev = led.table[1].copy()
    dev[:, 1] = 0
    assert not dev.any()
    assert np.array_equal(led.table[2, 2], -led.table[0, 2] + 0.0)
    assert np.all(np.abs(led.column_sums()) < 1e-10 * led.kT)
    assert np.all(np.abs(led.row_sums()[0]) < 1e-10 * led.kT)


def test_ledger_detects_corruption():
    led = run_cycle(L20, 300.0)
    led.table[1, 0, 0] = 1e-21
    bad = led.violations()
    assert "device active outside step II" in bad
    assert "column I/dF" in bad


def test_ledger_exports():
    led = run_cycle(L20, 300.0)
    text = led.to_text("kT")
    assert "0.693147181" in text
    assert all(lab in text for lab in STEP_LABELS)
    doc = json.loads(json.dumps(led.to_dict("kT")))
    assert doc["table"]["S"]["dF"]["II"] == pytest.approx(LN2, rel=1e-15)
    assert doc["violations"] == []
    assert [s["step"] for s in doc["steps"]] == ["insertion", "measurement", "expansion", "removal"]


def test_dimensional_universality():
    for L_nm, T in ((10, 300.0), (20, 100.0), (50, 1000.0)):
        L = L_nm * NM
        one = insertion_step(L, T, exact_1d())
        two = insertion_step(L, T, rectangle(10 * NM))
        for q in ("W", "Q", "dU"):
            assert getattr(two, q) == pytest.approx(getattr(one, q), rel=1e-10)


def test_superposed_cycle_is_null():
    # insertion, superposed expansion back to the wall, removal: no measurement
    st_ = cycle_states(L20, 300.0)
    W_ins = st_.II.F - st_.I.F
    W_sup = st_.IV.F - st_.II.F
    assert W_ins + W_sup + removal_step().W == pytest.approx(0.0, abs=1e-15 * kT(300))
    assert W_sup == pytest.approx(-insertion_step(L20, 300.0).W, rel=1e-12)


def test_extractable_work_bound():
    assert extractable_work_bound(kT(300) * LN2, LN2, 300.0) == pytest.approx(0.0, abs=1e-36)
    assert extractable_work_bound(0.0, 0.0, 300.0) == 0.0
    with pytest.raises(DomainError):
        extractable_work_bound(0.0, -0.1, 300.0)
    bound, achieved = cycle_work_bound(run_cycle(L20, 300.0))
    assert abs(bound) < 1e-12 * kT(300)
    assert abs(achieved - bound) < 1e-12 * kT(300)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_number_round_trips(x):
    s = format_number(x)
    assert float(s) == x
    if x != 0:
        assert len(s.lstrip("-").replace(".", "").split("e")[0].lstrip("0")) >= 12


def test_format_number_nonfinite():
    assert format_number(math.nan) == "nan"


# --- sweeps ---------------------------------------------------------------

def test_superposed_sweep_symmetry(superposed_sweep):
    F = superposed_sweep.F
    assert superposed_sweep.ok
    assert len(F) == 41
    assert np.all(np.diff(superposed_sweep.points) > 0)
    assert np.allclose(F, F[::-1], rtol=1e-10, atol=0)


def test_superposed_sweep_endpoint(superposed_sweep):
    F = superposed_sweep.F
    W_ins = insertion_step(L20, 300.0).W
    assert (F[-1] - F[20]) == pytest.approx(-W_ins, rel=1e-2)


def test_localized_sweep_endpoint(localized_sweep):
    F = localized_sweep.F
    W_exp = expansion_step(L20, 300.0).W
    assert localized_sweep.points[0] == pytest.approx(10 * NM)
    assert (F[-1] - F[0]) == pytest.approx(W_exp, rel=1e-2)
    assert np.all(np.diff(F) < 0)


def test_sweep_endpoint_is_full_box(superposed_sweep, localized_sweep, insertion_sweep):
    assert superposed_sweep.F[-1] == localized_sweep.F[-1] == insertion_sweep.F[0]


def test_insertion_sweep_shape(insertion_sweep):
    F = insertion_sweep.F
    assert insertion_sweep.ok
    assert len(F) == 41
    assert np.all(np.diff(F) >= 0)
    W_ins = insertion_step(L20, 300.0).W
    assert F[-1] - F[0] == pytest.approx(W_ins, rel=1e-2)


def test_insertion_sweep_slow_start(insertion_sweep):
    # F barely moves while the tip is inside the wall's boundary layer
    F, d = insertion_sweep.F, insertion_sweep.points
    start = (F[1] - F[0]) / (d[1] - d[0])
    mid = (F[21] - F[19]) / (d[21] - d[19])
    assert start < 0.25 * mid


def test_insertion_sweep_end_matches_superposed(insertion_sweep, superposed_sweep):
    assert insertion_sweep.F[-1] == pytest.approx(superposed_sweep.F[20], rel=1e-12)


def test_sweep_csv(tmp_path, superposed_sweep):
    path = tmp_path / "s.csv"
    superposed_sweep.to_csv(path, ["config_sha256 x"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_sha256 x"
    assert lines[1] == "abscissa_nm,F_J,S_J_per_K,U_J"
    rows = lines[2:]
    assert len(rows) == 41
    assert [float(v) for v in rows[5].split(",")[1:]] == [
        superposed_sweep.F[5], superposed_sweep.S[5], superposed_sweep.U[5]]


def test_sweep_rejects_empty_and_unsorted(base_geometry):
    with pytest.raises(UsageError):
        sweep_insertion(base_geometry, 300.0, points=0)
    with pytest.raises(UsageError):
        sweep_expansion(base_geometry, 300.0, l_values=[5 * NM, 4 * NM])


def test_localized_sweep_reports_zero_width_point(base_geometry):
    curve = sweep_expansion(base_geometry, 300.0, l_values=[0.0, 10 * NM], localized=True,
                            grid=GridSpec.from_nm(0.25))
    assert curve.status[0].startswith("GeometryError")
    assert math.isnan(curve.F[0])
    assert curve.status[1] == "ok"
    assert not curve.ok


def test_thin_compartment_is_an_error(base_geometry):
    curve = sweep_expansion(base_geometry, 300.0, l_values=[0.5 * NM], grid=GridSpec.from_nm(0.25))
    assert curve.status[0].startswith("GeometryError")


def test_parallel_matches_serial():
    g = Geometry.from_nm(8, 4)
    grid = GridSpec.from_nm(0.2)
    serial = sweep_insertion(g, 300.0, grid=grid, points=5, workers=1)
    parallel = sweep_insertion(g, 300.0, grid=grid, points=5, workers=2)
    assert np.array_equal(serial.F, parallel.F)
    assert serial.status == parallel.status


def test_insertion_work_limiting_trend():
    # W_ins / kT decays like lambda_th / (2 L) once L >> lambda_th
    from qszilard.core import thermal_wavelength
    lam = thermal_wavelength(300.0)
    w = [insertion_step(L * NM, 300.0).W / kT(300) for L in (100, 500, 2000, 10000)]
    assert all(a > b > 0 for a, b in zip(w, w[1:]))
    assert w[-1] * 2 * 10000 * NM / lam == pytest.approx(1.0, rel=1e-2)
    wt = [insertion_step(L20, T).W / kT(T) for T in (300.0, 3000.0, 30000.0, 300000.0)]
    assert all(a > b > 0 for a, b in zip(wt, wt[1:]))
    assert wt[-1] < 5e-3
