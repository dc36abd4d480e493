"""Reports, refinement sweeps and frozen regression baselines."""

import json

import numpy as np
import pytest

from boltzbox.diagnostics import (DecayReport, IncomparableBaselineError,
                                  build_report, compare_regression,
                                  freeze_regression, make_fingerprint,
                                  refinement_sweep, sweep_to_csv)


def _report(lam=1.5, extra=None):
    t = np.linspace(0.0, 2.0, 9)
    cols = {"norm": np.exp(-lam * t), "mass": np.ones_like(t)}
    params = {"n_v": 8, "dt": 0.0125}
    values = {"nu0": 10.0262}
    if extra:
        params = {**params, **extra}
    return build_report(t, cols, {"norm": (lam, 1.0, 0.0)}, params, values)


def test_fingerprint_stable_and_order_free():
    a = make_fingerprint({"n": 8, "dt": 0.1})
    b = make_fingerprint({"dt": 0.1, "n": 8})
    assert a == b and len(a) == 16
    assert make_fingerprint({"n": 8, "dt": 0.2}) != a
    # floats are fingerprinted via repr: a one-ulp perturbation changes it
    assert make_fingerprint({"n": 8, "dt": np.nextafter(0.1, 1.0)}) != a


def test_report_roundtrip_and_columns():
    rep = _report()
    back = DecayReport.from_json(rep.to_json())
    assert back.fingerprint == rep.fingerprint
    assert back.fits == rep.fits
    t, y = back.column("norm")
    np.testing.assert_allclose(y, np.exp(-1.5 * t))


def test_report_rejects_unsorted_times():
    with pytest.raises(ValueError):
        DecayReport(series=[(0.0, {}), (0.0, {})], fits={}, fingerprint="x")


def test_report_csv():
    lines = _report().to_csv().splitlines()
    assert lines[0] == "t,mass,norm"
    assert len(lines) == 10
    row = lines[1].split(",")
    assert float(row[0]) == 0.0 and float(row[2]) == 1.0


def test_refinement_sweep_order():
    # f(h) = L + C h^2 must report observed order ~2 on a dyadic sweep
    def scenario(h):
        return {"val": 3.7 + 0.9 * h ** 2}
    rows = refinement_sweep(scenario, "h", [0.4, 0.2, 0.1, 0.05])
    assert rows[-1]["val_order"] == pytest.approx(2.0, abs=1e-10)
    assert [r["h"] for r in rows] == [0.4, 0.2, 0.1, 0.05]


def test_refinement_sweep_rejects_non_monotone():
    with pytest.raises(ValueError):
        refinement_sweep(lambda h: {"v": h}, "h", [0.1, 0.4, 0.2])


def test_sweep_csv_handles_missing_cells():
    rows = refinement_sweep(lambda h: {"v": h * h}, "h", [0.2, 0.1, 0.05])
    txt = sweep_to_csv(rows)
    lines = txt.splitlines()
    assert lines[0] == "h,v,v_order"
    assert lines[1].endswith(",")          # order only exists on the last row
    assert lines[-1].count(",") == 2 and not lines[-1].endswith(",")


def test_regression_freeze_and_compare(tmp_path):
    rep = _report()
    path = tmp_path / "base.json"
    freeze_regression(rep, path)
    ok, fails = compare_regression(rep, path)
    assert ok and fails == []
    # deterministic drift beyond 1e-9 is flagged
    drifted = _report()
    drifted.values["nu0"] *= 1.0 + 1e-6
    ok, fails = compare_regression(drifted, path)
    assert not ok and "nu0" in fails[0]
    # fitted rates get the loose 5% band
    refit = _report(lam=1.5 * 1.02)
    refit.values["nu0"] = rep.values["nu0"]
    ok, _ = compare_regression(refit, path)
    assert ok


def test_regression_fingerprint_guard(tmp_path):
    path = tmp_path / "base.json"
    freeze_regression(_report(), path)
    other = _report(extra={"n_x": 7})
    with pytest.raises(IncomparableBaselineError):
        compare_regression(other, path)


def test_baseline_file_is_plain_json(tmp_path):
    path = tmp_path / "base.json"
    freeze_regression(_report(), path)
    d = json.loads(path.read_text())
    assert set(d) == {"fingerprint", "values", "fits"}
