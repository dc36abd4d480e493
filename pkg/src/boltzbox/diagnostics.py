"""Measurement plumbing shared by the solvers: decay reports, refinement
sweeps, and frozen regression baselines.

Every fitted constant in this codebase is a measured shadow of a quantity
the theory only proves to exist; reports therefore carry a fingerprint of
all resolution parameters so baselines from different discretizations are
never silently compared.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np


class IncomparableBaselineError(ValueError):
    """Regression baseline was produced by a different discretization."""


def make_fingerprint(params: dict) -> str:
    """Stable hash of resolution parameters (grid sizes, dt, cutoffs, ...).

    Output paths and other run bookkeeping must not be included, so a
    baseline survives directory moves.
    """
    blob = json.dumps({str(k): repr(params[k]) for k in sorted(params)},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class DecayReport:
    """Named time series plus exponential-rate fits for one run."""

    series: list                 # rows (t, {name: value})
    fits: dict                   # name -> (rate, prefactor, residual)
    fingerprint: str
    params: dict = field(default_factory=dict)   # the fingerprinted config
    values: dict = field(default_factory=dict)   # deterministic scalars

    def __post_init__(self):
        ts = [t for t, _ in self.series]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("series times must be strictly increasing")

    def column(self, name: str):
        t = np.array([row[0] for row in self.series])
        y = np.array([row[1][name] for row in self.series])
        return t, y

    def to_csv(self) -> str:
        names = sorted(self.series[0][1]) if self.series else []
        buf = io.StringIO()
        buf.write(",".join(["t"] + names) + "\n")
        for t, m in self.series:
            buf.write(",".join(repr(float(x))
                               for x in [t] + [m[k] for k in names]) + "\n")
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "fingerprint": self.fingerprint,
            "params": {k: repr(v) for k, v in sorted(self.params.items())},
            "fits": {k: list(v) for k, v in sorted(self.fits.items())},
            "values": dict(sorted(self.values.items())),
            "series": [[t, m] for t, m in self.series],
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "DecayReport":
        d = json.loads(text)
        return cls(series=[(t, m) for t, m in d["series"]],
                   fits={k: tuple(v) for k, v in d["fits"].items()},
                   fingerprint=d["fingerprint"], params=d.get("params", {}),
                   values=d.get("values", {}))


def build_report(times, columns: dict, fits: dict, params: dict,
                 values: dict | None = None) -> DecayReport:
    """Assemble a DecayReport from parallel arrays."""
    series = [(float(t), {k: float(columns[k][i]) for k in columns})
              for i, t in enumerate(times)]
    return DecayReport(series=series, fits=dict(fits),
                       fingerprint=make_fingerprint(params),
                       params=dict(params), values=dict(values or {}))


# ---------------------------------------------------------------------------
# Refinement sweeps

def refinement_sweep(scenario, parameter: str, values) -> list:
    """Re-run `scenario(**{parameter: v})` per value.

    scenario returns a flat dict of named scalar outputs; the result is one
    row per value.  For scalar outputs present in >= 3 rows an observed
    convergence order is appended under "<key>_order" on the last row,
    estimated from successive Richardson differences.
    """
    values = list(values)
    if len(values) >= 2:
        diffs = np.diff(np.asarray(values, float))
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("sweep values must be monotone")
    rows = []
    for v in values:
        out = scenario(**{parameter: v})
        rows.append({parameter: v, **out})
    if len(rows) >= 3:
        keys = set(rows[0]) - {parameter}
        for k in sorted(keys):
            y = [row[k] for row in rows]
            d1 = abs(y[-2] - y[-3])
            d2 = abs(y[-1] - y[-2])
            r1 = abs(values[-2] / values[-3]) if values[-3] else 0.0
            if d2 > 0 and d1 > 0 and r1 not in (0.0, 1.0):
                rows[-1][k + "_order"] = math.log(d1 / d2) / \
                    math.log(1.0 / r1 if r1 < 1 else r1)
    return rows


def sweep_to_csv(rows: list) -> str:
    names = sorted({k for row in rows for k in row})
    buf = io.StringIO()
    buf.write(",".join(names) + "\n")
    for row in rows:
        buf.write(",".join(repr(float(row[k])) if k in row else ""
                           for k in names) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Regression baselines

RTOL_DETERMINISTIC = 1e-9
RTOL_FITTED = 0.05


def freeze_regression(report: DecayReport, path):
    """Write the report's frozen values and fits as a JSON baseline."""
    with open(path, "w") as fh:
        fh.write(json.dumps({
            "fingerprint": report.fingerprint,
            "values": dict(sorted(report.values.items())),
            "fits": {k: list(v) for k, v in sorted(report.fits.items())},
        }, indent=1))


def compare_regression(report: DecayReport, path, rtol: float | None = None):
    """Compare a report against a frozen baseline.

    Deterministic values compare at rtol 1e-9, fitted rates at 5% (or the
    override).  Returns (passed, failures); a fingerprint mismatch raises
    IncomparableBaselineError since values from different discretizations
    are not comparable.
    """
    with open(path) as fh:
        base = json.load(fh)
    if base["fingerprint"] != report.fingerprint:
        raise IncomparableBaselineError(
            f"baseline fingerprint {base['fingerprint']} != report "
            f"{report.fingerprint}: incomparable configurations")
    failures = []

    def close(a, b, tol):
        return abs(a - b) <= tol * max(abs(a), abs(b), 1e-300)

    for k, v in base["values"].items():
        tol = RTOL_DETERMINISTIC if rtol is None else rtol
        if k not in report.values or not close(report.values[k], v, tol):
            failures.append(f"value {k}: {report.values.get(k)} vs {v}")
    for k, v in base["fits"].items():
        tol = RTOL_FITTED if rtol is None else rtol
        cur = report.fits.get(k)
        if cur is None or not close(cur[0], v[0], tol):
            failures.append(f"fit {k}: {cur and cur[0]} vs {v[0]}")
    return (not failures), failures
