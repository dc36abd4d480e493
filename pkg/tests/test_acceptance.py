"""Acceptance suite: twelve end-to-end properties of the full stack.

One test per criterion; each prints a single [PASS]/[FAIL] line with the
measured quantities and its wall time.  Stated runtime budgets assume an
8-core workstation; the printed times are diagnostics for the hardware at
hand.  Frozen constants are regression values measured from these exact
kernels and discretizations.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines live.
"""

import time

import numpy as np
import pytest

from boltzbox.collision import default_operator
from boltzbox.geometry import ball, build_cycle, certify_axis, ellipsoid
from boltzbox.homogeneous import bimodal_radial, solve_homogeneous
from boltzbox.linearized import (ConservationBasis, enforce_conservation,
                                 project_P, solve_perturbation)
from boltzbox.pipeline import run_named_scenario
from boltzbox.transport import (InhomogeneousState, NonContractionError,
                                PhaseGrid, build_cycle_cache, mild_step,
                                picard_local_solve)
from boltzbox.velocity import Field, weight

NU0_EXACT = 4.0 * np.sqrt(2.0 * np.pi)

# frozen regression values ([DERIVED]: independent oracles / first runs of
# the final kernels at the pinned discretizations)
CERTIFIED_N12 = 3.192e-4         # ||Q(mu,mu)||_inf / nu(0), v_max=6, (8,16)
CERTIFIED_N16 = 2.310e-4
GLBB_MU_N12 = 6.3177             # min_v nu(v)/<v> on the n_v=12 lattice
GLBB_BIMODAL_N12 = 5.2391        # same for the stock bimodal G0


def _verdict(num: int, desc: str, t0: float, checks: list):
    dt = time.perf_counter() - t0
    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{name}{'' if passed else ' <-- FAIL'}"
                       for name, passed in checks)
    line = (f"[{'PASS' if ok else 'FAIL'}] criterion {num:02d}: {desc} "
            f"[{detail}] ({dt:.1f} s)")
    print(line)
    assert ok, line


def _nu_oracle(s):
    """Closed form of R mu at speed s (1D reduction of the hard-sphere
    kernel against the Maxwellian)."""
    from scipy.special import erf
    s = np.asarray(s, float)
    out = np.full(s.shape, NU0_EXACT)
    p = s > 0
    sp = s[p]
    out[p] = 2.0 * np.pi * (np.sqrt(2.0 / np.pi) * np.exp(-sp * sp / 2.0) +
                            (sp + 1.0 / sp) * erf(sp / np.sqrt(2.0)))
    return out


def test_criterion_01_equilibrium_annihilation():
    t0 = time.perf_counter()
    r12 = default_operator().certified_tolerance
    r16 = default_operator(6.0, 16).certified_tolerance
    _verdict(1, "||Q(mu,mu)||/nu(0) small and decreasing", t0, [
        (f"n12 ratio {r12:.3e} <= 5e-3", r12 <= 5e-3),
        (f"n16 ratio {r16:.3e} < n12", r16 < r12),
        ("n12 matches frozen", r12 == pytest.approx(CERTIFIED_N12, rel=1e-3)),
        ("n16 matches frozen", r16 == pytest.approx(CERTIFIED_N16, rel=1e-3)),
    ])


def test_criterion_02_collision_invariants():
    t0 = time.perf_counter()
    op = default_operator()
    g = op.grid
    W = g.cell_weight
    inv = np.column_stack([np.ones(g.n_nodes), g.nodes,
                           np.sum(g.nodes ** 2, axis=1)])
    rng = np.random.default_rng(0)
    worst_fix, worst_raw = 0.0, 0.0
    for _ in range(20):
        f = np.zeros(g.n_nodes)
        for _ in range(3):       # positive Gaussian mixture, unit mass
            c = rng.uniform(-2, 2, 3)
            s = rng.uniform(0.5, 1.5)
            d = g.nodes - c
            f += rng.uniform(0.2, 1.0) * \
                np.exp(-np.sum(d * d, axis=1) / (2 * s * s))
        f /= W * f.sum()
        qf = op.q(f, f, conservative=True)
        qr = op.q(f, f, conservative=False)
        worst_fix = max(worst_fix, np.max(np.abs(W * (qf @ inv))))
        worst_raw = max(worst_raw, np.max(np.abs(W * (qr @ inv))))
    tol = op.certified_tolerance
    _verdict(2, "collision invariants, 20 random nonnegative fields", t0, [
        (f"with fix {worst_fix:.2e} <= 1e-12", worst_fix <= 1e-12),
        (f"without {worst_raw:.2e} <= certified {tol:.2e}",
         worst_raw <= tol),
    ])


def test_criterion_03_collision_frequency_oracle():
    t0 = time.perf_counter()
    op = default_operator(6.0, 16)
    radii = np.linspace(0.0, 5.0, 20)
    # radii along a coordinate axis: the lattice quadrature is anisotropic
    # at this resolution and the certified direction is axis-aligned
    V = np.zeros((20, 3))
    V[:, 0] = radii
    got = op.collision_frequency(op.mu, V)
    want = _nu_oracle(radii)
    rel = np.max(np.abs(got - want) / want)
    rel0 = abs(got[0] - NU0_EXACT) / NU0_EXACT
    _verdict(3, "collision frequency vs closed form at 20 radii", t0, [
        (f"max rel err {rel:.2e} <= 1e-3", rel <= 1e-3),
        (f"nu(0) rel err {rel0:.2e} <= 1e-3", rel0 <= 1e-3),
    ])


def test_criterion_04_collision_frequency_lower_bound():
    t0 = time.perf_counter()
    op = default_operator()
    br = np.sqrt(1.0 + np.sum(op.grid.nodes ** 2, axis=1))
    lb_mu = float(np.min(op.nu_vec / br))
    g0 = bimodal_radial(op)
    lb_g0 = float(np.min(op.collision_frequency(g0.values) / br))
    _verdict(4, "lower bound min R G / <v> > 0 (mu and bimodal)", t0, [
        (f"mu bound {lb_mu:.4f} > 0", lb_mu > 0),
        (f"bimodal bound {lb_g0:.4f} > 0", lb_g0 > 0),
        ("mu matches frozen", lb_mu == pytest.approx(GLBB_MU_N12, rel=1e-3)),
        ("bimodal matches frozen",
         lb_g0 == pytest.approx(GLBB_BIMODAL_N12, rel=1e-3)),
    ])


def test_criterion_05_homogeneous_relaxation():
    t0 = time.perf_counter()
    from boltzbox.homogeneous import radial_symmetrize
    op = default_operator(6.0, 12, 2, 4)
    g0 = bimodal_radial(op)
    traj = solve_homogeneous(op, g0, t_end=5.0, dt=0.0125, l0=7.0, l1=8.0,
                             record_every=10)
    span = float(traj.times[-1] - traj.times[0])
    m_drift = float(np.max(np.abs(traj.mass - traj.mass[0]))) / span
    e_drift = float(np.max(np.abs(traj.energy - traj.energy[0]))) / span
    h_inc = float(np.max(np.diff(traj.h_values), initial=0.0))
    h_tol = 10.0 * op.certified_tolerance
    rad = max(radial_symmetrize(s.g)[1] for s in traj.states)
    d0, d5 = float(traj.dist_to_mu[0]), float(traj.dist_to_mu[-1])
    _verdict(5, "bimodal relaxation to t=5", t0, [
        (f"mass drift {m_drift:.1e} <= 1e-6", m_drift <= 1e-6),
        (f"energy drift {e_drift:.1e} <= 1e-6", e_drift <= 1e-6),
        (f"H increase {h_inc:.1e} <= 10x certified", h_inc <= h_tol),
        (f"dist {d5:.3e} < {d0:.3e}", d5 < d0),
        (f"radial residual {rad:.1e} <= 1e-10", rad <= 1e-10),
    ])


def test_criterion_06_geometry_oracles():
    t0 = time.perf_counter()
    dom = ball(1.0)
    rng = np.random.default_rng(42)
    n_pts = 1000
    u = rng.normal(size=(n_pts, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    x = u * 0.9 * rng.random((n_pts, 1)) ** (1 / 3)
    v = rng.normal(size=(n_pts, 3)) * 2.0
    t_err = sp_err = 0.0
    for i in range(n_pts):
        cyc = build_cycle(dom, 0.6, x[i], v[i])
        sp0 = np.linalg.norm(v[i])
        for (t1, x1, v1), (tn, _, vn) in zip(cyc.entries, cyc.entries[1:]):
            b = float(np.dot(x1, v1))
            c = float(np.dot(x1, x1)) - 1.0
            s2 = float(np.dot(v1, v1))
            tb = (b + np.sqrt(b * b - s2 * c)) / s2
            t_err = max(t_err, abs((t1 - tn) - tb))
            sp_err = max(sp_err, abs(np.linalg.norm(vn) - sp0))
            if tn <= 0.0:
                break
    sph = ellipsoid(1.5, 0.8, 0.8)
    _, ax_resid = certify_axis(sph, np.zeros(3), np.array([1.0, 0.0, 0.0]))
    am_err = 0.0
    for _ in range(50):
        cyc = build_cycle(sph, 2.0, rng.normal(size=3) * 0.2,
                          rng.normal(size=3) * 2.0)
        ams = [np.cross(p, vv)[0] for _, p, vv in cyc.entries]
        am_err = max(am_err, float(np.max(np.abs(np.diff(ams)),
                                          initial=0.0)))
    _verdict(6, "geometry oracles (1000 ball cycles + spheroid)", t0, [
        (f"bounce-time err {t_err:.1e} <= 1e-9", t_err <= 1e-9),
        (f"speed drift {sp_err:.1e} <= 1e-12", sp_err <= 1e-12),
        (f"axis residual {ax_resid:.1e} <= 1e-9", ax_resid <= 1e-9),
        (f"angular momentum drift {am_err:.1e} <= 1e-9", am_err <= 1e-9),
    ])


def _transport_error(op, n_x: int) -> float:
    """One collisionless mild slab vs the exact characteristic back-trace
    for a separable spatial-Gaussian initial datum."""
    dom = ball(1.0)
    pg = PhaseGrid(dom, op.grid, n_x=n_x)
    dt = 0.08
    cache = build_cycle_cache(pg, dt)

    sig2 = 2.0 * 0.25 ** 2
    gv = np.exp(-0.5 * np.sum(op.grid.nodes ** 2, axis=1) / 1.44)

    def f0(x, v):
        return 0.05 * np.exp(-np.sum(x * x, axis=-1) / sig2) * \
            np.exp(-0.5 * np.sum(v * v, axis=-1) / 1.44)

    vals = 0.05 * np.exp(-np.sum(pg.spatial_nodes ** 2, axis=1) /
                         sig2)[:, None] * gv[None, :]
    state = InhomogeneousState(Field(pg.vgrid, vals), 0.0, op.mu)
    out = mild_step(op, pg, cache, state, collisions=False)
    err = 0.0
    for ix in range(pg.n_spatial):
        for iv in range(op.grid.n_nodes):
            cyc = build_cycle(dom, dt, pg.spatial_nodes[ix],
                              op.grid.nodes[iv])
            X0, V0 = cyc.position_velocity(0.0)
            err = max(err, abs(out.f.values[ix, iv] - f0(X0, V0)))
    return err


def test_criterion_07_pure_transport():
    t0 = time.perf_counter()
    op = default_operator(6.0, 12, 2, 4)     # collisions are switched off
    e9 = _transport_error(op, 9)
    e17 = _transport_error(op, 17)
    _verdict(7, "collisionless slab vs characteristic back-trace", t0, [
        (f"9^3 error {e9:.2e} <= 1e-2", e9 <= 1e-2),
        (f"17^3 error {e17:.2e} <= half of 9^3", e17 <= 0.5 * e9),
    ])


def test_criterion_08_picard_contraction():
    t0 = time.perf_counter()
    op = default_operator(4.0, 12, 2, 4)
    pg = PhaseGrid(ball(1.0), op.grid, n_x=5)
    w7 = weight(op.grid.nodes, 7.0)
    small = np.full((pg.n_spatial, op.grid.n_nodes), 1e-3) / w7[None, :]
    res = picard_local_solve(op, pg, small, op.mu, t_end=0.04, dt=0.01,
                             max_iters=8, smallness=0.1)
    big = np.full((pg.n_spatial, op.grid.n_nodes), 1.0) / w7[None, :]
    gated = runtime = False
    try:
        picard_local_solve(op, pg, big, op.mu, t_end=0.04, dt=0.01,
                           smallness=0.1)
    except NonContractionError:
        gated = True
    try:      # threshold off: the runtime ratio monitor must still fire
        picard_local_solve(op, pg, big, op.mu, t_end=0.3, dt=0.05,
                           max_iters=12)
    except NonContractionError:
        runtime = True
    _verdict(8, "Picard contraction and non-contraction paths", t0, [
        (f"small-amp converged in {res.iterations} <= 8 iters",
         res.converged and res.iterations <= 8),
        (f"final gap {res.gaps[-1]:.1e} <= 1e-8", res.gaps[-1] <= 1e-8),
        ("all ratios < 1", all(r < 1.0 for r in res.ratios)),
        ("amplitude 1.0 rejected by smallness gate", gated),
        ("amplitude 1.0 detected by ratio monitor", runtime),
    ])


def test_criterion_09_split_consistency():
    t0 = time.perf_counter()
    report = run_named_scenario("split-consistency")
    gap = report.values["split_vs_unsplit"]
    tol = report.values["scheme_tolerance"]
    _verdict(9, "split vs unsplit mild solver at t=0.5", t0, [
        (f"discrepancy {gap:.2e} <= 5x scheme tol {tol:.2e}",
         gap <= 5.0 * tol),
        ("scenario checks all passed", report.passed),
    ])


def test_criterion_10_conservation_projection():
    t0 = time.perf_counter()
    op = default_operator(6.0, 8, 2, 4)
    pg = PhaseGrid(ball(1.0), op.grid, n_x=5)
    basis = ConservationBasis(pg, op)
    rng = np.random.default_rng(5)
    f = rng.normal(size=(pg.n_spatial, op.grid.n_nodes)) * op.mu[None, :]
    p1 = project_P(f, basis)
    idem = float(np.max(np.abs(project_P(p1, basis) - p1)))
    w7 = weight(op.grid.nodes, 7.0)
    h0 = enforce_conservation(
        np.full((pg.n_spatial, op.grid.n_nodes), 1e-3) / w7[None, :], basis)
    dt = 0.015625
    run = solve_perturbation(op, pg, h0, t_end=100 * dt, dt=dt, basis=basis)
    resid = float(np.nanmax(run.cons_resid))
    _verdict(10, "conservation projection identity over 100 steps", t0, [
        (f"P idempotence defect {idem:.1e} <= 1e-12", idem <= 1e-12),
        (f"projection residual {resid:.1e} <= 1e-8", resid <= 1e-8),
    ])


def test_criterion_11_linear_decay():
    t0 = time.perf_counter()
    report = run_named_scenario("linear-decay")
    lam, _, resid = report.fits["lambda_l0"]
    half = run_named_scenario("linear-decay", {"linear.dt": "0.0078125"})
    lam2 = half.fits["lambda_l0"][0]
    stable = abs(lam2 - lam) <= 0.3 * abs(lam)
    _verdict(11, "linearized decay with stable fitted rate", t0, [
        (f"norm decayed {report.values['norm_final']:.2e} < "
         f"{report.values['norm_initial']:.2e}",
         report.values["norm_final"] < report.values["norm_initial"]),
        (f"lambda {lam:.4f} > 0", lam > 0),
        (f"fit residual {resid:.3f} <= 0.1", resid <= 0.1),
        (f"dt/2 rate {lam2:.4f} within 30%", stable),
    ])


def test_criterion_12_full_pipeline():
    t0 = time.perf_counter()
    r1 = run_named_scenario("weakly-inhomogeneous")
    r2 = run_named_scenario("weakly-inhomogeneous")
    stages = {c.stage for c in r1.checks if c.passed}
    final = r1.values.get("linear_norm_final", np.inf)
    _verdict(12, "staged pipeline at delta0=0.05, bit-identical rerun", t0, [
        ("stages a-d all passed",
         r1.passed and {"a", "b", "c", "d"} <= stages),
        (f"t** = {r1.t_star_star}", r1.t_star_star is not None),
        (f"final ||w_l0 [F-mu]|| {final:.2e} < 0.2 delta0 = 1e-2",
         final < 0.01),
        ("rerun bit-identical", r1.to_run_json() == r2.to_run_json()),
    ])
