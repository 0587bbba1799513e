"""Acceptance checks, one test per criterion.

Each test prints a single ``[criterion N] PASS|FAIL ...`` line (visible in
``pytest -v`` output) and then asserts.  Seeds are fixed constants chosen
before any run; sample sizes follow the tolerances being tested.

Run just this file with ``pytest tests/test_acceptance.py -v``.
"""
import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from hermval.bodies import Ball, Polytope, box, random_polytope
from hermval.geomlin import (
    ComplexStructure,
    RandomStream,
    Subspace,
    cosine_angle,
    gr24_plane,
    sample_complex_subspace,
    sample_sphere_half,
    sample_subspace,
    strichartz_hwv,
)
from hermval.intrinsic import intrinsic_volume, kubota_oracle, steiner_oracle
from hermval import kinematics as kin
from hermval import valuations as val

pytestmark = pytest.mark.slow

ROOT = RandomStream(20240611)
J2 = ComplexStructure(2)


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def eval_exact(est):
    return est.value if est.samples == 0 else math.nan


def test_criterion_01_oracle_equivalence(capsys):
    s0 = ROOT.child(1)
    worst_sigma, worst_rel, t0 = 0.0, 0.0, time.time()
    for d in (3, 4):
        for i in range(10):
            s = s0.child(d).child(i)
            P = random_polytope(d, 2 * d + 4, s.child(0))
            st = steiner_oracle(P, s.child(1), 1_000_000)
            for j in range(d + 1):
                ests = [intrinsic_volume(P, j, s.child(2)), st[j],
                        kubota_oracle(P, j, s.child(3).child(j), 20_000)]
                for a in range(3):
                    for b in range(a + 1, 3):
                        x, y = ests[a], ests[b]
                        err = math.hypot(x.std_error, y.std_error)
                        diff = abs(x.value - y.value)
                        if diff > 1e-9 * abs(x.value):
                            worst_sigma = max(worst_sigma, diff / err)
                        worst_rel = max(worst_rel, diff / abs(x.value))
    ok = worst_sigma <= 3.0 and worst_rel <= 0.02
    report(capsys, 1, ok, f"20 polytopes, worst pair {worst_sigma:.2f} sigma, {100 * worst_rel:.2f}% "
                          f"({time.time() - t0:.0f}s)")


def test_criterion_02_gr24_cosine(capsys):
    E0 = Subspace(np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]]), 4)
    s = ROOT.child(2)
    T1 = sample_sphere_half(s.child(0), 10_000)
    T2 = sample_sphere_half(s.child(1), 10_000)
    err = max(abs(cosine_angle(gr24_plane(a, b), E0) - abs(a[0] + b[0] - 1)) for a, b in zip(T1, T2))
    report(capsys, 2, err <= 1e-9, f"max error {err:.2e} over 10^4 sphere pairs")


def test_criterion_03_strichartz(capsys):
    base, imag, low = 0.0, 0.0, math.inf
    for n in (2, 3):
        J = ComplexStructure(n)
        e = np.eye(2 * n)
        base = max(base, abs(complex(strichartz_hwv(Subspace(np.array([e[0], e[n]]), 2 * n), J)) - 1))
        for i in range(1000):
            F = complex(strichartz_hwv(sample_complex_subspace(1, J, ROOT.child(3).child(n).child(i)), J))
            imag = max(imag, abs(F.imag))
            low = min(low, F.real)
    ok = base <= 1e-9 and imag <= 1e-9 and low >= -1e-9
    report(capsys, 3, ok, f"|F(E0)-1|={base:.1e}, max|Im F|={imag:.1e}, min Re F={low:.3g}")


def test_criterion_04_degeneracy_anchors(capsys):
    s = ROOT.child(4)
    bodies = [random_polytope(4, 9, s.child(0).child(i)) for i in range(3)]
    fails = []
    for b, K in enumerate(bodies):
        for l in (1, 2):
            if eval_exact(val.eval_C(0, l, K, J2, s.child(1))) != 1.0:
                fails.append(f"C_0,{l}")
        for k in range(5):
            Vk = intrinsic_volume(K, k, s.child(2))
            if not val.eval_C(k, 2, K, J2, s.child(3).child(k)).agrees_with(Vk):
                fails.append(f"C_{k},2")
            U = val.eval_U(k, 0, K, J2, s.child(4).child(k))
            if U.samples != 0 or abs(U.value - Vk.value) > 1e-12 * max(1.0, Vk.value):
                fails.append(f"U_{k},0")
    chi = val.constant_klain(0, 4, 1.0, "chi")
    vol = val.klain_function(val.volume_valuation(4), 4)
    full = Subspace(np.eye(4), 4)
    d_chi = abs(val.duality(chi)(full).value - vol(full).value)
    d2 = 0.0
    for deg, phi in ((2, val.C_valuation(2, 1, 2, 2000)), (1, val.intrinsic_valuation(1)),
                     (3, val.U_valuation(3, 1, 2, 200))):
        f = val.klain_function(phi, 4)
        for i in range(5):
            E = sample_subspace(deg, 4, s.child(5).child(deg).child(i))
            r = s.child(6).child(deg).child(i)
            d2 = max(d2, abs(val.duality(val.duality(f))(E, r).value - f(E, r).value))
    ok = not fails and d_chi <= 1e-12 and d2 <= 1e-12
    report(capsys, 4, ok, f"anchor failures {fails or 'none'}, |D(chi)-vol|={d_chi:.1e}, "
                          f"max|D^2 f - f|={d2:.1e}")


def test_criterion_05_lefschetz(capsys):
    rows = [val.verify_lefschetz(k, l, 2, ROOT.child(5).child(i), 4000, 20)
            for i, (k, l) in enumerate([(1, 1), (2, 2), (3, 2)])]
    spreads = [r["spread"] for r in rows]
    ok = max(spreads) <= 0.03
    report(capsys, 5, ok, "relative spread " + ", ".join(
        f"(k,l)=({r['k']},{r['l']}): {100 * r['spread']:.2f}%" for r in rows))


def test_criterion_06_u_dual_c(capsys):
    r = val.verify_U_equals_dual_C(2, 1, 2, ROOT.child(6), 20_000, 20)
    report(capsys, 6, r["spread"] <= 0.03,
           f"ratio {r['mean_ratio']:.4f}, relative spread {100 * r['spread']:.2f}%")


def test_criterion_07_gram_ranks(capsys):
    rows = [val.gram_report(k, 2, ROOT.child(7).child(k), 20_000, 40) for k in range(5)]
    ranks = tuple(r["rank"] for r in rows)
    gap = min(r["gap"] for r in rows)
    ok = ranks == (1, 1, 2, 1, 1) and gap >= 10
    report(capsys, 7, ok, f"ranks {ranks}, smallest gap {gap:.1f}")


def test_criterion_08_c2_identity(capsys):
    s = ROOT.child(8)
    bodies = [Ball(np.zeros(4), 1.0)] + [random_polytope(4, 8, s.child(0).child(i)) for i in range(10)]
    ident = kin.verify_c2_identity(bodies, s.child(1), 20_000)
    ball = ident["rows"][0]
    chain = abs(ball["phi"] + 2 * ball["psi"] - 3 * math.pi) <= 1e-9 and abs(ball["V2"] - 3 * math.pi) <= 1e-9
    klain = kin.verify_phi_klain(s.child(2), 4000, 20)
    dev = max(r["deviation_sigma"] for r in ident["rows"])
    rel = max(r["relative_sigma"] for r in ident["rows"])
    kdev = max(r["deviation_sigma"] for r in klain["rows"])
    ok = ident["pass"] and chain and klain["pass"]
    report(capsys, 8, ok, f"phi+2psi-V2: max {dev:.2f} sigma, max sigma/V2 {100 * rel:.2f}%, "
                          f"B4 chain pi+2pi=3pi {'ok' if chain else 'broken'}; "
                          f"Klain formula max {kdev:.2f} sigma at 20 planes")


def test_criterion_09_beta(capsys):
    s = ROOT.child(9)
    bodies, held = kin.default_beta_bodies(s.child(0), 2)
    fit, reg, cache = kin.solve_beta(2, bodies, s.child(1), 20_000)
    delta = fit.values - np.array([0.5, -0.5])
    maha = float(math.sqrt(delta @ np.linalg.solve(fit.covariance, delta)))
    row = [cache(held, 2, p) for p in fit.names]
    pred = float(reg.predict([[r.value for r in row]])[0])
    perr = float(reg.predict_err([[r.value for r in row]], [[r.std_error for r in row]])[0])
    lhs = kin.lagrangian_crofton_lhs(held, J2, s.child(2), 20_000)
    held_dev = abs(pred - lhs.value) / math.hypot(perr, lhs.std_error)
    ok = maha <= 3.0 and fit.residual <= 0.02 and held_dev <= 3.0
    b = ", ".join(f"{v:.4f}+-{e:.4f}" for v, e in zip(fit.values, fit.sigmas))
    report(capsys, 9, ok, f"beta=({b}), joint distance {maha:.2f} sigma from (1/2,-1/2), "
                          f"residual {100 * fit.residual:.2f}%, held-out {held_dev:.2f} sigma")


def test_criterion_10_kappa(capsys):
    s = ROOT.child(10)
    t0 = time.time()
    train, held = kin.default_kappa_pairs(s.child(0), 2)
    fit, reg, cache = kin.solve_kappa(2, train, s.child(1), 400)
    k0, e0 = fit.value_of((0, 4, 0, 0)), fit.sigma_of((0, 4, 0, 0))
    pred, _ = kin.predict_kappa_pair(reg, cache, *held)
    lhs = kin.principal_kinematic_lhs(*held, J2, s.child(2), 400)
    rel = abs(pred - lhs.value) / abs(lhs.value)
    minutes = (time.time() - t0) / 60
    ok = fit.residual <= 0.02 and abs(k0 - 1) <= 3 * e0 and rel <= 0.05 and minutes <= 15
    report(capsys, 10, ok, f"residual {100 * fit.residual:.2f}%, kappa(0,4,0,0)={k0:.3f}+-{e0:.3f}, "
                           f"held-out {100 * rel:.2f}% off, {minutes:.1f} min")


def test_criterion_11_gamma(capsys):
    s = ROOT.child(11)
    t0 = time.time()
    bodies, _ = kin.default_gamma_bodies(s.child(0), 3)
    fit1, _, _ = kin.solve_gamma(3, 3, 1, 2, bodies, s.child(1), 100_000)
    fit2, _, _ = kin.solve_gamma(3, 3, 1, 2, bodies, s.child(2), 200_000)
    drift = float(np.max(np.abs(fit2.values - fit1.values) / np.abs(fit1.values)))
    minutes = (time.time() - t0) / 60
    ok = fit1.residual <= 0.10 and fit2.residual <= 0.10 and drift <= 0.10 and minutes <= 30
    report(capsys, 11, ok, f"gamma {fit1.values.round(4).tolist()} -> {fit2.values.round(4).tolist()} "
                           f"(drift {100 * drift:.2f}%), residuals {100 * fit1.residual:.2f}% / "
                           f"{100 * fit2.residual:.2f}%, {minutes:.1f} min")


def _split(P, c):
    """Halves of ``P`` cut by ``x_0 = c`` and their common facet."""
    V = P.vertices
    cut = []
    for F in P.faces(1):
        a, b = F.vertices
        if (a[0] - c) * (b[0] - c) < 0:
            t = (c - a[0]) / (b[0] - a[0])
            cut.append(a + t * (b - a))
    cut = np.vstack([np.array(cut).reshape(-1, V.shape[1]), V[np.abs(V[:, 0] - c) <= 1e-12]])
    return (Polytope(np.vstack([V[V[:, 0] <= c], cut])), Polytope(np.vstack([V[V[:, 0] >= c], cut])),
            Polytope(cut))


def test_criterion_12_kazarnovskii(capsys):
    s = ROOT.child(12)
    bad = []
    for i in range(3):
        P = random_polytope(4, 9, s.child(0).child(i))
        kz = lambda K: val.kazarnovskii(K, J2, s.child(1).child(i))
        a = kz(P)
        c = float(P.vertices[:, 0].mean())
        lo, hi, mid = _split(P, c)
        if not a.agrees_with(kz(lo) + kz(hi) - kz(mid)):
            bad.append(f"additivity {i}")
        if not a.agrees_with(kz(P.translate(s.child(2).child(i).normal(size=4)))):
            bad.append(f"translation {i}")
        if not kz(P.scale(1.7)).agrees_with(1.7 ** 2 * a):
            bad.append(f"homogeneity {i}")
    C = box([2.0, 1.0, 1.0, 1.0])
    h = box([1.0, 1.0, 1.0, 1.0])
    mid = Polytope(np.array([[1.0, y, z, w] for y in (0, 1) for z in (0, 1) for w in (0, 1)]))
    if not val.kazarnovskii(C, J2).agrees_with(
            val.kazarnovskii(h, J2) + val.kazarnovskii(h.translate([1, 0, 0, 0]), J2) - val.kazarnovskii(mid, J2)):
        bad.append("box additivity")
    span = val.kazarnovskii_span(2, s.child(3), 20_000)
    ok = not bad and span["residual"] <= 0.03
    report(capsys, 12, ok, f"property failures {bad or 'none'}; span residual {100 * span['residual']:.2f}% "
                           f"with alpha {np.round(span['alpha'], 3).tolist()}")


def test_criterion_13_determinism(capsys, tmp_path):
    body = tmp_path / "p.json"
    body.write_text(json.dumps(random_polytope(4, 8, 13).to_json()))
    commands = [
        ["valuation", "C", "2", "1", str(body), "--samples", "2000"],
        ["valuation", "U", "3", "1", str(body), "--samples", "200"],
        ["valuation", "kaz", str(body)],
        ["valuation", "lambda", "C", "3", "2", str(body), "--samples", "500"],
        ["valuation", "dual", "C", "2", "1", "--samples", "1000"],
        ["intrinsic", "2", str(body), "--method", "kubota"],
        ["verify", "duality", "--samples", "2000"],
        ["constants", "beta", "--samples", "1000"],
    ]
    env = dict(os.environ, HERMVAL_BUILD="acceptance")
    differ = []
    for cmd in commands:
        outs = set()
        for threads in ("1", "1", "2"):
            res = subprocess.run([sys.executable, "-m", "hermval.cli", *cmd, "--seed", "13",
                                  "--threads", threads], capture_output=True, env=env)
            outs.add((res.returncode, res.stdout))
        if len(outs) != 1:
            differ.append(cmd[:2])
    report(capsys, 13, not differ,
           f"{len(commands)} commands x 3 runs (threads 1, 1, 2): "
           f"{'byte-identical' if not differ else f'differences in {differ}'}")

