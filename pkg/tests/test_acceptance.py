"""Acceptance criteria 1 to 9. Each test prints one PASS/FAIL line (also repeated in the summary)."""

import math
import random
import time

import numpy as np
import pytest

import conftest
from relaymtl.dwell import e2_envelope, kappa, max_dwell_time, phi_bound
from relaymtl.linalg import max_singular_value, solve_care, sym_eig_extremes
from relaymtl.mtl import Trace, eval_strong, eval_weak
from relaymtl.outputs import run_scenario
from relaymtl.runtime import _pos3
from relaymtl.scenario import load_scenario
from relaymtl.sim import double_integrator_matrices, explorer_model

from oracles import (enumerate_optimum, pinned_feasible, random_formula, random_milp, random_points,
                     synthetic_services)

REFERENCE_P = np.array([[0.23, 0, 0.22, 0], [0, 0.23, 0, 0.22], [0.22, 0, 0.52, 0], [0, 0.22, 0, 0.52]])
TIE = 1e-9  # relative tolerance for equal efforts from identical trajectories


def verdict(k, ok, detail):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} ({detail})"
    conftest.ACCEPTANCE_LINES[k] = line
    print(line)
    assert ok, line


_RUNS = {}


def desk_run(name, variant, out_dir=None):
    key = (name, variant, out_dir)
    if key not in _RUNS:
        cfg = load_scenario(f"builtin:{name}", desk=True)
        _RUNS[key] = run_scenario(cfg, variant=variant, out_dir=out_dir)
    return _RUNS[key]


def test_criterion_1_care():
    A, B, _ = double_integrator_matrices()
    t = time.perf_counter()
    P = solve_care(A, B, 0.1)
    dt = time.perf_counter() - t
    err = float(np.max(np.abs(P - REFERENCE_P)))
    verdict(1, err <= 0.01 and dt < 1.0, f"max entry error {err:.4f}, {dt * 1e3:.1f} ms")


def test_criterion_2_dwell_bound():
    worst, bad = 0.0, 0
    for seed in range(100):
        d_bar = [0.04, 0.03, 0.02][seed % 3]
        x_g = np.random.default_rng(seed + 1000).uniform(-2, 2, size=4)
        x_g[2:] = 0
        system, recs = synthetic_services(seed, d_bar, x_g, gap_steps=6, n_intervals=2)
        s_A = max_singular_value(system.explorers[0].A)
        kap = kappa(s_A, float(np.linalg.norm(x_g)), d_bar)
        for t, t_s, e1, *_ in recs:
            bound = phi_bound(t, t_s, kap, s_A)
            bad += e1 > bound + 1e-12
            worst = max(worst, e1 / bound if bound > 0 else 0.0)
    s_A = max_singular_value(double_integrator_matrices()[0])
    fixed = 0.0
    for d_bar in (0.04, 0.03, 0.02):
        kap = kappa(s_A, 0.0, d_bar)
        tau = max_dwell_time(s_A, 1.0, kap)
        fixed = max(fixed, abs(phi_bound(tau, 0.0, kap, s_A) - 1.0))
    verdict(2, bad == 0 and fixed <= 1e-12,
            f"{bad} violations over 100 seeds, max e1/Phi {worst:.3f}, |Phi(tau)-V_T| {fixed:.1e}")


def _e2_violations(run_log, lam):
    """Samples of a recorded run where ||e2|| exceeds the envelope from its last service."""
    Ts, bad, count = run_log.Ts, 0, 0
    x_g = np.zeros(4)
    resets = {i: {0} for i in range(run_log.n_explorers)}
    for ev in run_log.services:
        for i in ev.explorers:
            resets[i].add(ev.t_index)
    for t, i, _, e2 in run_log.substeps:
        s = max(k for k in resets[i] if k * Ts < t - 1e-12)
        e2_s = float(np.linalg.norm(run_log.steps[s].x[i] - x_g))
        count += 1
        bad += e2 > e2_envelope(*lam, 0.1, e2_s, t - s * Ts) * (1 + 1e-9) + 1e-12
    return bad, count


def test_criterion_3_e2_envelope():
    m = explorer_model(0.0, 0.1)
    lam = sym_eig_extremes(m.P)
    bad = count = 0
    for seed in range(30):
        x_g = np.random.default_rng(seed).uniform(-5, 5, size=4)
        _, recs = synthetic_services(seed, 0.04, x_g, gap_steps=5, n_intervals=3)
        for t, t_s, _, e2, e2_s, _ in recs:
            count += 1
            bad += e2 > e2_envelope(*lam, 0.1, e2_s, t - t_s) * (1 + 1e-9) + 1e-12
    b, c = _e2_violations(desk_run("scenario1", "phi1").log, lam)
    verdict(3, bad + b == 0, f"{bad + b} violations over {count + c} samples (30 synthetic runs, desk run)")


def test_criterion_4_encoder_oracle():
    r = random.Random(5)
    mismatch = 0
    for _ in range(500):
        phi = random_formula(r, 3)
        pts = random_points(r, r.randrange(0, 13))
        mismatch += pinned_feasible(phi, pts) != eval_weak(Trace.from_sequences(1.0, y0=pts), phi, 0,
                                                           linearized=True)
    r = random.Random(11)
    broken = 0
    for _ in range(1000):
        phi = random_formula(r, 3)
        tr = Trace.from_sequences(1.0, y0=random_points(r, r.randrange(0, 13)))
        j = r.randrange(0, tr.horizon + 1)
        broken += eval_strong(tr, phi, j) and not eval_weak(tr, phi, j)
    verdict(4, mismatch == 0 and broken == 0,
            f"{mismatch}/500 feasibility mismatches, {broken}/1000 strong-not-weak pairs")


def test_criterion_5_solver_exactness():
    from relaymtl.solver import solve

    worst, bad = 0.0, 0
    for seed in range(50):
        M, data = random_milp(np.random.default_rng(1000 + seed), max_binaries=12)
        ref = enumerate_optimum(data)
        res = solve(M)
        if math.isinf(ref):
            bad += res.status != "Infeasible"
            continue
        gap = abs(res.objective - ref) / max(1.0, abs(ref))
        worst = max(worst, gap)
        bad += res.status != "Optimal" or gap > 1e-7
    verdict(5, bad == 0, f"{bad}/50 mismatches, worst relative gap {worst:.1e}")


def test_criterion_6_desk_scenario1():
    out = desk_run("scenario1", "phi1")
    m, lg = out.metrics, out.log
    gaps = [g * lg.Ts <= n * lg.Ts for g, n in zip(m["max_gap_steps"], m["dwell_steps"])]
    ok = (m["terminated"] and max(m["max_e1"]) <= lg.V_T + 1e-6 and all(gaps) and m["monitor_weak"]
          and lg.wall_time < 300)
    verdict(6, ok, f"N_bar={m['N_bar']}, max e1 {max(m['max_e1']):.4f}, gaps {m['max_gap_steps']} "
                   f"vs {m['dwell_steps']}, weak={m['monitor_weak']}, {lg.wall_time:.1f} s")


def _le(a, b):
    return a <= b + TIE * max(1.0, abs(b))


def test_criterion_7_effort_ordering():
    e = {(s, v): desk_run(s, v).metrics["cumulative_effort"]
         for s in ("scenario1", "scenario2") for v in ("phi1", "phi2", "phi3")}
    one = [e["scenario1", v] for v in ("phi1", "phi2", "phi3")]
    two = [e["scenario2", v] for v in ("phi3", "phi2", "phi1")]
    ok = None not in one + two and _le(one[0], one[1]) and _le(one[1], one[2]) and _le(two[0], two[1]) \
        and _le(two[1], two[2])
    verdict(7, ok, "I phi1..3: " + ", ".join(f"{x:.4f}" for x in one) +
            "; II phi3..1: " + ", ".join(f"{x:.4f}" for x in two))


def test_criterion_8_inner_approximation():
    plan_bad = real_bad = services = 0
    runs = [desk_run(s, v) for s in ("scenario1", "scenario2") for v in ("phi1", "phi2", "phi3")]
    for out in runs:
        lg = out.log
        plan_bad += sum(r.inner_audit_violations for r in lg.resolves)
        for ev in lg.services:
            if ev.trigger != "relay":
                continue
            rec = lg.steps[ev.t_index]
            for i in ev.explorers:
                services += 1
                real_bad += float(np.linalg.norm(rec.y0 - _pos3(rec.x_hat[i]))) > lg.eta
    verdict(8, plan_bad == 0 and real_bad == 0,
            f"{len(runs)} runs: {plan_bad} planned and {real_bad}/{services} realized service violations")


def test_criterion_9_determinism(tmp_path):
    desk_run("scenario1", "phi1", str(tmp_path / "a"))
    cfg = load_scenario("builtin:scenario1", desk=True)
    run_scenario(cfg, variant="phi1", out_dir=tmp_path / "b")
    same = {f: (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
            for f in ("metrics.json", "trajectories.csv")}
    verdict(9, all(same.values()), ", ".join(f"{f} {'identical' if s else 'differs'}" for f, s in same.items()))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
