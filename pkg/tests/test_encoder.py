import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relaymtl.encoder import (EncodingContext, EncodingError, build_milp, closed_loop_discrete,
                              encode_formula, encode_input_bounds, encode_objective, encode_relay_dynamics,
                              precompute_estimates, reachable_bounds)
from relaymtl.linalg import spectral_radius, zoh_discretize
from relaymtl.mtl import (TRUE, UNBOUNDED, Always, Atom, BoxRegion, Eventually, Interval, NormBall,
                          Trace, eval_strong, eval_weak, necessary_length, parse_formula)
from relaymtl.sim import explorer_model, hover_relay_model
from relaymtl.solver import EQ, MilpModel, export_lp, solve

from oracles import BOXES, pinned_feasible, random_formula, random_points


def test_precompute_estimates_examples():
    m = explorer_model(0.04, 0.1)
    Acl = closed_loop_discrete(m, 0.5)
    x_g = np.array([2.0, -3.0, 0.0, 0.0])
    est = precompute_estimates(x_g, x_g, Acl, m.C, 5)
    np.testing.assert_allclose(est, np.tile([2.0, -3.0, 0.0], (5, 1)))
    est = precompute_estimates([1, 0, 0, 0], np.zeros(4), Acl, m.C, 2)
    np.testing.assert_allclose(est[1], m.C @ Acl @ [1, 0, 0, 0])
    assert spectral_radius(Acl) < 1
    with pytest.raises(EncodingError):
        precompute_estimates(np.zeros(3), np.zeros(4), Acl, m.C, 2)


def test_precompute_matches_observer_integration():
    from relaymtl.linalg import rk4_step
    from relaymtl.sim import explorer_control, observer_derivative

    m = explorer_model(0.0, 0.1)
    x_g = np.array([1.0, 1.0, 0.0, 0.0])
    xh = np.array([-5.0, 3.0, 0.5, 0.0])
    est = precompute_estimates(xh, x_g, closed_loop_discrete(m, 0.5), m.C, 4)
    z = xh.copy()
    for k in range(1, 4):
        for _ in range(200):
            z = rk4_step(lambda t, y: observer_derivative(y, explorer_control(y, x_g, m), m, x_g), z, 0.0,
                         0.5 / 200)
        np.testing.assert_allclose(est[k], m.C @ z, atol=1e-10)


def _relay():
    relay = hover_relay_model(-10, 10)
    Ad, Bd = zoh_discretize(relay.A0, relay.B0, 0.5)
    return relay, Ad, Bd


def test_relay_dynamics_encoding():
    relay, Ad, Bd = _relay()
    M = MilpModel()
    ctx = EncodingContext(0, 1)
    x0 = np.arange(8.0)
    xv, uv = encode_relay_dynamics(M, ctx, Ad, Bd, x0)
    assert sum(c.tag.startswith("dyn") for c in M.constraints) == 8
    assert sum(c.tag.startswith("init") for c in M.constraints) == 8
    # pin inputs and read back the next state
    u = np.array([1.0, -0.5, 0.25, 2.0])
    for v, val in zip(uv[0], u):
        M.add_constraint([(v, 1.0)], EQ, val, "pin u")
    r = solve(M)
    np.testing.assert_allclose([r.assignment[v] for v in xv[1]], Ad @ x0 + Bd @ u, atol=1e-9)


def test_input_bounds_and_objective():
    relay, Ad, Bd = _relay()
    M = MilpModel()
    ctx = EncodingContext(0, 3)
    xv, uv = encode_relay_dynamics(M, ctx, Ad, Bd, np.zeros(8))
    encode_input_bounds(M, uv, [-10, 0, -10, -10], [10, 0, 10, 10])
    s = encode_objective(M, uv)
    M.add_constraint([(xv[3][2], 1.0)], EQ, 4.5, "climb")
    r = solve(M)
    assert r.objective == pytest.approx(9.0)  # 4.5 m of climb at 0.5 s per step
    for row in uv:
        assert r.assignment[row[1]] == 0.0
        for v in row:
            assert -10 - 1e-9 <= r.assignment[v] <= 10 + 1e-9
    u = np.array([[r.assignment[v] for v in row] for row in uv])
    assert np.sum(np.linalg.norm(u, axis=1)) <= r.objective + 1e-9
    with pytest.raises(EncodingError):
        encode_input_bounds(M, uv, [1, 0, 0, 0], [0, 0, 0, 0])
    assert len(s) == 3


def test_objective_single_channel():
    relay, Ad, Bd = _relay()
    M = MilpModel()
    xv, uv = encode_relay_dynamics(M, EncodingContext(0, 1), Ad, Bd, np.zeros(8))
    encode_input_bounds(M, uv, [-10] * 4, [10] * 4)
    encode_objective(M, uv)
    assert solve(M).objective == 0.0
    M.add_constraint([(uv[0][0], 1.0)], EQ, 3.0, "force")
    assert solve(M).objective == pytest.approx(3.0)


def test_box_atom_big_m():
    box = Atom(BoxRegion.centered("D", "y0", (0, 0, 0), (300, 300, 300)))
    assert pinned_feasible(box, [np.array([10.0, -149.0, 0.0])])
    assert not pinned_feasible(box, [np.array([151.0, 0.0, 0.0])])


def test_eventually_window_picks_last_index():
    a = BOXES[0]
    pts = [np.array([2.0, 2.0]), np.array([2.0, 2.0]), np.array([0.1, 0.1])]
    assert pinned_feasible(Eventually(Interval(0, 2), a), pts)
    assert not pinned_feasible(Eventually(Interval(0, 1), a), pts)


def test_always_eventually_beyond_horizon_is_weakly_true():
    g = BOXES[0]
    phi = Always(Interval(0), Eventually(Interval(0, 6), g))
    far, inside = np.array([2.0, 2.0]), np.array([0.1, 0.1])
    # visits at 6 and 13 cover j <= 13; later windows run past H = 19
    pts = [inside if j in (6, 13) else far for j in range(20)]
    assert pinned_feasible(phi, pts) and eval_weak(Trace.from_sequences(1.0, y0=pts), phi, 0)
    pts = [inside if j == 6 else far for j in range(20)]
    assert not pinned_feasible(phi, pts)


def test_true_has_no_constraints():
    M = MilpModel()
    encode_formula(M, TRUE, 5, lambda n, j: None)
    assert M.constraints == []


def test_norm_ball_inner_box():
    ball = NormBall("m1", "y0", "yhat1", 4.0)
    c = [np.zeros(3)]
    h = 4.0 / math.sqrt(3)
    assert pinned_feasible(Atom(ball), [np.array([h - 1e-3, h - 1e-3, -h + 1e-3])], {"yhat1": c})
    # inside the 2-norm ball but outside the inner box
    assert not pinned_feasible(Atom(ball), [np.array([3.0, 0.0, 0.0])], {"yhat1": c})
    rng = np.random.default_rng(0)
    for _ in range(200):
        v = rng.uniform(-h, h, size=3)
        assert np.linalg.norm(v) <= 4.0


def test_encoder_oracle_equivalence():
    r = random.Random(5)
    bad = []
    for it in range(500):
        phi = random_formula(r, 3)
        H = r.randrange(0, 13)
        pts = random_points(r, H)
        tr = Trace.from_sequences(1.0, y0=pts)
        if pinned_feasible(phi, pts) != eval_weak(tr, phi, 0, linearized=True):
            bad.append((it, phi, H))
    assert bad == []


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_weak_horizon_consistency(seed):
    # a trace at least L(phi) long decides phi, so feasibility equals the strong verdict
    r = random.Random(seed)
    phi = random_formula(r, 2)
    L = necessary_length(phi)
    if L == UNBOUNDED or L > 12:
        return
    pts = random_points(r, L + r.randrange(0, 3))
    tr = Trace.from_sequences(1.0, y0=pts)
    assert pinned_feasible(phi, pts) == eval_strong(tr, phi, 0, linearized=True)


def test_reachable_bounds_contain_samples():
    relay, Ad, Bd = _relay()
    rng = np.random.default_rng(2)
    x0 = rng.normal(size=8)
    bounds = reachable_bounds(Ad, Bd, x0, -np.ones(4), np.ones(4), 6)
    for _ in range(50):
        x = x0.copy()
        for k in range(6):
            x = Ad @ x + Bd @ rng.uniform(-1, 1, size=4)
            lo, hi = bounds[k + 1]
            assert np.all(x >= lo - 1e-9) and np.all(x <= hi + 1e-9)


def _mini_problem():
    relay, Ad, Bd = _relay()
    atoms = {"goal": BoxRegion.centered("goal", "y0", (3, 0, 1), (1, 1, 1)),
             "D": BoxRegion.centered("D", "y0", (0, 0, 1), (30, 30, 2))}
    phi = parse_formula("F[0,5] goal & G D", atoms)
    x0 = np.zeros(8)
    x0[2] = 1.0
    return build_milp(phi=phi, start=0, horizon=6, Ad=Ad, Bd=Bd, C0=relay.C0, x0=x0, u_min=relay.u_min,
                      u_max=relay.u_max, estimates={})


def test_build_milp_deterministic_and_solvable():
    a, b = _mini_problem(), _mini_problem()
    assert export_lp(a.model) == export_lp(b.model)
    r = solve(a.model)
    assert r.status == "Optimal"
    y = [np.array([r.assignment[v] for v in row[:3]]) for row in a.x_vars]
    assert any(abs(p[0] - 3) <= 0.5 and abs(p[1]) <= 0.5 for p in y)


def test_build_milp_true_is_dynamics_only():
    relay, Ad, Bd = _relay()
    p = build_milp(phi=TRUE, start=0, horizon=1, Ad=Ad, Bd=Bd, C0=relay.C0, x0=np.zeros(8),
                   u_min=relay.u_min, u_max=relay.u_max, estimates={})
    assert p.model.binaries == []
    assert solve(p.model).objective == 0.0


def test_estimate_sample_count_checked():
    with pytest.raises(EncodingError):
        EncodingContext(0, 3, {"yhat1": np.zeros((2, 3))})
