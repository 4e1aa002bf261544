import numpy as np
import pytest

import relaymtl.sim as sim
from relaymtl.runtime import (NotTerminated, RunLog, StepRecord, audit, cumulative_effort, run_algorithm1,
                              service_gaps, service_times, should_resolve)
from relaymtl.scenario import scenario_from_dict
from relaymtl.sim import ServiceEvent
from relaymtl.solver import SolverConfig


def mini_doc(**over):
    # N must exceed the dwell steps (6 here) so each service deadline lies inside the plan
    doc = {
        "schema": 1, "name": "mini", "N": 8, "force": True, "seed": 3,
        "relay": {"position": [0, 0, 1], "u_min": [-20] * 4, "u_max": [20] * 4},
        "explorers": [{"name": "a", "position": [30, 10], "d_bar": 0.04}],
        "regions": {"D": {"center": [0, 0, 2], "size": [60, 60, 4]}},
        "formula": "G D",
    }
    doc.update(over)
    return doc


def _log(inputs, N_bar):
    lg = RunLog("t", 0, 0.5, 4, ["a"], [6], 1.0, 4.0, 5.0)
    for k, u in enumerate(inputs):
        lg.steps.append(StepRecord(k, 0.5 * k, np.zeros(8), np.zeros(3), [np.zeros(4)], [np.zeros(4)], [0.0],
                                   [0.0], u0=None if u is None else np.asarray(u, float)))
    lg.N_bar, lg.terminated = N_bar, True
    return lg


def test_should_resolve_examples():
    assert should_resolve({2}, 5, 0, 10) is True
    assert should_resolve(set(), 10, 0, 10) is True
    assert should_resolve(set(), 9, 0, 10) is False
    assert should_resolve(set(), 13, 4, 10) is False


def test_cumulative_effort_examples():
    assert cumulative_effort(_log([[3, 4, 0, 0], [0, 0, 0, 0]], 2)) == pytest.approx(5.0)
    # inputs at or after N_bar do not count
    assert cumulative_effort(_log([[3, 4, 0, 0], [1, 0, 0, 0], [9, 9, 9, 9]], 2)) == pytest.approx(6.0)
    lg = _log([[1, 0, 0, 0]], 1)
    lg.terminated = False
    with pytest.raises(NotTerminated):
        cumulative_effort(lg)


def test_service_times_and_gaps():
    lg = _log([None] * 10, 9)
    lg.services = [ServiceEvent(3, (0,), "relay"), ServiceEvent(7, (0,), "relay")]
    assert service_times(lg, 0) == [0.0, 1.5, 3.5]
    assert service_gaps(lg, 0) == [3, 4, 2]


def test_start_in_goal_terminates_immediately():
    cfg = scenario_from_dict(mini_doc(explorers=[{"position": [1, 1], "d_bar": 0.04}]))
    lg = run_algorithm1(cfg, cfg.full_formula())
    assert lg.terminated and lg.N_bar == 0
    assert cumulative_effort(lg) == 0.0 and lg.resolves == []


@pytest.fixture(scope="module")
def quiet_run():
    # zero realized disturbance while the dwell bound still uses d_bar
    orig = sim.sample_disturbance
    sim.sample_disturbance = lambda rng, d_bar, m=4: np.zeros(m)
    try:
        cfg = scenario_from_dict(mini_doc())
        phi = cfg.full_formula()
        return cfg, phi, run_algorithm1(cfg, phi, solver=SolverConfig(node_limit=5000))
    finally:
        sim.sample_disturbance = orig


def test_zero_disturbance_run(quiet_run):
    cfg, phi, lg = quiet_run
    assert lg.terminated and lg.N_bar > 0 and len(lg.resolves) >= 2
    assert cfg.dwell_steps() == [6]
    assert max(service_gaps(lg, 0)) <= 6
    for r in lg.steps:
        assert r.e1[0] <= 1e-9 and max(r.e1_max, default=0.0) <= 1e-9
    times = service_times(lg, 0)
    assert times == sorted(set(times)) and times[0] == 0.0
    checks = audit(lg, phi)
    assert checks["gaps_ok"] and checks["provenance_ok"] and checks["monitor_weak"]
    assert checks["inner_audit_violations"] == 0


def test_resolves_only_on_service_or_exhaustion(quiet_run):
    cfg, _, lg = quiet_run
    serviced = {e.t_index for e in lg.services if e.trigger == "relay"}
    prev = 0
    for r in lg.resolves[1:]:
        assert r.index in serviced or r.index == prev + cfg.N
        prev = r.index


def test_run_is_deterministic():
    cfg = scenario_from_dict(mini_doc(explorers=[{"position": [-12, 25], "d_bar": 0.04}]))
    phi = cfg.full_formula()
    a, b = run_algorithm1(cfg, phi), run_algorithm1(cfg, phi)
    assert a.N_bar == b.N_bar
    assert cumulative_effort(a) == cumulative_effort(b)
    for ra, rb in zip(a.steps, b.steps):
        np.testing.assert_array_equal(ra.x0, rb.x0)


def test_infeasible_spec_aborts():
    from relaymtl.runtime import SynthesisAborted

    doc = mini_doc(regions={"D": {"center": [0, 0, 2], "size": [60, 60, 4]},
                            "far": {"center": [500, 0, 2], "size": [1, 1, 1]}},
                   formula="G D & F[0,2] far")
    cfg = scenario_from_dict(doc)
    with pytest.raises(SynthesisAborted) as info:
        run_algorithm1(cfg, cfg.full_formula())
    assert "infeasible" in str(info.value)
    assert info.value.diagnostics["index"] == 0

