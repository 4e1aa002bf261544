"""Receding-horizon synthesis loop: solve, step the world, detect services,
reset estimates, specialize the formula and re-solve."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .encoder import build_milp, closed_loop_discrete, precompute_estimates
from .mtl import Formula, NormBall, Trace, atoms, evaluate, format_formula, specialize
from .sim import (System, WorldState, apply_service, build_models, detect_service,
                  in_goal_region, initial_world, step_world)
from .solver import STATUS_INFEASIBLE, SolverConfig, solve

log = logging.getLogger(__name__)

RELAY = "y0"


class SynthesisAborted(RuntimeError):
    """A solve failed; ``diagnostics`` carries the specialized formula and state snapshot."""

    def __init__(self, message: str, diagnostics: dict, run_log: "RunLog"):
        super().__init__(message)
        self.diagnostics = diagnostics
        self.run_log = run_log


class NotTerminated(RuntimeError):
    pass


def estimate_signal(i: int) -> str:
    return f"yhat{i + 1}"


def position_signal(i: int) -> str:
    return f"y{i + 1}"


@dataclass
class StepRecord:
    index: int
    time: float
    x0: np.ndarray
    y0: np.ndarray
    x: list  # true explorer states
    x_hat: list  # estimates as detected (before any reset at this index)
    e1: list  # ||x_hat - x|| at the index
    e2: list  # ||x_hat - x_g|| at the index
    e1_max: list = field(default_factory=list)  # sub-step maximum over the following period
    u0: Optional[np.ndarray] = None  # input applied over [index, index+1)
    solve_id: Optional[int] = None  # provenance of u0
    plan_offset: Optional[int] = None


@dataclass
class ResolveRecord:
    solve_id: int
    index: int
    W: tuple
    status: str
    objective: float
    formula: str
    stats: dict
    n_vars: int
    n_constraints: int
    n_binaries: int
    build_time: float
    inner_audit_violations: int = 0


@dataclass
class RunLog:
    scenario: str
    seed: int
    Ts: float
    N: int
    explorer_names: list
    dwell_steps: list
    V_T: float
    eta: float
    R_f: float
    steps: list = field(default_factory=list)
    services: list = field(default_factory=list)
    resolves: list = field(default_factory=list)
    plans: list = field(default_factory=list)  # solve id -> planned inputs (N, 4)
    substeps: list = field(default_factory=list)  # (t, i, ||e1||, ||e2||)
    N_bar: Optional[int] = None
    terminated: bool = False
    aborted: Optional[str] = None
    forced: bool = False
    wall_time: float = 0.0

    @property
    def n_explorers(self) -> int:
        return len(self.explorer_names)


def should_resolve(W, ell: int, ell_star: int, N: int) -> bool:
    """Re-plan when someone was serviced or the current plan is used up."""
    return bool(W) or ell >= ell_star + N


def cumulative_effort(run_log: RunLog) -> float:
    """Sum of ``||u0^j||_2`` over the applied inputs up to the termination index.

    The loop stops at ``N_bar`` before applying an input, so ``u0^{N_bar}``
    contributes zero.
    """
    if not run_log.terminated:
        raise NotTerminated("run did not terminate")
    total = 0.0
    for rec in run_log.steps[: run_log.N_bar]:
        if rec.u0 is not None:
            total += float(np.linalg.norm(rec.u0))
    return total


def service_times(run_log: RunLog, i: int) -> list:
    """Discrete instants (seconds) at which explorer ``i`` was serviced, starting with 0."""
    idx = {0}
    for ev in run_log.services:
        if i in ev.explorers:
            idx.add(ev.t_index)
    return [k * run_log.Ts for k in sorted(idx)]


def service_gaps(run_log: RunLog, i: int) -> list:
    """Gaps in steps between consecutive services of explorer ``i``, up to the last logged index."""
    idx = sorted({0} | {ev.t_index for ev in run_log.services if i in ev.explorers})
    last = run_log.N_bar if run_log.N_bar is not None else (run_log.steps[-1].index if run_log.steps else 0)
    gaps = [b - a for a, b in zip(idx, idx[1:])]
    if last > idx[-1]:
        # open interval at the end still counts against the dwell bound
        gaps.append(last - idx[-1])
    return gaps


def observed_trace(run_log: RunLog, last: Optional[int] = None) -> Trace:
    """Relay positions, detected estimates and true positions as an MTL trace."""
    steps = run_log.steps if last is None else run_log.steps[: last + 1]
    signals = {RELAY: [r.y0 for r in steps]}
    for i in range(run_log.n_explorers):
        signals[estimate_signal(i)] = [_pos3(r.x_hat[i]) for r in steps]
        signals[position_signal(i)] = [_pos3(r.x[i]) for r in steps]
    return Trace.from_sequences(run_log.Ts, **signals)


def _pos3(x) -> np.ndarray:
    return np.array([x[0], x[1], 0.0])


def _record(world: WorldState, system: System) -> StepRecord:
    xs = [st.x.copy() for st in world.explorers]
    xh = [st.x_hat.copy() for st in world.explorers]
    return StepRecord(
        index=world.t_index, time=world.t_index * world.Ts, x0=world.x0.copy(),
        y0=system.relay_position(world.x0), x=xs, x_hat=xh,
        e1=[float(np.linalg.norm(h - x)) for h, x in zip(xh, xs)],
        e2=[float(np.linalg.norm(h - world.x_g)) for h in xh],
    )


def inner_audit(phi: Formula, plan_trace: Trace, start: int) -> int:
    """Planned indices where a linearized norm-ball atom holds but the exact one does not."""
    bad = 0
    balls = [p for p in atoms(phi).values() if isinstance(p, NormBall)]
    for j in range(start, plan_trace.horizon + 1):
        for p in balls:
            if p.holds(plan_trace, j, linearized=True) and not p.holds(plan_trace, j):
                bad += 1
    return bad


def run_algorithm1(config, phi: Formula, *, seed: Optional[int] = None,
                   solver: Optional[SolverConfig] = None, force: bool = False) -> RunLog:
    """Run the synthesis loop on a scenario until every explorer is in the goal region.

    ``config`` is a :class:`relaymtl.scenario.ScenarioConfig` (or anything with
    the same attributes); ``phi`` is the full specification over ``y0`` and
    ``yhat{i}``. Raises :class:`SynthesisAborted` if a solve is infeasible or
    hits a limit without an incumbent.
    """
    t_start = time.perf_counter()
    seed = config.seed if seed is None else seed
    solver = solver or SolverConfig()
    relay, explorers = build_models(config)
    system = System(relay, explorers, config.Ts, substeps=config.substeps)
    world = initial_world(config, system)
    rng = np.random.default_rng(seed)
    N = config.N
    acl = [closed_loop_discrete(m, config.Ts) for m in explorers]

    run_log = RunLog(scenario=config.name, seed=seed, Ts=config.Ts, N=N,
                     explorer_names=[m.name for m in explorers], dwell_steps=config.dwell_steps(),
                     V_T=config.V_T, eta=config.eta, R_f=config.R_f, forced=force)

    plan = None
    ell_star = 0
    solve_id = -1
    ell = 0
    while True:
        rec = _record(world, system)
        run_log.steps.append(rec)
        if all(in_goal_region(world, system)):
            run_log.N_bar = ell
            run_log.terminated = True
            break
        if ell >= config.max_steps:
            run_log.aborted = f"no termination within {config.max_steps} steps"
            break
        W = detect_service(world, system)
        world, events = apply_service(world, system, W)
        run_log.services.extend(events)
        if ell == 0 or should_resolve(W, ell, ell_star, N):
            observed = observed_trace(run_log)
            spec = specialize(phi, observed, ell)
            estimates = {
                estimate_signal(i): precompute_estimates(st.x_hat, world.x_g, acl[i], explorers[i].C, N)
                for i, st in enumerate(world.explorers)
            }
            tb = time.perf_counter()
            prob = build_milp(phi=spec, start=ell, horizon=N, Ad=system.relay_Ad, Bd=system.relay_Bd,
                              C0=relay.C0, x0=world.x0, u_min=relay.u_min, u_max=relay.u_max,
                              estimates=estimates, margin=config.margin, big_M=config.big_M)
            build_time = time.perf_counter() - tb
            res = solve(prob.model, solver)
            solve_id += 1
            st = prob.model.stats()
            rr = ResolveRecord(solve_id=solve_id, index=ell, W=tuple(sorted(W)), status=res.status,
                               objective=float(res.objective), formula=format_formula(spec),
                               stats=dict(res.stats), n_vars=st["vars"], n_constraints=st["constraints"],
                               n_binaries=st["binaries"], build_time=build_time)
            run_log.resolves.append(rr)
            log.info("solve %d at index %d: %s obj=%.6g nodes=%s", solve_id, ell, res.status,
                     res.objective, res.stats.get("nodes"))
            if prob.infeasible or not res.has_solution:
                why = "infeasible" if (prob.infeasible or res.status == STATUS_INFEASIBLE) else res.status
                run_log.aborted = f"solve {solve_id} at index {ell}: {why}"
                run_log.wall_time = time.perf_counter() - t_start
                diag = {"index": ell, "formula": format_formula(spec), "x0": world.x0.tolist(),
                        "x_hat": [s.x_hat.tolist() for s in world.explorers],
                        "x": [s.x.tolist() for s in world.explorers], "status": res.status,
                        "model": st}
                raise SynthesisAborted(run_log.aborted, diag, run_log)
            plan = prob.inputs(res.assignment)
            run_log.plans.append(plan)
            ell_star = ell
            # planned relay positions against the predicted estimates
            states = prob.states(res.assignment)
            plan_signals = {RELAY: [r.y0 for r in run_log.steps[:ell]] + [relay.C0 @ s for s in states[:N]]}
            for i in range(len(explorers)):
                past = [_pos3(r.x_hat[i]) for r in run_log.steps[:ell]]
                plan_signals[estimate_signal(i)] = past + list(estimates[estimate_signal(i)])
            rr.inner_audit_violations = inner_audit(phi, Trace.from_sequences(config.Ts, **plan_signals),
                                                    ell + 1)
        offset = ell - ell_star
        u0 = plan[offset]
        rec.u0, rec.solve_id, rec.plan_offset = u0.copy(), solve_id, offset
        samples = []
        world = step_world(world, system, u0, rng, samples)
        e1_max = [0.0] * len(explorers)
        for t, i, x, xh in samples:
            e1 = float(np.linalg.norm(xh - x))
            e1_max[i] = max(e1_max[i], e1)
            run_log.substeps.append((t, i, e1, float(np.linalg.norm(xh - world.x_g))))
        rec.e1_max = e1_max
        ell += 1
    run_log.wall_time = time.perf_counter() - t_start
    return run_log


# -- audits ------------------------------------------------------------------

def max_e1(run_log: RunLog) -> list:
    out = [0.0] * run_log.n_explorers
    for r in run_log.steps:
        for i in range(run_log.n_explorers):
            out[i] = max(out[i], r.e1[i], *(r.e1_max[i:i + 1]))
    return out


def provenance_ok(run_log: RunLog) -> bool:
    """Every applied input comes from the most recent solve at or before its index."""
    solves = [(r.index, r.solve_id) for r in run_log.resolves]
    for rec in run_log.steps:
        if rec.u0 is None:
            continue
        latest = max((sid for idx, sid in solves if idx <= rec.index), default=None)
        if latest != rec.solve_id:
            return False
        if not np.array_equal(rec.u0, run_log.plans[rec.solve_id][rec.plan_offset]):
            return False
    return True


def audit(run_log: RunLog, phi: Optional[Formula] = None) -> dict:
    """Post-run checks: dwell gaps, estimation error bound, inner approximation, monitor."""
    gaps = [service_gaps(run_log, i) for i in range(run_log.n_explorers)]
    gap_ok = all(all(g <= n for g in gs) for gs, n in zip(gaps, run_log.dwell_steps))
    e1 = max_e1(run_log)
    out = {
        "terminated": run_log.terminated,
        "N_bar": run_log.N_bar,
        "max_gap_steps": [max(g) if g else 0 for g in gaps],
        "dwell_steps": list(run_log.dwell_steps),
        "gaps_ok": bool(gap_ok),
        "max_e1": e1,
        "e1_ok": bool(all(v <= run_log.V_T + 1e-6 for v in e1)),
        "inner_audit_violations": int(sum(r.inner_audit_violations for r in run_log.resolves)),
        "provenance_ok": provenance_ok(run_log),
    }
    if phi is not None and run_log.steps:
        v = evaluate(observed_trace(run_log), phi)
        out["monitor_weak"] = bool(v.weak)
        out["monitor_strong"] = bool(v.strong)
    return out
