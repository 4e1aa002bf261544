"""Run orchestration, output bundles and post-hoc monitoring of recorded runs.

Bundle layout::

    trajectories.csv   step,time,agent,kind,x1..x8 (one row per step, agent and kind)
    metrics.json       summary numbers and audit verdicts (deterministic)
    events.json        service and re-solve events (deterministic)
    timing.json        wall-clock numbers (not deterministic)
    formula.json       specification text, atom definitions and signal bindings
    plotdata/errors.csv, plotdata/paths.csv, plotdata/inputs.csv
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .mtl import BoxRegion, Formula, NormBall, Trace, atoms, evaluate, format_formula, parse_formula
from .runtime import (RELAY, RunLog, audit, cumulative_effort, estimate_signal, position_signal,
                      run_algorithm1)
from .solver import SolverConfig

WIDTH = 8
COLUMNS = ["step", "time", "agent", "kind"] + [f"x{i}" for i in range(1, WIDTH + 1)]
RELAY_AGENT = "relay"


class BundleError(ValueError):
    pass


@dataclass
class RunOutcome:
    log: RunLog
    metrics: dict
    out_dir: Optional[Path]
    aborted: Optional[str] = None


def _fmt(v: float) -> str:
    return repr(float(v))


def _row(step, time, agent, kind, values) -> list:
    vals = [_fmt(v) for v in values]
    return [str(step), _fmt(time), agent, kind] + vals + [""] * (WIDTH - len(vals))


def trajectory_rows(run_log: RunLog) -> list:
    rows = []
    for rec in run_log.steps:
        rows.append(_row(rec.index, rec.time, RELAY_AGENT, "state", rec.x0))
        rows.append(_row(rec.index, rec.time, RELAY_AGENT, "position", rec.y0))
        if rec.u0 is not None:
            rows.append(_row(rec.index, rec.time, RELAY_AGENT, "input", rec.u0))
        for name, x, xh in zip(run_log.explorer_names, rec.x, rec.x_hat):
            rows.append(_row(rec.index, rec.time, name, "state", x))
            rows.append(_row(rec.index, rec.time, name, "estimate", xh))
            rows.append(_row(rec.index, rec.time, name, "position", [x[0], x[1], 0.0]))
            rows.append(_row(rec.index, rec.time, name, "estimate_position", [xh[0], xh[1], 0.0]))
    return rows


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _clean(v):
    """JSON-safe copy: arrays to lists, non-finite floats to None."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


# -- formula documents --------------------------------------------------------

def atom_to_dict(p) -> dict:
    if isinstance(p, NormBall):
        center = p.center if isinstance(p.center, str) else list(p.center)
        return {"type": "norm_ball", "subject": p.subject, "center": center, "radius": p.radius}
    if isinstance(p, BoxRegion):
        return {"type": "box", "subject": p.subject, "lo": list(p.lo), "hi": list(p.hi)}
    raise BundleError(f"cannot serialize atom {p!r}")


def atom_from_dict(name: str, d: dict):
    kind = d.get("type")
    if kind == "norm_ball":
        c = d["center"]
        return NormBall(name, d["subject"], c if isinstance(c, str) else tuple(c), float(d["radius"]))
    if kind == "box":
        return BoxRegion(name, d["subject"], tuple(d["lo"]), tuple(d["hi"]))
    raise BundleError(f"atom {name!r}: unknown type {kind!r}")


def formula_document(phi: Formula, atom_map: dict, explorer_names: list) -> dict:
    signals = {RELAY: {"agent": RELAY_AGENT, "kind": "position"}}
    for i, name in enumerate(explorer_names):
        signals[estimate_signal(i)] = {"agent": name, "kind": "estimate_position"}
        signals[position_signal(i)] = {"agent": name, "kind": "position"}
    return {"formula": format_formula(phi),
            "atoms": {k: atom_to_dict(v) for k, v in sorted(atom_map.items())},
            "signals": signals}


def load_formula_document(path) -> tuple:
    """``(formula, signal bindings)`` from a formula JSON file."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        atom_map = {k: atom_from_dict(k, v) for k, v in doc.get("atoms", {}).items()}
        return parse_formula(doc["formula"], atom_map), doc.get("signals", {})
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise BundleError(f"malformed formula file {path}: {exc}") from exc


def read_trace(csv_path, bindings: dict, Ts: Optional[float] = None) -> Trace:
    """Rebuild a trace from ``trajectories.csv`` using ``signal -> {agent, kind}`` bindings."""
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != COLUMNS:
            raise BundleError(f"unexpected trajectory header: {header}")
        table: dict = {}
        times = {}
        for row in reader:
            step = int(row[0])
            times[step] = float(row[1])
            vals = [float(v) for v in row[4:] if v != ""]
            table[(row[2], row[3], step)] = vals
    steps = sorted(times)
    if steps != list(range(len(steps))):
        raise BundleError("trajectory steps are not contiguous from 0")
    if Ts is None:
        Ts = times[1] - times[0] if len(steps) > 1 else 1.0
    signals = {}
    for name, b in bindings.items():
        seq = []
        for s in steps:
            key = (b["agent"], b["kind"], s)
            if key not in table:
                raise BundleError(f"signal {name!r}: no {b['kind']} rows for agent {b['agent']!r} at step {s}")
            seq.append(table[key])
        signals[name] = seq
    return Trace.from_sequences(Ts, **signals)


def monitor_realized(csv_path, formula_path):
    """Exact-semantics verdict of a recorded run."""
    phi, bindings = load_formula_document(formula_path)
    needed = set()
    for p in atoms(phi).values():
        needed |= p.signals()
    missing = needed - set(bindings)
    if missing:
        raise BundleError(f"formula uses signals with no binding: {sorted(missing)}")
    trace = read_trace(csv_path, {k: bindings[k] for k in sorted(needed)})
    return evaluate(trace, phi)


# -- bundle ---------------------------------------------------------------------

def metrics_for(run_log: RunLog, phi: Formula, *, variant=None, bound_report=None) -> dict:
    checks = audit(run_log, phi)
    m = {
        "scenario": run_log.scenario,
        "variant": variant,
        "seed": run_log.seed,
        "terminated": run_log.terminated,
        "aborted": run_log.aborted,
        "N_bar": run_log.N_bar,
        "termination_time": None if run_log.N_bar is None else run_log.N_bar * run_log.Ts,
        "cumulative_effort": cumulative_effort(run_log) if run_log.terminated else None,
        "solves": len(run_log.resolves),
        "solver_nodes": sum(int(r.stats.get("nodes", 0)) for r in run_log.resolves),
        "service_events": len(run_log.services),
        "forced": run_log.forced,
        "explorers": run_log.explorer_names,
        **checks,
    }
    if bound_report is not None:
        m["bounds"] = {"preconditions_ok": bound_report.preconditions_ok, "failures": bound_report.failures,
                       "conditions": bound_report.conditions}
    return _clean(m)


def emit_outputs(run_log: RunLog, out_dir, phi: Formula, atom_map: dict, *, metrics: dict) -> Path:
    out = Path(out_dir)
    (out / "plotdata").mkdir(parents=True, exist_ok=True)
    (out / "trajectories.csv").write_text(_csv_text(COLUMNS, trajectory_rows(run_log)), encoding="utf-8")
    (out / "metrics.json").write_text(_json_text(metrics), encoding="utf-8")
    events = {
        "services": [{"index": e.t_index, "explorers": [run_log.explorer_names[i] for i in e.explorers],
                      "trigger": e.trigger} for e in run_log.services],
        "resolves": [{"solve_id": r.solve_id, "index": r.index,
                      "W": [run_log.explorer_names[i] for i in r.W], "status": r.status,
                      "objective": r.objective, "formula": r.formula,
                      "nodes": r.stats.get("nodes"), "simplex_iterations": r.stats.get("simplex_iterations"),
                      "vars": r.n_vars, "constraints": r.n_constraints, "binaries": r.n_binaries,
                      "inner_audit_violations": r.inner_audit_violations} for r in run_log.resolves],
    }
    (out / "events.json").write_text(_json_text(_clean(events)), encoding="utf-8")
    timing = {"wall_time": run_log.wall_time,
              "solves": [{"index": r.index, "solve_time": r.stats.get("wall_time"),
                          "build_time": r.build_time} for r in run_log.resolves]}
    (out / "timing.json").write_text(_json_text(_clean(timing)), encoding="utf-8")
    (out / "formula.json").write_text(
        _json_text(formula_document(phi, atom_map, run_log.explorer_names)), encoding="utf-8")

    err_rows = []
    for rec in run_log.steps:
        for i in range(run_log.n_explorers):
            err_rows.append([_fmt(rec.time), run_log.explorer_names[i], _fmt(rec.e1[i]), _fmt(rec.e2[i])])
    for t, i, e1, e2 in run_log.substeps:
        err_rows.append([_fmt(t), run_log.explorer_names[i], _fmt(e1), _fmt(e2)])
    err_rows.sort(key=lambda r: (float(r[0]), r[1]))
    (out / "plotdata" / "errors.csv").write_text(_csv_text(["time", "agent", "e1", "e2"], err_rows),
                                                 encoding="utf-8")
    path_rows = []
    for rec in run_log.steps:
        path_rows.append([str(rec.index), RELAY_AGENT] + [_fmt(v) for v in rec.y0])
        for name, x in zip(run_log.explorer_names, rec.x):
            path_rows.append([str(rec.index), name, _fmt(x[0]), _fmt(x[1]), _fmt(0.0)])
    (out / "plotdata" / "paths.csv").write_text(_csv_text(["step", "agent", "p1", "p2", "p3"], path_rows),
                                                encoding="utf-8")
    in_rows = [[str(r.index), _fmt(r.time)] + [_fmt(v) for v in r.u0] for r in run_log.steps if r.u0 is not None]
    (out / "plotdata" / "inputs.csv").write_text(_csv_text(["step", "time", "u1", "u2", "u3", "u4"], in_rows),
                                                 encoding="utf-8")
    return out


def solver_config_for(config, solver_spec: Optional[str] = None) -> SolverConfig:
    opts = dict(config.solver)
    backend = solver_spec or opts.pop("backend", None)
    opts.pop("backend", None)
    kw = {k: opts[k] for k in ("node_limit", "time_limit", "rel_gap") if k in opts and opts[k] is not None}
    return SolverConfig.from_spec(backend, **kw)


def run_scenario(config, *, variant: Optional[str] = None, seed: Optional[int] = None,
                 solver_spec: Optional[str] = None, out_dir=None, force: bool = False) -> RunOutcome:
    """Check the configuration, run the loop, audit the result and write the bundle.

    Raises :class:`relaymtl.runtime.SynthesisAborted` on an infeasible solve
    (after writing the partial bundle when ``out_dir`` is given).
    """
    from .runtime import SynthesisAborted

    if variant is not None:
        config = config.with_variant(variant)
    report = config.bound_report()
    force = force or config.force
    if not report.preconditions_ok and not force:
        raise ConfigRejected(report)
    phi = config.full_formula()
    solver = solver_config_for(config, solver_spec)
    atom_map = config.atoms()
    try:
        run_log = run_algorithm1(config, phi, seed=seed, solver=solver,
                                 force=force and not report.preconditions_ok)
    except SynthesisAborted as exc:
        if out_dir is not None:
            m = metrics_for(exc.run_log, phi, variant=variant, bound_report=report)
            m["diagnostics"] = _clean(exc.diagnostics)
            emit_outputs(exc.run_log, out_dir, phi, atom_map, metrics=m)
        raise
    metrics = metrics_for(run_log, phi, variant=variant, bound_report=report)
    out = emit_outputs(run_log, out_dir, phi, atom_map, metrics=metrics) if out_dir is not None else None
    return RunOutcome(run_log, metrics, out, run_log.aborted)


class ConfigRejected(ValueError):
    def __init__(self, report):
        self.report = report
        super().__init__("configuration fails the termination preconditions: " + "; ".join(report.failures))
