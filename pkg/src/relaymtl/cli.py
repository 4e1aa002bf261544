"""Command line entry point.

Exit codes: 0 run completed and the realized trace weakly satisfies the
specification; 1 run completed but an audit or the monitor failed; 2 a solve
was infeasible (or hit its limit without a plan); 3 invalid configuration;
4 the simulation diverged or did not terminate within ``max_steps``.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

EXIT_OK, EXIT_AUDIT, EXIT_INFEASIBLE, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relaymtl", description="Relay-agent synthesis under MTL specifications.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the synthesis loop on a scenario")
    r.add_argument("--scenario", required=True, help="scenario JSON path or builtin:<name>")
    r.add_argument("--seed", type=int)
    r.add_argument("--solver", help="builtin or external:<command with {in} and {out}>")
    r.add_argument("--out", help="output directory for the bundle")
    r.add_argument("--desk-scale", action="store_true", help="coordinates / 10 and the desk horizon")
    r.add_argument("--variant", help="named formula variant from the scenario")
    r.add_argument("--force", action="store_true", help="run even if termination preconditions fail")
    r.add_argument("--sweep", help="seeds=a..b: independent runs in worker processes")
    r.add_argument("--jobs", type=int, default=None, help="worker processes for --sweep")

    v = sub.add_parser("validate", help="check a scenario and print the bound report")
    v.add_argument("--scenario", required=True)
    v.add_argument("--desk-scale", action="store_true")

    m = sub.add_parser("monitor", help="evaluate a formula on a recorded trajectories.csv")
    m.add_argument("--trace", required=True)
    m.add_argument("--formula", required=True, help="formula JSON (as written to formula.json)")

    sub.add_parser("list", help="list built-in scenarios")
    return p


def _summary(outcome) -> str:
    m = outcome.metrics
    effort = m.get("cumulative_effort")
    e1 = max(m.get("max_e1") or [0.0])
    verdict = "weak-satisfied" if m.get("monitor_weak") else "violated"
    effort_s = "n/a" if effort is None else f"{effort:.6g}"
    return (f"{m['scenario']}: N_bar={m['N_bar']} effort={effort_s} max_e1={e1:.4g} "
            f"monitor={verdict} solves={m['solves']}")


def _passed(metrics: dict) -> bool:
    return bool(metrics.get("terminated") and metrics.get("monitor_weak") and metrics.get("gaps_ok")
                and metrics.get("e1_ok") and metrics.get("inner_audit_violations") == 0)


def _run_one(args_dict: dict) -> tuple:
    """Single run; returns ``(exit code, message)``. Top level so worker processes can pickle it."""
    from .outputs import ConfigRejected, run_scenario
    from .runtime import SynthesisAborted
    from .scenario import ScenarioError, load_scenario
    from .sim import SimulationDivergence

    try:
        cfg = load_scenario(args_dict["scenario"], desk=args_dict["desk_scale"])
        outcome = run_scenario(cfg, variant=args_dict["variant"], seed=args_dict["seed"],
                               solver_spec=args_dict["solver"], out_dir=args_dict["out"],
                               force=args_dict["force"])
    except (ScenarioError, ConfigRejected, ValueError) as exc:
        return EXIT_CONFIG, f"config invalid: {exc}"
    except SynthesisAborted as exc:
        return EXIT_INFEASIBLE, f"aborted: {exc}"
    except SimulationDivergence as exc:
        return EXIT_DIVERGED, f"diverged: {exc}"
    if outcome.aborted:
        return EXIT_DIVERGED, f"{_summary(outcome)} ({outcome.aborted})"
    return (EXIT_OK if _passed(outcome.metrics) else EXIT_AUDIT), _summary(outcome)


def _seeds(text: str) -> list:
    m = re.fullmatch(r"seeds=(\d+)\.\.(\d+)", text.strip())
    if not m or int(m.group(1)) > int(m.group(2)):
        raise ValueError(f"--sweep expects seeds=a..b with a <= b, got {text!r}")
    return list(range(int(m.group(1)), int(m.group(2)) + 1))


def cmd_run(args) -> int:
    base = {"scenario": args.scenario, "desk_scale": args.desk_scale, "variant": args.variant,
            "seed": args.seed, "solver": args.solver, "out": args.out, "force": args.force}
    if not args.sweep:
        code, msg = _run_one(base)
        print(msg, file=sys.stdout if code in (EXIT_OK, EXIT_AUDIT) else sys.stderr)
        return code
    try:
        seeds = _seeds(args.sweep)
    except ValueError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    jobs = []
    for s in seeds:
        d = dict(base, seed=s)
        if args.out:
            d["out"] = str(Path(args.out) / f"seed-{s}")
        jobs.append(d)
    with ProcessPoolExecutor(max_workers=args.jobs) as ex:
        results = list(ex.map(_run_one, jobs))
    worst = EXIT_OK
    for s, (code, msg) in zip(seeds, results):
        print(f"seed {s}: exit {code}: {msg}")
        worst = max(worst, code)
    return worst


def cmd_validate(args) -> int:
    from .outputs import _clean
    from .scenario import ScenarioError, load_scenario

    try:
        cfg = load_scenario(args.scenario, desk=args.desk_scale)
        report = cfg.bound_report()
    except (ScenarioError, ValueError) as exc:
        print(f"config invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    n = cfg.dwell_steps()
    # a horizon no longer than the dwell count leaves service deadlines outside the plan
    out = {"scenario": cfg.name, "dwell_steps": n, "force": cfg.force, "N": cfg.N,
           "horizon_covers_dwell": cfg.N > max(n), "report": report.to_dict()}
    print(json.dumps(_clean(out), indent=2, sort_keys=True))
    if not report.preconditions_ok:
        note = " (runs proceed because the scenario sets force)" if cfg.force else ""
        print("termination preconditions not met: " + "; ".join(report.failures) + note, file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_monitor(args) -> int:
    from .outputs import BundleError, monitor_realized

    try:
        verdict = monitor_realized(args.trace, args.formula)
    except (BundleError, OSError, ValueError) as exc:
        print(f"monitor failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({"weak": verdict.weak, "strong": verdict.strong}))
    return EXIT_OK if verdict.weak else EXIT_AUDIT


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return cmd_run(args)
    if args.command == "validate":
        return cmd_validate(args)
    if args.command == "monitor":
        return cmd_monitor(args)
    from .scenario import builtin_names

    for name in builtin_names():
        print(f"builtin:{name}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
