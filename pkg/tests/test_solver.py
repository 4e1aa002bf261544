import itertools
import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from relaymtl.solver import (BINARY, EQ, GE, LE, MilpModel, MissingValuesWarning, SolutionFormatError,
                             SolverConfig, SolverError, export_lp, import_solution, lp_relax_solve,
                             solve)
from relaymtl.solver.simplex import BoundedSimplex

from oracles import enumerate_optimum, random_milp

HELPER = Path(__file__).parent / "helpers" / "highs_lp_solve.py"


def test_lp_examples():
    M = MilpModel()
    x = M.add_var("x", lower=0, upper=10)
    M.add_constraint([(x, 1)], GE, 2.5)
    M.set_objective([(x, 1)])
    r = lp_relax_solve(M)
    assert r.status == "optimal" and r.x[0] == pytest.approx(2.5)
    M.add_constraint([(x, 1)], LE, 0.0)
    M.add_constraint([(x, 1)], GE, 1.0)
    assert lp_relax_solve(M).status == "infeasible"


def test_lp_unbounded():
    M = MilpModel()
    x = M.add_var("x", lower=-math.inf)
    M.set_objective([(x, 1)])
    assert lp_relax_solve(M).status == "unbounded"


def _vertex_optimum(c, A, b, lo, hi):
    """Brute force over every basis of ``A x <= b`` plus box rows."""
    n = len(c)
    G = np.vstack([A, np.eye(n), -np.eye(n)])
    h = np.concatenate([b, hi, -lo])
    best = math.inf
    for rows in itertools.combinations(range(len(G)), n):
        sub = G[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        v = np.linalg.solve(sub, h[list(rows)])
        if np.all(G @ v <= h + 1e-9):
            best = min(best, float(c @ v))
    return best


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 5)), int(rng.integers(1, 6))
    A = np.round(rng.normal(size=(m, n)), 3)
    b = np.round(rng.normal(size=m) + 1, 3)
    c = np.round(rng.normal(size=n), 3)
    lo, hi = -np.full(n, 3.0), np.full(n, 3.0)
    r = BoundedSimplex(c, A, [LE] * m, b, lo, hi).solve()
    ref = _vertex_optimum(c, A, b, lo, hi)
    if math.isinf(ref):
        assert r.status == "infeasible"
    else:
        assert r.status == "optimal"
        assert r.objective == pytest.approx(ref, abs=1e-7)


@pytest.mark.parametrize("seed", range(20))
def test_lp_20x20_against_reference(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(20, 20))
    b = rng.normal(size=20) * 3
    senses = list(rng.choice([LE, GE, EQ], size=20, p=[.45, .45, .1]))
    c = rng.normal(size=20)
    lo = np.where(rng.random(20) < .2, -np.inf, rng.uniform(-3, 0, 20))
    hi = np.where(rng.random(20) < .2, np.inf, rng.uniform(0, 3, 20))
    r = BoundedSimplex(c, A, senses, b, lo, hi).solve()
    ub = [(A[i], b[i]) if s == LE else (-A[i], -b[i]) for i, s in enumerate(senses) if s != EQ]
    eq = [(A[i], b[i]) for i, s in enumerate(senses) if s == EQ]
    ref = linprog(c, A_ub=np.array([u for u, _ in ub]) if ub else None, b_ub=[v for _, v in ub] or None,
                  A_eq=np.array([u for u, _ in eq]) if eq else None, b_eq=[v for _, v in eq] or None,
                  bounds=[(None if np.isinf(l) else l, None if np.isinf(h) else h) for l, h in zip(lo, hi)],
                  method="highs")
    assert r.status == {0: "optimal", 2: "infeasible", 3: "unbounded"}[ref.status]
    if ref.status == 0:
        assert r.objective == pytest.approx(ref.fun, abs=1e-7 * (1 + abs(ref.fun)))


def test_milp_rounding_forced():
    M = MilpModel()
    z = M.add_var("z", BINARY, 0, 1)
    M.add_constraint([(z, 1)], GE, 0.3)
    M.set_objective([(z, 1)])
    r = solve(M)
    assert r.status == "Optimal" and r.objective == pytest.approx(1.0) and r.assignment[z] == 1.0


def test_milp_infeasible_region():
    from relaymtl.encoder import encode_formula
    from relaymtl.mtl import Always, Atom, BoxRegion, Interval

    M = MilpModel()
    y = [[M.add_var(f"y{j}{d}", lower=-10, upper=10) for d in range(2)] for j in range(3)]
    # the region is outside the variable bounds
    phi = Always(Interval(0), Atom(BoxRegion("far", "y0", (20, 20), (21, 21))))
    encode_formula(M, phi, 2, lambda name, j: ("expr", [([(v, 1.0)], 0.0) for v in y[j]]))
    assert solve(M).status == "Infeasible"


@pytest.mark.parametrize("seed", range(50))
def test_bnb_matches_enumeration(seed):
    rng = np.random.default_rng(1000 + seed)
    M, data = random_milp(rng, max_binaries=12)
    ref = enumerate_optimum(data)
    r = solve(M)
    if math.isinf(ref):
        assert r.status == "Infeasible"
        return
    assert r.status == "Optimal"
    assert abs(r.objective - ref) <= 1e-7 * max(1.0, abs(ref))
    assert M.audit(r.assignment) == []


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_bnb_deterministic_and_bound_monotone(seed):
    M, _ = random_milp(np.random.default_rng(seed), max_binaries=8)
    a, b = solve(M), solve(M)
    assert a.status == b.status and a.stats["nodes"] == b.stats["nodes"]
    assert a.assignment == b.assignment
    root = lp_relax_solve(M)
    if a.status == "Optimal":
        assert root.objective <= a.objective + 1e-7


def test_node_limit_reports_iteration_limit():
    M, _ = random_milp(np.random.default_rng(7), max_binaries=12)
    r = solve(M, SolverConfig(node_limit=1))
    assert r.status in ("IterationLimit", "Optimal", "Infeasible")
    with pytest.raises(ValueError):
        SolverConfig(node_limit=0)


def _small_model():
    M = MilpModel()
    z = M.add_var("z", BINARY, 0, 1)
    x = M.add_var("x", lower=-1, upper=4)
    M.add_constraint([(x, 1), (z, -3)], LE, 0.5, "link")
    M.add_constraint([(x, 1)], GE, 1.0, "need")
    M.set_objective([(x, 1), (z, 2)])
    return M


def test_export_lp_format():
    text = export_lp(_small_model())
    for head in ("Minimize", "Subject To", "Bounds", "Binary", "End"):
        assert f"\n{head}" in "\n" + text
    assert "\r" not in text and text.endswith("End\n")
    assert " x0" in text and " x1" in text
    assert export_lp(_small_model()) == text
    M = MilpModel()
    M.add_var("a")
    assert export_lp(M).startswith("Minimize\n obj: 0 x0")


def test_export_uses_17_significant_digits():
    M = MilpModel()
    x = M.add_var("x", upper=1)
    M.add_constraint([(x, 1 / 3)], LE, 0.1)
    assert format(1 / 3, ".17g") in export_lp(M)


def test_import_solution():
    assert import_solution("x0 1.5") == {0: 1.5}
    with pytest.raises(SolutionFormatError):
        import_solution("x0 1\nx0 2")
    with pytest.raises(SolutionFormatError):
        import_solution("foo 1")
    with pytest.raises(SolutionFormatError):
        import_solution("x0 1\nx5 2", n_vars=2)
    with pytest.warns(MissingValuesWarning):
        assert import_solution("x1 2", n_vars=2) == {1: 2.0, 0: 0.0}
    xml = '<CPLEXSolution><variables><variable name="x0" index="0" value="3"/></variables></CPLEXSolution>'
    assert import_solution(xml) == {0: 3.0}


def _external():
    return SolverConfig.from_spec(f"external:{sys.executable} {HELPER} {{in}} {{out}}")


def test_external_round_trip_small():
    pytest.importorskip("highspy")
    M = _small_model()
    a, b = solve(M), solve(M, _external())
    assert b.status == "Optimal"
    assert b.objective == pytest.approx(a.objective, abs=1e-5)


@pytest.mark.parametrize("seed", range(50))
def test_external_matches_builtin(seed):
    pytest.importorskip("highspy")
    M, _ = random_milp(np.random.default_rng(5000 + seed), max_binaries=8)
    a, b = solve(M), solve(M, _external())
    assert a.status == b.status
    if a.status == "Optimal":
        assert b.objective == pytest.approx(a.objective, abs=1e-5)


def test_external_missing_command():
    with pytest.raises(SolverError):
        solve(_small_model(), SolverConfig.from_spec("external:/nonexistent/solver {in} {out}"))
    with pytest.raises(ValueError):
        SolverConfig.from_spec("cplex")


def test_env_override(monkeypatch):
    monkeypatch.setenv("RELAY_MTL_SOLVER", "builtin")
    assert SolverConfig.from_spec("external:foo {in} {out}").backend == "builtin"


def test_model_validation():
    M = MilpModel()
    with pytest.raises(ValueError):
        M.add_constraint([(3, 1.0)], LE, 1.0)
    x = M.add_var("x")
    with pytest.raises(ValueError):
        M.add_constraint([(x, 0.0)], LE, -1.0)
    with pytest.raises(ValueError):
        M.add_var("bad", lower=2, upper=1)
    b = M.add_var("b", BINARY, -5, 5)
    assert (M.vars[b].lower, M.vars[b].upper) == (0.0, 1.0)
