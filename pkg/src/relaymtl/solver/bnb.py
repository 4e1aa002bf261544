"""Branch and bound over the dense simplex."""

from __future__ import annotations

import heapq
from collections import OrderedDict
import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import MilpModel
from .simplex import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, BoundedSimplex, SimplexBreakdown

STATUS_OPTIMAL = "Optimal"
STATUS_INFEASIBLE = "Infeasible"
STATUS_LIMIT = "IterationLimit"

_STATE_CACHE = 12  # branched nodes whose full tableau is kept for their children


class SolverError(RuntimeError):
    pass


@dataclass
class SolverConfig:
    backend: str = "builtin"  # "builtin" or "external"
    command: Optional[str] = None  # external command template with {in} and {out}
    int_tol: float = 1e-6
    rel_gap: float = 1e-6
    node_limit: int = 20000
    time_limit: Optional[float] = None
    plunge: bool = True  # depth-first until an incumbent exists, then dive from each best-first pick
    truth_rounding: bool = True  # indicator-truth rounding heuristic at fractional nodes
    repair: bool = True  # push fractional binaries to 0/1 when no row objects

    def __post_init__(self):
        if self.backend not in ("builtin", "external"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "external" and not self.command:
            raise ValueError("external backend needs a command template")
        if self.node_limit <= 0 or (self.time_limit is not None and self.time_limit <= 0):
            raise ValueError("solver limits must be positive")

    @classmethod
    def from_spec(cls, spec: Optional[str], **kw) -> "SolverConfig":
        """``builtin`` or ``external:<command template>``; ``RELAY_MTL_SOLVER`` wins if set."""
        spec = os.environ.get("RELAY_MTL_SOLVER") or spec or "builtin"
        if spec == "builtin":
            return cls(**kw)
        if spec.startswith("external:"):
            return cls(backend="external", command=spec[len("external:"):], **kw)
        raise ValueError(f"unknown solver {spec!r} (use builtin or external:<cmd>)")


@dataclass
class SolverResult:
    status: str
    objective: float = math.nan
    assignment: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    @property
    def has_solution(self) -> bool:
        return bool(self.assignment)


@dataclass(order=True)
class _Node:
    bound: float
    neg_depth: int
    seq: int
    fixings: dict = field(compare=False)
    snapshot: tuple = field(compare=False, default=None)
    parent: int = field(compare=False, default=-1)


def solve(model: MilpModel, config: Optional[SolverConfig] = None) -> SolverResult:
    config = config or SolverConfig()
    if config.backend == "external":
        from .lpfile import solve_external

        return solve_external(model, config)
    return _branch_and_bound(model, config)


def _branch_and_bound(model: MilpModel, config: SolverConfig) -> SolverResult:
    t0 = time.perf_counter()
    c, A, senses, b, lower, upper = model.arrays()
    lp = BoundedSimplex(c, A, senses, b, lower, upper)
    binaries = np.array(model.binaries, dtype=int)
    base_lo, base_hi = lower.copy(), upper.copy()

    stats = {"nodes": 0, "simplex_iterations": 0, "bound_violations": 0, "lp_limit_nodes": 0}
    incumbent = None
    inc_obj = math.inf
    heap = [_Node(-math.inf, 0, 0, {})]
    seq = 1
    current = None  # seq of the node whose LP state is loaded
    states = OrderedDict()  # recent branched nodes: seq -> full tableau copy
    limit_hit = False

    def apply_fixings(fixings):
        for j in binaries:
            lo, hi = fixings.get(int(j), (base_lo[j], base_hi[j]))
            lp.lo[j], lp.hi[j] = lo, hi

    def prune_level():
        return inc_obj - config.rel_gap * max(1.0, abs(inc_obj))

    truth = _IndicatorRows(A, senses, b, binaries) if binaries.size else None
    repair = _Repair(c, A, senses, b, binaries, config.int_tol) if (binaries.size and config.repair) else None
    tried = set()
    stack = []  # depth-first plunge until the first incumbent
    while heap or stack:
        if stats["nodes"] >= config.node_limit or (
                config.time_limit is not None and time.perf_counter() - t0 > config.time_limit):
            limit_hit = True
            break
        if len(stack) > 1 and incumbent is not None:
            # keep plunging from the current node only; the rest goes back to best-first order
            for n in stack[:-1]:
                heapq.heappush(heap, n)
            del stack[:-1]
        node = stack.pop() if stack else heapq.heappop(heap)
        if node.bound >= prune_level():
            continue
        stats["nodes"] += 1
        if node.parent >= 0 and (node.parent == current or node.parent in states):
            if node.parent != current:
                lp.load_state(states[node.parent])
            j, (lo, hi) = node.fixings["__last__"]
            lp.set_bounds(j, lo, hi)
        else:
            apply_fixings(node.fixings)
            if node.snapshot is not None:
                lp.restore(node.snapshot)
        current = node.seq
        before = lp.iterations
        try:
            res = lp.solve()
        except SimplexBreakdown:
            res = None
        stats["simplex_iterations"] += lp.iterations - before
        if res is None or res.status == ITERATION_LIMIT:
            # the subtree stays unexplored, so optimality can no longer be claimed
            stats["lp_limit_nodes"] += 1
            lp.basis = None
            current = None
            continue
        if res.status == INFEASIBLE:
            continue
        if res.status == UNBOUNDED:
            raise SolverError("LP relaxation is unbounded")
        if res.objective < node.bound - 1e-7 * max(1.0, abs(node.bound)):
            stats["bound_violations"] += 1
        if res.objective >= prune_level():
            continue
        x = res.x
        if repair is not None:
            x = repair(x, lp.lo, lp.hi)
        frac = np.abs(np.minimum(x[binaries], 1.0 - x[binaries])) if binaries.size else np.zeros(0)
        open_ = np.nonzero(frac > config.int_tol)[0]
        if open_.size == 0:
            snap = lp.snapshot()
            saved = lp.save_state()
            polished = _polish(lp, binaries, x)
            current = None
            if polished is not None:
                obj, vals = polished
                if obj < inc_obj:
                    inc_obj, incumbent = obj, vals
                    stats.setdefault("first_incumbent_node", stats["nodes"])
                    stats["last_improvement_node"] = stats["nodes"]
                continue
            # rounding within tolerance broke a big-M row: keep branching
            open_ = np.nonzero(frac > 0.0)[0]
            if open_.size == 0:
                continue
        else:
            snap = lp.snapshot()
            saved = lp.save_state()
            if config.truth_rounding and truth is not None:
                guess = truth.assignment(x, lp.lo[binaries], lp.hi[binaries])
                key = guess.tobytes()
                if key not in tried:
                    tried.add(key)
                    stats["heuristic_calls"] = stats.get("heuristic_calls", 0) + 1
                    found = _polish(lp, binaries, x, guess)
                    current = None
                    if found is not None and found[0] < inc_obj:
                        inc_obj, incumbent = found
                        stats.setdefault("first_incumbent_node", stats["nodes"])
                        stats["last_improvement_node"] = stats["nodes"]
                        stats["heuristic_incumbents"] = stats.get("heuristic_incumbents", 0) + 1
                    if found is not None and res.objective >= prune_level():
                        continue
        states[node.seq] = saved
        if len(states) > _STATE_CACHE:
            states.popitem(last=False)
        k = open_[np.argmax(frac[open_])]  # argmax returns the lowest id on ties
        j = int(binaries[k])
        first = 1.0 if x[j] >= 0.5 else 0.0
        children = []
        for val in (first, 1.0 - first):
            fix = dict(node.fixings)
            fix[j] = (val, val)
            fix["__last__"] = (j, (val, val))
            children.append(_Node(res.objective, node.neg_depth - 1, seq, fix, snap, node.seq))
            seq += 1
        if config.plunge and incumbent is None:
            stack.extend(reversed(children))  # preferred child on top
        elif config.plunge:
            # dive on the preferred child; each best-first pick then starts a fresh plunge
            heapq.heappush(heap, children[1])
            stack.append(children[0])
        else:
            for child in children:
                heapq.heappush(heap, child)

    heap.extend(stack)
    stats["wall_time"] = time.perf_counter() - t0
    stats["open_nodes"] = len(heap)
    if incumbent is None:
        status = STATUS_LIMIT if (limit_hit or stats["lp_limit_nodes"]) else STATUS_INFEASIBLE
        return SolverResult(status, math.nan, {}, stats)
    assignment = {i: float(v) for i, v in enumerate(incumbent)}
    status = STATUS_LIMIT if (limit_hit or stats["lp_limit_nodes"]) else STATUS_OPTIMAL
    if heap and limit_hit:
        stats["best_bound"] = float(min(n.bound for n in heap))
    return SolverResult(status, float(model.objective_value(assignment)), assignment, stats)


class _Repair:
    """Move fractional binaries to 0 or 1 where every row they touch stays satisfied.

    The objective never increases, so the result is another optimal point of
    the node LP; branching then only sees fractionality the LP really needs.
    """

    def __init__(self, c, A, senses, b, binaries, int_tol, tol=1e-9):
        self.c, self.A, self.b = c, A, np.asarray(b, float)
        self.binaries, self.int_tol, self.tol = binaries, int_tol, tol
        self.sign = np.array([{"<=": 1.0, ">=": -1.0, "=": 0.0}[s] for s in senses])
        self.cols = [np.nonzero(A[:, j])[0] for j in binaries]

    def _ok(self, new, old, sign):
        worst = np.maximum(self.tol, np.where(sign == 0.0, np.abs(old), sign * old))
        return bool(np.all(np.where(sign == 0.0, np.abs(new), sign * new) <= worst))

    def __call__(self, x, lo, hi):
        vals = x[self.binaries]
        frac = np.minimum(vals, 1.0 - vals)
        order = np.argsort(-frac, kind="stable")
        if frac[order[0]] <= self.int_tol:
            return x
        x = x.copy()
        resid = self.A @ x - self.b
        for k in order:
            if frac[k] <= self.int_tol:
                break
            j = int(self.binaries[k])
            rows = self.cols[k]
            col = self.A[rows, j]
            for cand in ((1.0, 0.0) if x[j] >= 0.5 else (0.0, 1.0)):
                if not lo[j] <= cand <= hi[j]:
                    continue
                delta = cand - x[j]
                if self.c[j] * delta > 0.0:
                    continue
                new = resid[rows] + col * delta
                if self._ok(new, resid[rows], self.sign[rows]):
                    x[j] = cand
                    resid[rows] = new
                    break
        return x


class _IndicatorRows:
    """Rows holding exactly one binary: with the binary at 1 they state what it implies.

    ``assignment`` sets each free binary to 1 exactly when all of its rows hold
    at the continuous part of ``x``, which is the truth value of the literal it
    encodes; pinning those and re-solving gives a feasible point whenever the
    relaxed trajectory already satisfies the model's logic.
    """

    def __init__(self, A, senses, b, binaries, tol=1e-7):
        self.tol = tol
        self.binaries = binaries
        nz = A[:, binaries] != 0
        rows = np.nonzero(nz.sum(axis=1) == 1)[0]
        self.rows = rows
        self.owner = np.argmax(nz[rows], axis=1) if rows.size else np.zeros(0, dtype=int)  # index into binaries
        self.A = A[rows]
        self.b = np.asarray(b, float)[rows]
        self.sign = np.array([{"<=": 1.0, ">=": -1.0, "=": 0.0}[senses[r]] for r in rows])

    def assignment(self, x, lo, hi):
        ok = np.ones(self.binaries.size, bool)
        if self.rows.size:
            col = self.binaries[self.owner]
            coef = self.A[np.arange(self.rows.size), col]
            gap = self.A @ x + coef * (1.0 - x[col]) - self.b
            bad = np.where(self.sign == 0.0, np.abs(gap) > self.tol, self.sign * gap > self.tol)
            np.logical_and.at(ok, self.owner, ~bad)
        return np.where(hi < 0.5, 0.0, np.where(lo > 0.5, 1.0, ok.astype(float)))


def _polish(lp: BoundedSimplex, binaries, x, rounded=None):
    """Pin binaries (to ``rounded``, default the nearest integers) and re-solve the continuous part."""
    if binaries.size == 0:
        return float(lp.c[: lp.n] @ x), x.copy()
    saved = (lp.lo[binaries].copy(), lp.hi[binaries].copy())
    if rounded is None:
        rounded = np.round(x[binaries])
    for j, v in zip(binaries, rounded):
        lp.set_bounds(int(j), v, v)
    try:
        res = lp.solve()
    except SimplexBreakdown:
        res = None
    lp.lo[binaries], lp.hi[binaries] = saved
    lp.basis = None
    if res is None or res.status != OPTIMAL:
        return None
    vals = res.x.copy()
    vals[binaries] = rounded
    return res.objective, vals
