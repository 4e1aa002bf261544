"""MILP encoding of weak MTL satisfaction over a relay planning horizon.

The formula is put in negation normal form and encoded one-sidedly: a
literal ``z`` only promises ``z = 1 => subformula holds (weakly)``, which
is all a satisfaction constraint needs. Atoms get binary variables, negated
boxes get one binary selector per face, and/or nodes get continuous
auxiliaries in ``[0, 1]``. Obligations reachable from the root through
conjunctions are asserted directly ("forced") without any variable, and a
forced atom on a single variable becomes a bound. Big-M constants are
per-row: the smallest value that the known variable bounds allow, capped
at ``big_M``.

Indices past the weak horizon ``H`` are weakly true for every atom and
negated atom, so a window reaching past ``H`` contributes a constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linalg import expm
from .mtl.ast import (
    Always, And, Atom, BoxRegion, Eventually, Formula, NormBall, Not, Or, Proposition,
    TrueF, Until, UNBOUNDED,
)
from .mtl.transform import to_nnf
from .solver.model import BINARY, CONTINUOUS, EQ, GE, LE, MilpModel

RELAY_SIGNAL = "y0"


class EncodingError(ValueError):
    pass


@dataclass
class EncodingContext:
    start: int
    horizon: int
    estimates: dict = field(default_factory=dict)  # signal -> (N, zdim) array for start..start+N-1
    margin: float = 1e-6
    big_M: float = 1e4

    def __post_init__(self):
        if self.horizon < 1:
            raise EncodingError("horizon must be at least 1")
        for name, arr in self.estimates.items():
            if np.asarray(arr).shape[0] != self.horizon:
                raise EncodingError(f"estimate {name!r} needs exactly {self.horizon} samples")

    @property
    def H(self) -> int:
        return self.start + self.horizon - 1


# -- estimates ---------------------------------------------------------------

def closed_loop_discrete(explorer, Ts: float) -> np.ndarray:
    """Exact one-period transition of ``x_hat - x_g`` under the explorer feedback."""
    Acl = explorer.A - explorer.B @ explorer.B.T @ explorer.P
    return expm(Acl * Ts)


def precompute_estimates(x_hat, x_g, Acl_d, C, N: int) -> np.ndarray:
    """``C x_hat^j`` for the ``N`` indices starting at the current one.

    Between services the estimate obeys a known linear feedback, so the whole
    predicted output is a constant.
    """
    x_hat = np.asarray(x_hat, float)
    x_g = np.asarray(x_g, float)
    Acl_d = np.asarray(Acl_d, float)
    C = np.asarray(C, float)
    if Acl_d.shape != (x_hat.size, x_hat.size) or x_g.shape != x_hat.shape:
        raise EncodingError("estimate dimensions do not match the explorer model")
    out = np.empty((N, C.shape[0]))
    e = x_hat - x_g
    for k in range(N):
        out[k] = C @ (e + x_g)
        e = Acl_d @ e
    return out


# -- formula encoding --------------------------------------------------------

def _beyond(phi: Formula) -> bool:
    """Weak verdict of an NNF formula at any index past the trace."""
    if isinstance(phi, TrueF):
        return True
    if isinstance(phi, Atom):
        return True
    if isinstance(phi, Not):
        return not isinstance(phi.arg, TrueF)
    if isinstance(phi, And):
        return all(_beyond(a) for a in phi.args)
    if isinstance(phi, Or):
        return any(_beyond(a) for a in phi.args)
    if isinstance(phi, (Eventually, Always)):
        return _beyond(phi.arg)
    if isinstance(phi, Until):
        return (phi.interval.lo == 0 or _beyond(phi.left)) and _beyond(phi.right)
    raise TypeError(f"not a formula: {phi!r}")


class FormulaEncoder:
    """Adds constraints for an NNF formula to ``model``.

    ``signal(name, j)`` returns either ``("const", vector)`` or
    ``("expr", [(terms, offset), ...])`` with one affine expression per
    component.
    """

    def __init__(self, model: MilpModel, H: int, signal: Callable, *, margin: float = 1e-6,
                 big_M: float = 1e4, hints: Optional[dict] = None):
        self.model = model
        self.H = H
        self.signal = signal
        self.margin = margin
        self.big_M = big_M
        self.hints = hints if hints is not None else {}
        self.memo: dict = {}
        self.keep: list = []
        self.deferred: list = []
        self.infeasible = False

    # bounds -------------------------------------------------------------

    def _bounds(self, v):
        var = self.model.vars[v]
        lo, hi = self.hints.get(v, (-math.inf, math.inf))
        return max(lo, var.lower), min(hi, var.upper)

    def _expr_range(self, terms, const):
        lo = hi = const
        for v, c in terms:
            a, b = self._bounds(v)
            if c >= 0:
                lo += c * a
                hi += c * b
            else:
                lo += c * b
                hi += c * a
        return lo, hi

    def _tighten(self, v, lo=-math.inf, hi=math.inf):
        var = self.model.vars[v]
        var.lower = max(var.lower, lo)
        var.upper = min(var.upper, hi)
        if var.lower > var.upper:
            self.infeasible = True
            var.lower = var.upper  # keep the model well-formed; a contradiction row is added

    def mark_infeasible(self, why: str):
        if not self.infeasible:
            self.infeasible = True
        v = self.model.add_var(f"contradiction[{why}]", CONTINUOUS, 0.0, 0.0)
        self.model.add_constraint([(v, 1.0)], GE, 1.0, tag=f"contradiction {why}")

    # half-spaces ----------------------------------------------------------

    def _faces(self, pred, j):
        """Half-spaces ``(terms, const, sense, rhs)`` whose conjunction is the (linearized) atom."""
        kind_s, subj = self.signal(pred.subject, j)
        if isinstance(pred, BoxRegion):
            faces = []
            for d, (lo, hi) in enumerate(zip(pred.lo, pred.hi)):
                terms, off = (([], float(subj[d])) if kind_s == "const" else subj[d])
                if math.isfinite(hi):
                    faces.append((terms, off, LE, hi))
                if math.isfinite(lo):
                    faces.append((terms, off, GE, lo))
            return faces
        if isinstance(pred, NormBall):
            if isinstance(pred.center, str):
                kind_c, cen = self.signal(pred.center, j)
            else:
                kind_c, cen = "const", np.asarray(pred.center, float)
            dim = len(subj) if kind_s == "expr" else np.asarray(subj).size
            half = pred.radius / math.sqrt(dim)
            faces = []
            for d in range(dim):
                ts, os_ = ([], float(subj[d])) if kind_s == "const" else subj[d]
                tc, oc = ([], float(cen[d])) if kind_c == "const" else cen[d]
                terms = list(ts) + [(v, -c) for v, c in tc]
                off = os_ - oc
                faces.append((terms, off, LE, half))
                faces.append((terms, off, GE, -half))
            return faces
        if isinstance(pred, Proposition):
            raise EncodingError(f"proposition {pred.name!r} has no geometric encoding")
        raise EncodingError(f"unsupported predicate {pred!r}")

    def _face_status(self, terms, off, sense, rhs, strict):
        """``True`` if always satisfied, ``False`` if never, else ``None``."""
        lo, hi = self._expr_range(terms, off)
        if sense == LE:
            if hi <= rhs:
                return True
            if lo > rhs:
                return False
        else:
            if lo >= rhs:
                return True
            if hi < rhs:
                return False
        return None

    def _implied_row(self, terms, off, sense, rhs, z, tag):
        """``z = 1 => terms + off (sense) rhs``; ``z = None`` means unconditional."""
        lo, hi = self._expr_range(terms, off)
        if z is None:
            if len(terms) == 1 and terms[0][1] != 0:
                v, c = terms[0]
                bound = (rhs - off) / c
                if (sense == LE) == (c > 0):
                    self._tighten(v, hi=bound)
                else:
                    self._tighten(v, lo=bound)
                return
            self.model.add_constraint(terms, sense, rhs - off, tag)
            return
        if sense == LE:
            M = min(self.big_M, hi - rhs) if math.isfinite(hi) else self.big_M
            if M <= 0:
                return
            self.model.add_constraint(list(terms) + [(z, M)], LE, rhs - off + M, tag)
        else:
            M = min(self.big_M, rhs - lo) if math.isfinite(lo) else self.big_M
            if M <= 0:
                return
            self.model.add_constraint(list(terms) + [(z, -M)], GE, rhs - off - M, tag)

    # atoms ----------------------------------------------------------------

    def _positive_faces(self, pred, j):
        faces = []
        for terms, off, sense, rhs in self._faces(pred, j):
            rhs = rhs - self.margin if sense == LE else rhs + self.margin
            if not terms:
                ok = off <= rhs + self.margin if sense == LE else off >= rhs - self.margin
                if not ok:
                    return None
                continue
            st = self._face_status(terms, off, sense, rhs, False)
            if st is False:
                return None
            if st is None:
                faces.append((terms, off, sense, rhs))
        return faces

    def _negative_faces(self, pred, j):
        """Complement half-spaces (strict by ``margin``); ``True`` if one always holds."""
        faces = []
        for terms, off, sense, rhs in self._faces(pred, j):
            if sense == LE:
                comp = (terms, off, GE, rhs + self.margin)
            else:
                comp = (terms, off, LE, rhs - self.margin)
            if not terms:
                ok = off > rhs if sense == LE else off < rhs
                if ok:
                    return True
                continue
            st = self._face_status(*comp, False)
            if st is True:
                return True
            if st is None:
                faces.append(comp)
        return faces

    def _const_atom(self, pred, j):
        try:
            faces = self._faces(pred, j)
        except EncodingError:
            raise
        if any(terms for terms, *_ in faces):
            return None
        for _, off, sense, rhs in faces:
            if (sense == LE and off > rhs) or (sense == GE and off < rhs):
                return False
        return True

    def atom(self, pred, j, negated: bool, force: bool):
        tag = f"{'!' if negated else ''}{pred.name}@{j}"
        const = self._const_atom(pred, j)
        if const is not None:
            return const != negated
        if not negated:
            faces = self._positive_faces(pred, j)
            if faces is None:
                return False
            if not faces:
                return True
            if force:
                for f in faces:
                    self._implied_row(*f, None, tag)
                return True
            z = self.model.add_var(f"z[{tag}]", BINARY, 0, 1)
            for f in faces:
                self._implied_row(*f, z, tag)
            return z
        faces = self._negative_faces(pred, j)
        if faces is True:
            return True
        if not faces:
            return False
        if len(faces) == 1:
            if force:
                self._implied_row(*faces[0], None, tag)
                return True
            z = self.model.add_var(f"z[{tag}]", BINARY, 0, 1)
            self._implied_row(*faces[0], z, tag)
            return z
        sel = []
        for k, f in enumerate(faces):
            s = self.model.add_var(f"f[{tag}#{k}]", BINARY, 0, 1)
            self._implied_row(*f, s, f"{tag}#{k}")
            sel.append(s)
        if force:
            self.model.add_constraint([(s, 1.0) for s in sel], GE, 1.0, f"{tag} some face")
            return True
        z = self.model.add_var(f"z[{tag}]", CONTINUOUS, 0, 1)
        self.model.add_constraint([(s, 1.0) for s in sel] + [(z, -1.0)], GE, 0.0, f"{tag} some face")
        return z

    # connectives ------------------------------------------------------------

    def _window(self, j, lo, hi):
        last = self.H + 1
        cap = max(j + lo, last)
        upper = cap if hi == UNBOUNDED else min(j + hi, cap)
        return range(j + lo, upper + 1)

    def _and(self, lits, tag):
        out = []
        for lit in lits:
            if lit is False:
                return False
            if lit is True:
                continue
            if lit not in out:
                out.append(lit)
        if not out:
            return True
        if len(out) == 1:
            return out[0]
        z = self.model.add_var(f"and[{tag}]", CONTINUOUS, 0, 1)
        for lit in out:
            self.model.add_constraint([(z, 1.0), (lit, -1.0)], LE, 0.0, f"and {tag}")
        return z

    def _or(self, lits, tag):
        out = []
        for lit in lits:
            if lit is True:
                return True
            if lit is False:
                continue
            if lit not in out:
                out.append(lit)
        if not out:
            return False
        if len(out) == 1:
            return out[0]
        z = self.model.add_var(f"or[{tag}]", CONTINUOUS, 0, 1)
        self.model.add_constraint([(z, 1.0)] + [(lit, -1.0) for lit in out], LE, 0.0, f"or {tag}")
        return z

    def _assert_or(self, lits, tag):
        out = []
        for lit in lits:
            if lit is True:
                return
            if lit is False:
                continue
            if lit not in out:
                out.append(lit)
        if not out:
            self.mark_infeasible(tag)
            return
        if len(out) == 1:
            self._tighten(out[0], lo=1.0)
            return
        self.model.add_constraint([(lit, 1.0) for lit in out], GE, 1.0, f"some {tag}")

    def _until_disjuncts(self, phi, j):
        iv = phi.interval
        window = self._window(j, iv.lo, iv.hi)
        prefix = True
        m = j
        lits = []
        tag = f"U@{j}"
        for k in window:
            while m < k:
                prefix = self._and([prefix, self.enc(phi.left, m)], f"{tag}<{m + 1}")
                m += 1
                if prefix is False:
                    return lits
            lits.append(self._and([prefix, self.enc(phi.right, k)], f"{tag}:{k}"))
        return lits

    def enc(self, phi: Formula, j: int):
        """Literal (``True``, ``False`` or variable id) with ``z = 1 => phi`` at ``j``."""
        j = min(j, self.H + 1)
        key = (id(phi), j)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        self.keep.append(phi)
        lit = self._enc(phi, j)
        self.memo[key] = lit
        return lit

    def _enc(self, phi, j):
        if j > self.H:
            return _beyond(phi)
        if isinstance(phi, TrueF):
            return True
        if isinstance(phi, Not):
            if isinstance(phi.arg, TrueF):
                return False
            if isinstance(phi.arg, Atom):
                return self.atom(phi.arg.pred, j, True, False)
            raise EncodingError("formula is not in negation normal form")
        if isinstance(phi, Atom):
            return self.atom(phi.pred, j, False, False)
        if isinstance(phi, And):
            return self._and([self.enc(a, j) for a in phi.args], f"&@{j}")
        if isinstance(phi, Or):
            return self._or([self.enc(a, j) for a in phi.args], f"|@{j}")
        if isinstance(phi, Eventually):
            return self._or([self.enc(phi.arg, k) for k in self._window(j, phi.interval.lo, phi.interval.hi)], f"F@{j}")
        if isinstance(phi, Always):
            return self._and([self.enc(phi.arg, k) for k in self._window(j, phi.interval.lo, phi.interval.hi)], f"G@{j}")
        if isinstance(phi, Until):
            return self._or(self._until_disjuncts(phi, j), f"U@{j}")
        raise TypeError(f"not a formula: {phi!r}")

    def force(self, phi: Formula, j: int = 0):
        """Assert ``phi`` at ``j``: conjunctions and atoms now, disjunctions deferred."""
        stack = [(phi, j)]
        seen = set()
        while stack:
            phi, j = stack.pop()
            j = min(j, self.H + 1)
            key = (id(phi), j)
            if key in seen:
                continue
            seen.add(key)
            self.keep.append(phi)
            if j > self.H:
                if not _beyond(phi):
                    self.mark_infeasible(f"beyond@{j}")
                continue
            if isinstance(phi, TrueF):
                continue
            if isinstance(phi, Not) and isinstance(phi.arg, TrueF):
                self.mark_infeasible(f"false@{j}")
                continue
            if isinstance(phi, Atom) or isinstance(phi, Not):
                if isinstance(phi, Not) and not isinstance(phi.arg, Atom):
                    raise EncodingError("formula is not in negation normal form")
                self.deferred.append((phi, j))
                continue
            if isinstance(phi, And):
                stack.extend((a, j) for a in reversed(phi.args))
            elif isinstance(phi, Always):
                stack.extend((phi.arg, k) for k in reversed(self._window(j, phi.interval.lo, phi.interval.hi)))
            else:
                self.deferred.append((phi, j))

    def finish(self):
        """Encode deferred obligations; positive atoms go first so their bounds tighten later big-Ms."""
        atoms = [(p, j) for p, j in self.deferred if isinstance(p, Atom)]
        rest = [(p, j) for p, j in self.deferred if not isinstance(p, Atom)]
        self.deferred = []
        for p, j in atoms:
            if self.atom(p.pred, j, False, True) is False:
                self.mark_infeasible(f"{p.pred.name}@{j}")
        for p, j in rest:
            if isinstance(p, Not):
                if self.atom(p.arg.pred, j, True, True) is False:
                    self.mark_infeasible(f"!{p.arg.pred.name}@{j}")
            elif isinstance(p, Or):
                self._assert_or([self.enc(a, j) for a in p.args], f"|@{j}")
            elif isinstance(p, Eventually):
                self._assert_or([self.enc(p.arg, k) for k in self._window(j, p.interval.lo, p.interval.hi)], f"F@{j}")
            elif isinstance(p, Until):
                self._assert_or(self._until_disjuncts(p, j), f"U@{j}")
            else:
                raise TypeError(f"unexpected deferred node {p!r}")


def encode_formula(model: MilpModel, phi: Formula, H: int, signal: Callable, *, j: int = 0,
                   margin: float = 1e-6, big_M: float = 1e4, hints: Optional[dict] = None,
                   nnf: bool = True) -> FormulaEncoder:
    """Constrain ``model`` so that every feasible point weakly satisfies ``phi`` at ``j``."""
    enc = FormulaEncoder(model, H, signal, margin=margin, big_M=big_M, hints=hints)
    enc.force(to_nnf(phi) if nnf else phi, j)
    enc.finish()
    return enc


# -- relay problem -----------------------------------------------------------

@dataclass
class EncodedProblem:
    model: MilpModel
    ctx: EncodingContext
    x_vars: list  # (N+1) lists of state variable ids, index k <-> time start+k
    u_vars: list  # N lists of input variable ids
    s_vars: list
    infeasible: bool = False

    def inputs(self, assignment) -> np.ndarray:
        return np.array([[assignment[v] for v in row] for row in self.u_vars])

    def states(self, assignment) -> np.ndarray:
        return np.array([[assignment[v] for v in row] for row in self.x_vars])


def encode_relay_dynamics(model: MilpModel, ctx: EncodingContext, Ad, Bd, x0):
    """State/input variables chained by ``x^{j+1} = Ad x^j + Bd u^j``; ``x^start`` fixed."""
    Ad = np.asarray(Ad, float)
    Bd = np.asarray(Bd, float)
    x0 = np.asarray(x0, float)
    l, n0 = Bd.shape
    N = ctx.horizon
    x_vars = [[model.add_var(f"x0[{ctx.start + k}][{i}]", CONTINUOUS, -math.inf, math.inf) for i in range(l)]
              for k in range(N + 1)]
    u_vars = [[model.add_var(f"u0[{ctx.start + k}][{c}]", CONTINUOUS, -math.inf, math.inf) for c in range(n0)]
              for k in range(N)]
    for i in range(l):
        model.add_constraint([(x_vars[0][i], 1.0)], EQ, float(x0[i]), f"init {i}")
    for k in range(N):
        for i in range(l):
            terms = [(x_vars[k + 1][i], 1.0)]
            terms += [(x_vars[k][p], -Ad[i, p]) for p in range(l) if Ad[i, p] != 0.0]
            terms += [(u_vars[k][c], -Bd[i, c]) for c in range(n0) if Bd[i, c] != 0.0]
            model.add_constraint(terms, EQ, 0.0, f"dyn {ctx.start + k} {i}")
    return x_vars, u_vars


def encode_input_bounds(model: MilpModel, u_vars, u_min, u_max):
    u_min = np.asarray(u_min, float)
    u_max = np.asarray(u_max, float)
    if np.any(u_min > u_max):
        raise EncodingError("input bounds: u_min exceeds u_max")
    if not (np.all(np.isfinite(u_min)) and np.all(np.isfinite(u_max))):
        raise EncodingError("input bounds must be finite")
    for row in u_vars:
        for c, v in enumerate(row):
            model.vars[v].lower = float(u_min[c])
            model.vars[v].upper = float(u_max[c])


def encode_objective(model: MilpModel, u_vars):
    """L1 effort: ``s >= u`` and ``s >= -u`` per channel, minimize the sum of ``s``."""
    s_vars = []
    for k, row in enumerate(u_vars):
        srow = []
        for c, v in enumerate(row):
            s = model.add_var(f"s[{k}][{c}]", CONTINUOUS, 0.0, math.inf)
            model.add_constraint([(s, 1.0), (v, -1.0)], GE, 0.0, f"abs+ {k} {c}")
            model.add_constraint([(s, 1.0), (v, 1.0)], GE, 0.0, f"abs- {k} {c}")
            srow.append(s)
        s_vars.append(srow)
    model.set_objective([(s, 1.0) for row in s_vars for s in row])
    return s_vars


def reachable_bounds(Ad, Bd, x0, u_min, u_max, N):
    """Exact componentwise ranges of ``x^k`` over all admissible input sequences."""
    Ad = np.asarray(Ad, float)
    Bd = np.asarray(Bd, float)
    mid = 0.5 * (np.asarray(u_min, float) + np.asarray(u_max, float))
    half = 0.5 * (np.asarray(u_max, float) - np.asarray(u_min, float))
    centre = np.asarray(x0, float).copy()
    spread = np.zeros_like(centre)
    out = [(centre.copy(), centre.copy())]
    # x^k = Ad^k x0 + sum_i Ad^(k-1-i) Bd u^i; G runs through Ad^i Bd
    G = Bd.copy()
    for k in range(N):
        centre = Ad @ centre + Bd @ mid
        spread = spread + np.abs(G) @ half
        G = Ad @ G
        out.append((centre - spread, centre + spread))
    return out


def build_milp(*, phi: Formula, start: int, horizon: int, Ad, Bd, C0, x0, u_min, u_max,
               estimates: dict, margin: float = 1e-6, big_M: float = 1e4) -> EncodedProblem:
    """Relay dynamics, input bounds, weak satisfaction of ``phi`` (already
    specialized to the observed prefix) and the L1 effort objective."""
    ctx = EncodingContext(start, horizon, dict(estimates), margin, big_M)
    model = MilpModel(big_M=big_M)
    x_vars, u_vars = encode_relay_dynamics(model, ctx, Ad, Bd, x0)
    encode_input_bounds(model, u_vars, u_min, u_max)
    C0 = np.asarray(C0, float)
    x0 = np.asarray(x0, float)

    hints = {}
    for k, (lo, hi) in enumerate(reachable_bounds(Ad, Bd, x0, u_min, u_max, horizon)):
        for i, v in enumerate(x_vars[k]):
            hints[v] = (float(lo[i]), float(hi[i]))

    def signal(name, j):
        k = j - start
        if name == RELAY_SIGNAL:
            if k < 0 or k > horizon:
                raise EncodingError(f"relay position at index {j} is outside the planning window")
            if k == 0:
                return "const", C0 @ x0
            rows = []
            for r in range(C0.shape[0]):
                rows.append(([(x_vars[k][p], C0[r, p]) for p in range(C0.shape[1]) if C0[r, p] != 0.0], 0.0))
            return "expr", rows
        if name in ctx.estimates:
            if not 0 <= k < horizon:
                raise EncodingError(f"estimate {name!r} at index {j} is outside the planning window")
            return "const", np.asarray(ctx.estimates[name][k], float)
        raise EncodingError(f"unknown signal {name!r}")

    enc = encode_formula(model, phi, ctx.H, signal, margin=margin, big_M=big_M, hints=hints)
    s_vars = encode_objective(model, u_vars)
    return EncodedProblem(model, ctx, x_vars, u_vars, s_vars, enc.infeasible)
