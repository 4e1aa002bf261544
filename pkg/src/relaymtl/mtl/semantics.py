"""Strong and weak Boolean semantics of MTL over finite traces.

For a trace ``y^0..y^H`` an atom at index ``j > H`` is strongly false and
weakly true; negation swaps the views. Every verdict at an index ``j > H``
only sees atoms beyond the trace, so all such indices behave like ``H + 1``.
Evaluation canonicalizes indices accordingly, which keeps unbounded
operators finite.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ast import (
    UNBOUNDED, Always, And, Atom, Eventually, Formula, Not, Or, Trace, TrueF, Until,
)


@dataclass(frozen=True)
class Verdict:
    strong: bool
    weak: bool


class _Evaluator:
    def __init__(self, trace: Trace, linearized: bool):
        self.trace = trace
        self.H = trace.horizon
        self.linearized = linearized
        self.memo: dict = {}

    def window(self, j: int, lo: int, hi) -> range:
        last = self.H + 1
        upper = j + hi if hi != UNBOUNDED else None
        cap = max(j + lo, last)
        upper = cap if upper is None else min(upper, cap)
        return range(j + lo, upper + 1)

    def ev(self, phi: Formula, j: int, strong: bool) -> bool:
        j = min(j, self.H + 1)
        key = (id(phi), j, strong)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        out = self._ev(phi, j, strong)
        self.memo[key] = out
        return out

    def _ev(self, phi: Formula, j: int, strong: bool) -> bool:
        if isinstance(phi, TrueF):
            return True
        if isinstance(phi, Atom):
            if j > self.H:
                return not strong
            return phi.pred.holds(self.trace, j, self.linearized)
        if isinstance(phi, Not):
            return not self.ev(phi.arg, j, not strong)
        if isinstance(phi, And):
            return all(self.ev(a, j, strong) for a in phi.args)
        if isinstance(phi, Or):
            return any(self.ev(a, j, strong) for a in phi.args)
        if isinstance(phi, Eventually):
            iv = phi.interval
            return any(self.ev(phi.arg, k, strong) for k in self.window(j, iv.lo, iv.hi))
        if isinstance(phi, Always):
            # always = not eventually not: the two view flips cancel.
            iv = phi.interval
            return all(self.ev(phi.arg, k, strong) for k in self.window(j, iv.lo, iv.hi))
        if isinstance(phi, Until):
            iv = phi.interval
            left_ok = all(self.ev(phi.left, k, strong) for k in range(j, min(j + iv.lo, self.H + 2)))
            if not left_ok:
                return False
            for k in self.window(j, iv.lo, iv.hi):
                if self.ev(phi.right, k, strong):
                    return True
                if not self.ev(phi.left, k, strong):
                    return False
            return False
        raise TypeError(f"cannot evaluate {phi!r}")


def eval_strong(trace: Trace, phi: Formula, j: int = 0, *, linearized: bool = False) -> bool:
    """``(y^{0:H}, j)`` strongly satisfies ``phi``.

    ``linearized`` evaluates norm-ball atoms with the inner infinity-norm box
    used by the MILP encoder instead of the exact 2-norm.
    """
    if j < 0:
        raise ValueError("time index must be non-negative")
    return _Evaluator(trace, linearized).ev(phi, j, True)


def eval_weak(trace: Trace, phi: Formula, j: int = 0, *, linearized: bool = False) -> bool:
    """``(y^{0:H}, j)`` weakly satisfies ``phi``."""
    if j < 0:
        raise ValueError("time index must be non-negative")
    return _Evaluator(trace, linearized).ev(phi, j, False)


def evaluate(trace: Trace, phi: Formula, j: int = 0, *, linearized: bool = False) -> Verdict:
    ev = _Evaluator(trace, linearized)
    return Verdict(strong=ev.ev(phi, j, True), weak=ev.ev(phi, j, False))
