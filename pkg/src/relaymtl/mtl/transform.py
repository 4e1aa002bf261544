"""Structural rewrites: necessary length, sugar expansion, negation normal
form, constant folding and prefix specialization."""

from __future__ import annotations

from typing import Union

from .ast import (
    FALSE, TRUE, UNBOUNDED, Always, And, Atom, Eventually, Formula, Interval,
    Not, Or, Trace, TrueF, Until, is_false, is_true,
)


def necessary_length(phi: Formula) -> Union[int, float]:
    """Trace length needed to decide a bounded formula; ``UNBOUNDED`` otherwise."""
    if isinstance(phi, (TrueF, Atom)):
        return 0
    if isinstance(phi, Not):
        return necessary_length(phi.arg)
    if isinstance(phi, (And, Or)):
        return max((necessary_length(a) for a in phi.args), default=0)
    if isinstance(phi, Until):
        return max(necessary_length(phi.left), necessary_length(phi.right)) + phi.interval.hi
    if isinstance(phi, (Eventually, Always)):
        return necessary_length(phi.arg) + phi.interval.hi
    raise TypeError(f"not a formula: {phi!r}")


def expand_sugar(phi: Formula) -> Formula:
    """Rewrite eventually/always into until: ``F_I p = true U_I p``, ``G_I p = !F_I !p``."""
    if isinstance(phi, (TrueF, Atom)):
        return phi
    if isinstance(phi, Not):
        return Not(expand_sugar(phi.arg))
    if isinstance(phi, And):
        return And(*(expand_sugar(a) for a in phi.args))
    if isinstance(phi, Or):
        return Or(*(expand_sugar(a) for a in phi.args))
    if isinstance(phi, Until):
        return Until(phi.interval, expand_sugar(phi.left), expand_sugar(phi.right))
    if isinstance(phi, Eventually):
        return Until(phi.interval, TRUE, expand_sugar(phi.arg))
    if isinstance(phi, Always):
        return Not(Until(phi.interval, TRUE, Not(expand_sugar(phi.arg))))
    raise TypeError(f"not a formula: {phi!r}")


# -- negation normal form ----------------------------------------------------

def to_nnf(phi: Formula) -> Formula:
    """Push negations down to atoms (and the constant ``true``).

    Negated until becomes a negation-free combination over the same
    interval ``[lo, hi]``::

        !(a U b) == F[0,lo-1] !a | G[lo,hi] !b | F[lo,lo] (!b U[0,hi-lo] (!a & !b))

    (the first disjunct only when ``lo > 0``).
    """
    return _nnf(phi, False)


def _nnf(phi: Formula, neg: bool) -> Formula:
    if isinstance(phi, TrueF):
        return FALSE if neg else TRUE
    if isinstance(phi, Atom):
        return Not(phi) if neg else phi
    if isinstance(phi, Not):
        return _nnf(phi.arg, not neg)
    if isinstance(phi, And):
        args = tuple(_nnf(a, neg) for a in phi.args)
        return Or(*args) if neg else And(*args)
    if isinstance(phi, Or):
        args = tuple(_nnf(a, neg) for a in phi.args)
        return And(*args) if neg else Or(*args)
    if isinstance(phi, Eventually):
        arg = _nnf(phi.arg, neg)
        return Always(phi.interval, arg) if neg else Eventually(phi.interval, arg)
    if isinstance(phi, Always):
        arg = _nnf(phi.arg, neg)
        return Eventually(phi.interval, arg) if neg else Always(phi.interval, arg)
    if isinstance(phi, Until):
        if not neg:
            return Until(phi.interval, _nnf(phi.left, False), _nnf(phi.right, False))
        lo, hi = phi.interval.lo, phi.interval.hi
        na = _nnf(phi.left, True)
        nb = _nnf(phi.right, True)
        rest = hi - lo if hi != UNBOUNDED else UNBOUNDED
        release = Or(Always(Interval(lo, hi), nb),
                     Eventually(Interval(lo, lo), Until(Interval(0, rest), nb, And(na, nb))))
        if lo == 0:
            return Or(Always(Interval(0, hi), nb), Until(Interval(0, rest), nb, And(na, nb)))
        return Or(Eventually(Interval(0, lo - 1), na), *release.args)
    raise TypeError(f"not a formula: {phi!r}")


def is_nnf(phi: Formula) -> bool:
    if isinstance(phi, Not):
        return isinstance(phi.arg, (Atom, TrueF))
    if isinstance(phi, (TrueF, Atom)):
        return True
    if isinstance(phi, (And, Or)):
        return all(is_nnf(a) for a in phi.args)
    if isinstance(phi, Until):
        return is_nnf(phi.left) and is_nnf(phi.right)
    return is_nnf(phi.arg)


# -- constant folding --------------------------------------------------------

def mk_not(x: Formula) -> Formula:
    if isinstance(x, Not):
        return x.arg
    return Not(x)


def mk_and(args) -> Formula:
    out = []
    seen = set()
    for a in args:
        parts = a.args if isinstance(a, And) else (a,)
        for p in parts:
            if is_true(p):
                continue
            if is_false(p):
                return FALSE
            if p in seen:
                continue
            seen.add(p)
            out.append(p)
    if not out:
        return TRUE
    return out[0] if len(out) == 1 else And(*out)


def mk_or(args) -> Formula:
    out = []
    seen = set()
    for a in args:
        parts = a.args if isinstance(a, Or) else (a,)
        for p in parts:
            if is_false(p):
                continue
            if is_true(p):
                return TRUE
            if p in seen:
                continue
            seen.add(p)
            out.append(p)
    if not out:
        return FALSE
    return out[0] if len(out) == 1 else Or(*out)


def mk_eventually(iv: Interval, x: Formula) -> Formula:
    if is_true(x) or is_false(x):
        return x
    return Eventually(iv, x)


def mk_always(iv: Interval, x: Formula) -> Formula:
    if is_true(x) or is_false(x):
        return x
    return Always(iv, x)


def mk_until(iv: Interval, a: Formula, b: Formula) -> Formula:
    if is_false(b):
        return FALSE
    if is_true(a):
        return mk_eventually(iv, b)
    if iv.lo == 0:
        if is_true(b):
            return TRUE
        if is_false(a):
            return b
    elif is_false(a):
        return FALSE
    return Until(iv, a, b)


def simplify(phi: Formula) -> Formula:
    """Bottom-up constant folding (``true & x -> x``, ``F_I true -> true``, ...)."""
    if isinstance(phi, (TrueF, Atom)):
        return phi
    if isinstance(phi, Not):
        return mk_not(simplify(phi.arg)) if not isinstance(phi.arg, TrueF) else phi
    if isinstance(phi, And):
        return mk_and(simplify(a) for a in phi.args)
    if isinstance(phi, Or):
        return mk_or(simplify(a) for a in phi.args)
    if isinstance(phi, Until):
        return mk_until(phi.interval, simplify(phi.left), simplify(phi.right))
    if isinstance(phi, Eventually):
        return mk_eventually(phi.interval, simplify(phi.arg))
    if isinstance(phi, Always):
        return mk_always(phi.interval, simplify(phi.arg))
    raise TypeError(f"not a formula: {phi!r}")


# -- prefix specialization ---------------------------------------------------

def shift(phi: Formula, j: int) -> Formula:
    """A formula whose verdict at index 0 equals the verdict of ``phi`` at ``j``."""
    if j == 0 or isinstance(phi, TrueF) or is_false(phi):
        return phi
    if isinstance(phi, Not):
        return mk_not(shift(phi.arg, j))
    if isinstance(phi, And):
        return mk_and(shift(a, j) for a in phi.args)
    if isinstance(phi, Or):
        return mk_or(shift(a, j) for a in phi.args)
    if isinstance(phi, Eventually):
        return Eventually(_offset(phi.interval, j), phi.arg)
    if isinstance(phi, Always):
        return Always(_offset(phi.interval, j), phi.arg)
    # atoms and until: the until's left operand must hold from j, not from 0
    return Eventually(Interval(j, j), phi)


def _offset(iv: Interval, j: int) -> Interval:
    return Interval(iv.lo + j, iv.hi + j if iv.bounded else UNBOUNDED)


class _Specializer:
    def __init__(self, observed: Trace, last: int, linearized: bool):
        self.observed = observed
        self.last = last
        self.linearized = linearized
        self.memo: dict = {}

    def spec(self, phi: Formula, j: int) -> Formula:
        if j > self.last:
            return shift(phi, j)
        key = (id(phi), j)
        hit = self.memo.get(key)
        if hit is None:
            hit = self._spec(phi, j)
            self.memo[key] = hit
        return hit

    def _spec(self, phi: Formula, j: int) -> Formula:
        last = self.last
        if isinstance(phi, TrueF):
            return phi
        if isinstance(phi, Atom):
            return TRUE if phi.pred.holds(self.observed, j, self.linearized) else FALSE
        if isinstance(phi, Not):
            return mk_not(self.spec(phi.arg, j))
        if isinstance(phi, And):
            return mk_and(self.spec(a, j) for a in phi.args)
        if isinstance(phi, Or):
            return mk_or(self.spec(a, j) for a in phi.args)

        iv = phi.interval
        lo = j + iv.lo
        hi = j + iv.hi if iv.bounded else UNBOUNDED
        observed_hi = min(hi, last)
        tail_lo = max(lo, last + 1)
        has_tail = hi > last
        tail_iv = Interval(tail_lo, hi) if has_tail else None

        if isinstance(phi, Eventually):
            parts = [self.spec(phi.arg, k) for k in range(lo, observed_hi + 1)]
            if has_tail:
                parts.append(mk_eventually(tail_iv, phi.arg))
            return mk_or(parts)
        if isinstance(phi, Always):
            parts = [self.spec(phi.arg, k) for k in range(lo, observed_hi + 1)]
            if has_tail:
                parts.append(mk_always(tail_iv, phi.arg))
            return mk_and(parts)
        if isinstance(phi, Until):
            disjuncts = []
            for k in range(lo, observed_hi + 1):
                prefix = [self.spec(phi.left, m) for m in range(j, k)]
                disjuncts.append(mk_and([self.spec(phi.right, k)] + prefix))
            if has_tail:
                prefix = [self.spec(phi.left, m) for m in range(j, last + 1)]
                rel_lo = max(0, lo - (last + 1))
                rel_hi = hi - (last + 1) if hi != UNBOUNDED else UNBOUNDED
                rest = Until(Interval(rel_lo, rel_hi), phi.left, phi.right)
                disjuncts.append(mk_and(prefix + [shift(rest, last + 1)]))
            return mk_or(disjuncts)
        raise TypeError(f"cannot specialize {phi!r}")


def specialize(phi: Formula, observed: Trace, last: int, *, linearized: bool = False) -> Formula:
    """Freeze every atom instance at an index ``<= last`` to ``true``/``false``.

    The result is meant to be evaluated at index 0 and agrees with ``phi`` at
    index 0, in both views, on every trace extending ``observed``. Atom
    instances at later indices survive as ``F[k,k] atom``. ``last = -1``
    means nothing has been observed and returns ``phi`` unchanged.
    """
    if last < 0:
        return phi
    if observed.horizon < last:
        raise ValueError(f"observed prefix has {observed.horizon + 1} samples, need {last + 1}")
    return _Specializer(observed, last, linearized).spec(phi, 0)
