"""Metric temporal logic: syntax, finite-trace semantics and rewrites."""

from .ast import (
    ALWAYS_INTERVAL, FALSE, TRUE, UNBOUNDED, Always, And, Atom, AtomicPredicate,
    BoxRegion, Eventually, Formula, Interval, NormBall, Not, Or, Proposition,
    Trace, TrueF, Until, atoms, is_false, is_true,
)
from .parser import MTLSyntaxError, UnknownAtomError, format_formula, parse_formula
from .semantics import Verdict, eval_strong, eval_weak, evaluate
from .transform import (
    expand_sugar, is_nnf, necessary_length, shift, simplify, specialize, to_nnf,
)

__all__ = [
    "ALWAYS_INTERVAL", "FALSE", "TRUE", "UNBOUNDED", "Always", "And", "Atom",
    "AtomicPredicate", "BoxRegion", "Eventually", "Formula", "Interval", "MTLSyntaxError",
    "NormBall", "Not", "Or", "Proposition", "Trace", "TrueF", "UnknownAtomError", "Until",
    "Verdict", "atoms", "eval_strong", "eval_weak", "evaluate", "expand_sugar",
    "format_formula", "is_false", "is_nnf", "is_true", "necessary_length", "parse_formula",
    "shift", "simplify", "specialize", "to_nnf",
]
