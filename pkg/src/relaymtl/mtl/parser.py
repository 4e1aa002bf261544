"""Text syntax for MTL formulas.

Grammar (prefix operators bind tightest, ``U`` is right-associative and
binds loosest)::

    until   := or ( 'U' [interval] until )?
    or      := and ( '|' and )*
    and     := unary ( '&' unary )*
    unary   := '!' unary | 'F' [interval] unary | 'G' [interval] unary | primary
    primary := 'true' | 'false' | IDENT | '(' until ')'
    interval:= '[' INT ',' (INT | 'inf') ']'

``F``, ``G`` and ``U`` without an interval mean ``[0,inf]``.
"""

from __future__ import annotations

import re
from typing import Mapping, Optional

from .ast import (
    ALWAYS_INTERVAL, FALSE, TRUE, UNBOUNDED, Always, And, Atom, Eventually,
    Formula, Interval, Not, Or, Proposition, TrueF, Until, is_false,
)

KEYWORDS = {"true", "false", "F", "G", "U", "inf"}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<sym>[!&|()\[\],]))"
)


class MTLSyntaxError(ValueError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class UnknownAtomError(MTLSyntaxError):
    def __init__(self, name: str, position: int, text: str = ""):
        self.name = name
        super().__init__(f"unknown atom {name!r}", position, text)


def _tokenize(text: str) -> list:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise MTLSyntaxError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, atoms: Optional[Mapping]):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.atoms = atoms

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value:
            raise MTLSyntaxError(f"expected {value!r}, found {val or 'end of input'!r}", pos, self.text)

    def parse(self) -> Formula:
        phi = self.until()
        kind, val, pos = self.peek()
        if kind != "eof":
            raise MTLSyntaxError(f"unexpected token {val!r}", pos, self.text)
        return phi

    def interval(self) -> Interval:
        if self.peek()[1] != "[":
            return ALWAYS_INTERVAL
        _, _, start = self.take()
        lo = self.integer()
        self.expect(",")
        kind, val, pos = self.peek()
        if val == "inf":
            self.take()
            hi = UNBOUNDED
        else:
            hi = self.integer()
        self.expect("]")
        if hi < lo:
            raise MTLSyntaxError(f"interval lower bound {lo} exceeds upper bound {hi}", start, self.text)
        return Interval(lo, hi)

    def integer(self) -> int:
        kind, val, pos = self.take()
        if kind != "num":
            raise MTLSyntaxError(f"expected an integer, found {val or 'end of input'!r}", pos, self.text)
        return int(val)

    def until(self) -> Formula:
        left = self.or_()
        if self.peek()[1] == "U":
            self.take()
            iv = self.interval()
            right = self.until()
            return Until(iv, left, right)
        return left

    def or_(self) -> Formula:
        args = [self.and_()]
        while self.peek()[1] == "|":
            self.take()
            args.append(self.and_())
        return args[0] if len(args) == 1 else Or(*args)

    def and_(self) -> Formula:
        args = [self.unary()]
        while self.peek()[1] == "&":
            self.take()
            args.append(self.unary())
        return args[0] if len(args) == 1 else And(*args)

    def unary(self) -> Formula:
        kind, val, pos = self.peek()
        if val == "!":
            self.take()
            return Not(self.unary())
        if val in ("F", "G") and kind == "ident":
            self.take()
            iv = self.interval()
            arg = self.unary()
            return Eventually(iv, arg) if val == "F" else Always(iv, arg)
        return self.primary()

    def primary(self) -> Formula:
        kind, val, pos = self.take()
        if val == "(":
            phi = self.until()
            self.expect(")")
            return phi
        if kind == "ident":
            if val == "true":
                return TRUE
            if val == "false":
                return FALSE
            if val in KEYWORDS:
                raise MTLSyntaxError(f"keyword {val!r} cannot be used here", pos, self.text)
            if self.atoms is None:
                return Atom(Proposition(val))
            if val not in self.atoms:
                raise UnknownAtomError(val, pos, self.text)
            return Atom(self.atoms[val])
        raise MTLSyntaxError(f"unexpected token {val or 'end of input'!r}", pos, self.text)


def parse_formula(text: str, atoms: Optional[Mapping] = None) -> Formula:
    """Parse ``text`` into a formula.

    ``atoms`` maps identifiers to predicates; an identifier missing from it
    raises :class:`UnknownAtomError`. With ``atoms=None`` every identifier
    becomes a :class:`Proposition` over the signal of the same name.
    """
    return _Parser(text, atoms).parse()


def _fmt_interval(iv: Interval) -> str:
    return "" if iv == ALWAYS_INTERVAL else str(iv)


def format_formula(phi: Formula) -> str:
    """Fully parenthesized text that parses back to the same tree."""
    if isinstance(phi, TrueF):
        return "true"
    if is_false(phi):
        return "false"
    if isinstance(phi, Atom):
        return phi.pred.name
    if isinstance(phi, Not):
        return "!" + format_formula(phi.arg)
    if isinstance(phi, And):
        return "(" + " & ".join(format_formula(a) for a in phi.args) + ")"
    if isinstance(phi, Or):
        return "(" + " | ".join(format_formula(a) for a in phi.args) + ")"
    if isinstance(phi, Until):
        return f"({format_formula(phi.left)} U{_fmt_interval(phi.interval)} {format_formula(phi.right)})"
    if isinstance(phi, Eventually):
        return f"F{_fmt_interval(phi.interval)} {format_formula(phi.arg)}"
    if isinstance(phi, Always):
        return f"G{_fmt_interval(phi.interval)} {format_formula(phi.arg)}"
    raise TypeError(f"not a formula: {phi!r}")
