"""MTL abstract syntax, atomic predicates and sampled traces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

UNBOUNDED = math.inf


@dataclass(frozen=True)
class Interval:
    lo: int
    hi: Union[int, float] = UNBOUNDED

    def __post_init__(self):
        if self.lo < 0 or int(self.lo) != self.lo:
            raise ValueError(f"interval lower bound must be a non-negative integer: {self.lo}")
        if self.hi != UNBOUNDED:
            if int(self.hi) != self.hi:
                raise ValueError(f"interval upper bound must be an integer: {self.hi}")
            if self.hi < self.lo:
                raise ValueError(f"empty interval [{self.lo},{self.hi}]")
            object.__setattr__(self, "hi", int(self.hi))
        object.__setattr__(self, "lo", int(self.lo))

    @property
    def bounded(self) -> bool:
        return self.hi != UNBOUNDED

    def __str__(self) -> str:
        hi = "inf" if not self.bounded else str(self.hi)
        return f"[{self.lo},{hi}]"


ALWAYS_INTERVAL = Interval(0, UNBOUNDED)


# -- atomic predicates -------------------------------------------------------

@dataclass(frozen=True)
class NormBall:
    """``||subject - center||_2 <= radius``; ``center`` is a signal name or a constant point."""

    name: str
    subject: str
    center: Union[str, tuple]
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"atom {self.name}: radius must be non-negative")
        if not isinstance(self.center, str):
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def holds(self, trace: "Trace", j: int, linearized: bool = False) -> bool:
        y = trace.value(self.subject, j)
        c = trace.value(self.center, j) if isinstance(self.center, str) else np.asarray(self.center)
        if linearized:
            return bool(np.max(np.abs(y - c)) <= self.radius / math.sqrt(y.size))
        return bool(np.linalg.norm(y - c) <= self.radius)

    def signals(self) -> set:
        return {self.subject} | ({self.center} if isinstance(self.center, str) else set())


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned box ``lo <= subject <= hi`` (componentwise)."""

    name: str
    subject: str
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi):
            raise ValueError(f"atom {self.name}: box bounds differ in dimension")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"atom {self.name}: box min exceeds max")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def centered(cls, name: str, subject: str, center, size) -> "BoxRegion":
        c = np.asarray(center, float)
        half = 0.5 * np.asarray(size, float)
        return cls(name, subject, tuple(c - half), tuple(c + half))

    def holds(self, trace: "Trace", j: int, linearized: bool = False) -> bool:
        y = trace.value(self.subject, j)
        return bool(np.all(y >= np.asarray(self.lo)) and np.all(y <= np.asarray(self.hi)))

    def signals(self) -> set:
        return {self.subject}


@dataclass(frozen=True)
class Proposition:
    """Boolean proposition read from a 0/1 signal named ``subject``."""

    name: str
    subject: str = ""

    def __post_init__(self):
        if not self.subject:
            object.__setattr__(self, "subject", self.name)

    def holds(self, trace: "Trace", j: int, linearized: bool = False) -> bool:
        return bool(np.asarray(trace.value(self.subject, j)).reshape(-1)[0] > 0.5)

    def signals(self) -> set:
        return {self.subject}


AtomicPredicate = Union[NormBall, BoxRegion, Proposition]


# -- formulas ----------------------------------------------------------------

class Formula:
    """Base class of all formula nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        from .parser import format_formula

        return format_formula(self)


@dataclass(frozen=True, repr=False)
class TrueF(Formula):
    def __repr__(self):
        return "TRUE"


@dataclass(frozen=True, repr=False)
class Atom(Formula):
    pred: AtomicPredicate

    @property
    def name(self) -> str:
        return self.pred.name

    def __repr__(self):
        return f"Atom({self.pred.name})"


@dataclass(frozen=True, repr=False)
class Not(Formula):
    arg: Formula

    def __repr__(self):
        return "FALSE" if isinstance(self.arg, TrueF) else f"Not({self.arg!r})"


@dataclass(frozen=True, repr=False)
class And(Formula):
    args: tuple

    def __init__(self, *args):
        if len(args) == 1 and not isinstance(args[0], Formula):
            args = tuple(args[0])
        object.__setattr__(self, "args", tuple(args))

    def __repr__(self):
        return "And(" + ", ".join(map(repr, self.args)) + ")"


@dataclass(frozen=True, repr=False)
class Or(Formula):
    args: tuple

    def __init__(self, *args):
        if len(args) == 1 and not isinstance(args[0], Formula):
            args = tuple(args[0])
        object.__setattr__(self, "args", tuple(args))

    def __repr__(self):
        return "Or(" + ", ".join(map(repr, self.args)) + ")"


@dataclass(frozen=True, repr=False)
class Until(Formula):
    interval: Interval
    left: Formula
    right: Formula

    def __repr__(self):
        return f"Until({self.interval}, {self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Eventually(Formula):
    interval: Interval
    arg: Formula

    def __repr__(self):
        return f"Eventually({self.interval}, {self.arg!r})"


@dataclass(frozen=True, repr=False)
class Always(Formula):
    interval: Interval
    arg: Formula

    def __repr__(self):
        return f"Always({self.interval}, {self.arg!r})"


TRUE = TrueF()
FALSE = Not(TRUE)


def is_true(phi: Formula) -> bool:
    return isinstance(phi, TrueF)


def is_false(phi: Formula) -> bool:
    return isinstance(phi, Not) and isinstance(phi.arg, TrueF)


def children(phi: Formula) -> tuple:
    if isinstance(phi, (TrueF, Atom)):
        return ()
    if isinstance(phi, Not):
        return (phi.arg,)
    if isinstance(phi, (And, Or)):
        return phi.args
    if isinstance(phi, Until):
        return (phi.left, phi.right)
    if isinstance(phi, (Eventually, Always)):
        return (phi.arg,)
    raise TypeError(f"not a formula node: {phi!r}")


def atoms(phi: Formula) -> dict:
    """All atomic predicates in ``phi`` keyed by name."""
    found: dict = {}
    stack = [phi]
    while stack:
        node = stack.pop()
        if isinstance(node, Atom):
            found[node.pred.name] = node.pred
        stack.extend(children(node))
    return found


def depth(phi: Formula) -> int:
    kids = children(phi)
    return 1 + max((depth(c) for c in kids), default=0)


# -- traces ------------------------------------------------------------------

@dataclass
class Trace:
    """Sampled signals on the grid ``t[j] = j * sampling_period``, ``j = 0..H``."""

    sampling_period: float
    signals: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        sig = {}
        lengths = set()
        for name, values in self.signals.items():
            arr = np.asarray(values, dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            sig[name] = arr
            lengths.add(arr.shape[0])
        if len(lengths) > 1:
            raise ValueError(f"trace signals have different lengths: {sorted(lengths)}")
        self.signals = sig

    @property
    def horizon(self) -> int:
        """Last valid index ``H`` (``-1`` for an empty trace)."""
        for arr in self.signals.values():
            return arr.shape[0] - 1
        return -1

    def time(self, j: int) -> float:
        return j * self.sampling_period

    def value(self, name: str, j: int) -> np.ndarray:
        try:
            return self.signals[name][j]
        except KeyError:
            raise KeyError(f"trace has no signal named {name!r}") from None

    def prefix(self, last: int) -> "Trace":
        return Trace(self.sampling_period, {k: v[: last + 1] for k, v in self.signals.items()})

    @classmethod
    def from_sequences(cls, sampling_period: float, **signals: Sequence) -> "Trace":
        return cls(sampling_period, {k: np.asarray(v, float) for k, v in signals.items()})
