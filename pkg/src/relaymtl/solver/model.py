"""Solver-agnostic mixed-integer linear program."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"

LE, EQ, GE = "<=", "=", ">="


@dataclass
class MilpVar:
    id: int
    name: str
    kind: str = CONTINUOUS
    lower: float = 0.0
    upper: float = math.inf

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, BINARY):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.kind == BINARY:
            self.lower = max(0.0, float(self.lower))
            self.upper = min(1.0, float(self.upper))
        if self.lower > self.upper:
            raise ValueError(f"variable {self.name}: lower bound exceeds upper bound")


@dataclass
class LinConstraint:
    terms: list
    sense: str
    rhs: float
    tag: str = ""

    def __post_init__(self):
        if self.sense not in (LE, EQ, GE):
            raise ValueError(f"unknown constraint sense {self.sense!r}")
        if not self.terms:
            raise ValueError(f"constraint {self.tag!r} has no terms")
        if not all(math.isfinite(c) for _, c in self.terms) or not math.isfinite(self.rhs):
            raise ValueError(f"constraint {self.tag!r} has non-finite data")

    def activity(self, values) -> float:
        return sum(c * values[v] for v, c in self.terms)

    def violation(self, values) -> float:
        a = self.activity(values)
        if self.sense == LE:
            return max(0.0, a - self.rhs)
        if self.sense == GE:
            return max(0.0, self.rhs - a)
        return abs(a - self.rhs)


@dataclass
class MilpModel:
    vars: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    big_M: float = 1e4

    def add_var(self, name: str, kind: str = CONTINUOUS, lower: float = 0.0,
                upper: float = math.inf) -> int:
        v = MilpVar(len(self.vars), name, kind, float(lower), float(upper))
        self.vars.append(v)
        return v.id

    def add_constraint(self, terms: Iterable, sense: str, rhs: float, tag: str = "") -> Optional[LinConstraint]:
        merged: dict = {}
        for v, c in terms:
            if not 0 <= v < len(self.vars):
                raise ValueError(f"constraint {tag!r} references undeclared variable {v}")
            merged[v] = merged.get(v, 0.0) + float(c)
        merged = [(v, c) for v, c in merged.items() if c != 0.0]
        if not merged:
            # constant row: keep the model honest instead of silently dropping it
            ok = {LE: 0.0 <= rhs, GE: 0.0 >= rhs, EQ: rhs == 0.0}[sense]
            if ok:
                return None
            raise ValueError(f"constraint {tag!r} is a constant contradiction")
        con = LinConstraint(merged, sense, float(rhs), tag)
        self.constraints.append(con)
        return con

    def set_objective(self, terms: Iterable) -> None:
        obj: dict = {}
        for v, c in terms:
            if not 0 <= v < len(self.vars):
                raise ValueError(f"objective references undeclared variable {v}")
            obj[v] = obj.get(v, 0.0) + float(c)
        self.objective = sorted(obj.items())

    @property
    def binaries(self) -> list:
        return [v.id for v in self.vars if v.kind == BINARY]

    def objective_value(self, values) -> float:
        return sum(c * values[v] for v, c in self.objective)

    def arrays(self):
        """Dense ``(c, A, senses, b, lower, upper)``."""
        n = len(self.vars)
        c = np.zeros(n)
        for v, coef in self.objective:
            c[v] += coef
        A = np.zeros((len(self.constraints), n))
        for i, con in enumerate(self.constraints):
            for v, coef in con.terms:
                A[i, v] += coef
        b = np.array([con.rhs for con in self.constraints], float)
        senses = [con.sense for con in self.constraints]
        lower = np.array([v.lower for v in self.vars], float)
        upper = np.array([v.upper for v in self.vars], float)
        return c, A, senses, b, lower, upper

    def audit(self, values, tol: float = 1e-6) -> list:
        """Human-readable list of violated bounds, rows and integrality (empty if clean)."""
        problems = []
        for v in self.vars:
            x = values[v.id]
            if x < v.lower - tol or x > v.upper + tol:
                problems.append(f"{v.name}={x} outside [{v.lower}, {v.upper}]")
            if v.kind == BINARY and min(abs(x), abs(x - 1.0)) > tol:
                problems.append(f"{v.name}={x} is not binary")
        for con in self.constraints:
            viol = con.violation(values)
            if viol > tol * max(1.0, abs(con.rhs)):
                problems.append(f"row {con.tag!r} violated by {viol:.3g}")
        return problems

    def stats(self) -> dict:
        return {
            "vars": len(self.vars),
            "binaries": len(self.binaries),
            "constraints": len(self.constraints),
            "equalities": sum(1 for c in self.constraints if c.sense == EQ),
            "nonzeros": sum(len(c.terms) for c in self.constraints),
        }
