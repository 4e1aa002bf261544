"""CPLEX LP export, solution import and the subprocess backend.

Solution files are plain text, one ``name value`` pair per line. Blank
lines and lines starting with ``#`` are ignored; an optional line
``status <optimal|infeasible|limit>`` reports the solver outcome. The
``<variable name=".." value=".."/>`` elements of a CPLEX-style ``.sol``
XML file are accepted too.
"""

from __future__ import annotations

import math
import re
import shlex
import subprocess
import tempfile
import time
import warnings
from pathlib import Path

from .model import BINARY, EQ, GE, LE, MilpModel

_TERMS_PER_LINE = 6
_NAME_BAD = re.compile(r"[^A-Za-z0-9_.]")
_XML_VAR = re.compile(r"<variable\b[^>]*>")
_XML_ATTR = re.compile(r'(\w+)\s*=\s*"([^"]*)"')


class SolutionFormatError(ValueError):
    pass


class MissingValuesWarning(UserWarning):
    pass


def _num(v: float) -> str:
    return format(float(v), ".17g")


def _terms(terms) -> list:
    out = []
    for k, (v, c) in enumerate(terms):
        sign = "-" if c < 0 else "+"
        mag = _num(abs(c))
        if k == 0:
            out.append(f"{'-' if c < 0 else ''}{mag} x{v}")
        else:
            out.append(f"{sign} {mag} x{v}")
    return out


def _wrap(prefix: str, parts: list, suffix: str = "") -> list:
    lines = []
    for k in range(0, len(parts), _TERMS_PER_LINE):
        chunk = " ".join(parts[k:k + _TERMS_PER_LINE])
        lines.append((prefix if k == 0 else "   ") + chunk)
    if suffix:
        lines[-1] += suffix
    return lines


def _row_name(i: int, tag: str) -> str:
    clean = _NAME_BAD.sub("_", tag)[:40]
    return f"r{i}" + (f"_{clean}" if clean else "")


def export_lp(model: MilpModel) -> str:
    """Deterministic CPLEX LP text (LF line endings, 17 significant digits)."""
    lines = ["Minimize"]
    obj = [(v, c) for v, c in model.objective if c != 0.0]
    if obj:
        lines += _wrap(" obj: ", _terms(obj))
    else:
        lines.append(" obj: 0 x0")
    lines.append("Subject To")
    op = {LE: "<=", GE: ">=", EQ: "="}
    for i, con in enumerate(model.constraints):
        lines += _wrap(f" {_row_name(i, con.tag)}: ", _terms(con.terms), f" {op[con.sense]} {_num(con.rhs)}")
    lines.append("Bounds")
    for v in model.vars:
        lo, hi = v.lower, v.upper
        if math.isinf(lo) and math.isinf(hi):
            lines.append(f" x{v.id} free")
        elif lo == hi:
            lines.append(f" x{v.id} = {_num(lo)}")
        else:
            lo_s = "-inf" if math.isinf(lo) else _num(lo)
            hi_s = "+inf" if math.isinf(hi) else _num(hi)
            lines.append(f" {lo_s} <= x{v.id} <= {hi_s}")
    bins = [f"x{v.id}" for v in model.vars if v.kind == BINARY]
    if bins:
        lines.append("Binary")
        lines += [" " + name for name in bins]
    lines.append("End")
    return "\n".join(lines) + "\n"


def _var_id(name: str) -> int:
    m = re.fullmatch(r"x(\d+)", name)
    if not m:
        raise SolutionFormatError(f"unknown variable name {name!r}")
    return int(m.group(1))


def parse_solution(text: str) -> tuple:
    """``(status or None, {var id: value})``."""
    values: dict = {}
    status = None

    def put(name, raw):
        vid = _var_id(name)
        if vid in values:
            raise SolutionFormatError(f"duplicate value for {name}")
        try:
            values[vid] = float(raw)
        except ValueError as exc:
            raise SolutionFormatError(f"bad number {raw!r} for {name}") from exc

    if "<variable" in text:
        for tag in _XML_VAR.findall(text):
            attrs = dict(_XML_ATTR.findall(tag))
            if "name" not in attrs or "value" not in attrs:
                raise SolutionFormatError(f"malformed variable element: {tag}")
            put(attrs["name"], attrs["value"])
        return status, values
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SolutionFormatError(f"line {lineno}: expected 'name value', got {line!r}")
        if parts[0] == "status":
            status = parts[1].lower()
            continue
        put(parts[0], parts[1])
    return status, values


def import_solution(text: str, n_vars: int = None) -> dict:
    """Assignment keyed by variable id.

    With ``n_vars`` given, ids outside the model are rejected and missing
    ones are set to 0 with a :class:`MissingValuesWarning`.
    """
    _, values = parse_solution(text)
    if n_vars is not None:
        extra = [v for v in values if v >= n_vars]
        if extra:
            raise SolutionFormatError(f"unknown variable x{extra[0]}")
        missing = [v for v in range(n_vars) if v not in values]
        if missing:
            warnings.warn(f"{len(missing)} variables missing from solution; set to 0",
                          MissingValuesWarning, stacklevel=2)
            for v in missing:
                values[v] = 0.0
    return values


def solve_external(model: MilpModel, config):
    """Run ``config.command`` (``{in}``/``{out}`` placeholders) on an exported LP file."""
    from .bnb import (STATUS_INFEASIBLE, STATUS_LIMIT, STATUS_OPTIMAL, SolverError,
                      SolverResult)

    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="relaymtl-") as tmp:
        lp_path = Path(tmp) / "model.lp"
        out_path = Path(tmp) / "model.sol"
        lp_path.write_text(export_lp(model), encoding="utf-8", newline="\n")
        argv = [tok.replace("{in}", str(lp_path)).replace("{out}", str(out_path))
                for tok in shlex.split(config.command)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=config.time_limit)
        except FileNotFoundError as exc:
            raise SolverError(f"external solver not found: {argv[0]}") from exc
        except subprocess.TimeoutExpired:
            return SolverResult(STATUS_LIMIT, math.nan, {}, {"wall_time": time.perf_counter() - t0})
        if proc.returncode != 0:
            raise SolverError(f"external solver exited with code {proc.returncode}: {proc.stderr.strip()[:500]}")
        if not out_path.exists():
            raise SolverError("external solver produced no solution file")
        status, values = parse_solution(out_path.read_text(encoding="utf-8"))
    stats = {"wall_time": time.perf_counter() - t0, "backend": "external"}
    if status == "infeasible":
        return SolverResult(STATUS_INFEASIBLE, math.nan, {}, stats)
    if not values:
        return SolverResult(STATUS_LIMIT if status == "limit" else STATUS_INFEASIBLE, math.nan, {}, stats)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MissingValuesWarning)
        assignment = import_solution("\n".join(f"x{k} {v!r}" for k, v in values.items()), len(model.vars))
    problems = model.audit(assignment, tol=1e-5)
    if problems:
        raise SolverError("external solution fails the model audit: " + "; ".join(problems[:3]))
    st = STATUS_LIMIT if status == "limit" else STATUS_OPTIMAL
    return SolverResult(st, float(model.objective_value(assignment)), assignment, stats)
