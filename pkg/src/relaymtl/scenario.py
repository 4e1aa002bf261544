"""Scenario configuration: JSON schema, loading, defaults, built-in
scenarios, desk-scale transform and formula assembly."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .dwell import BoundReport, dwell_params, validate_config
from .linalg import max_singular_value
from .mtl import And, Atom, BoxRegion, Formula, NormBall, Interval, Always, Eventually, parse_formula
from .mtl.parser import UnknownAtomError
from .sim import build_models, double_integrator_matrices

SCHEMA_VERSION = 1
RELAY = "y0"

_vec = {"type": "array", "items": {"type": "number"}}
_pos = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "relay", "explorers", "formula"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "Ts": _pos,
        "N": {"type": "integer", "minimum": 1},
        "k": _pos,
        "V_T": {"type": "number"},
        "R": {"type": "number"},
        "R_f": {"type": "number"},
        "eta": {"type": "number"},
        "gravity": _pos,
        "x_g": {**_vec, "minItems": 4, "maxItems": 4},
        "relay": {
            "type": "object",
            "additionalProperties": False,
            "required": ["position"],
            "properties": {
                "position": {**_vec, "minItems": 3, "maxItems": 3},
                "u_min": {**_vec, "minItems": 4, "maxItems": 4},
                "u_max": {**_vec, "minItems": 4, "maxItems": 4},
            },
        },
        "explorers": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["position", "d_bar"],
                "properties": {
                    "name": {"type": "string"},
                    "position": {**_vec, "minItems": 2, "maxItems": 3},
                    "velocity": {**_vec, "minItems": 2, "maxItems": 2},
                    "d_bar": {"type": "number", "minimum": 0},
                },
            },
        },
        "regions": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "additionalProperties": False,
                "required": ["center", "size"],
                "properties": {
                    "center": {**_vec, "minItems": 3, "maxItems": 3},
                    "size": {**_vec, "minItems": 3, "maxItems": 3},
                },
            },
        },
        "formula": {"type": "string"},
        "variants": {"type": "object", "additionalProperties": {"type": "string"}},
        "auto_monitor_formula": {"type": "boolean"},
        "seed": {"type": "integer", "minimum": 0},
        "substeps": {"type": "integer", "minimum": 1},
        "max_steps": {"type": "integer", "minimum": 1},
        "big_M": _pos,
        "margin": {"type": "number", "minimum": 0},
        "force": {"type": "boolean"},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "backend": {"type": "string"},
                "node_limit": {"type": "integer", "minimum": 1},
                "time_limit": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "rel_gap": {"type": "number", "minimum": 0},
            },
        },
        "desk_scale": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "factor": _pos,
                "N": {"type": "integer", "minimum": 1},
                "u_min": {**_vec, "minItems": 4, "maxItems": 4},
                "u_max": {**_vec, "minItems": 4, "maxItems": 4},
            },
        },
    },
}

DEFAULTS = {
    "Ts": 0.5, "N": 20, "k": 0.1, "V_T": 1.0, "R": 5.0, "R_f": 5.0, "eta": 4.0, "gravity": 9.81,
    "x_g": [0.0, 0.0, 0.0, 0.0], "auto_monitor_formula": True, "seed": 0, "substeps": 20,
    "max_steps": 400, "big_M": 1e4, "margin": 1e-6, "force": False,
}

DEFAULT_INPUT_BOUND = 1000.0


class ScenarioError(ValueError):
    """Schema or consistency violation; ``pointer`` is a JSON pointer into the document."""

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


@dataclass
class ExplorerSpec:
    name: str
    position: tuple
    velocity: tuple
    d_bar: float


@dataclass
class ScenarioConfig:
    name: str
    Ts: float
    N: int
    k: float
    V_T: float
    R: float
    R_f: float
    eta: float
    gravity: float
    x_g: np.ndarray
    relay_position: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    explorers: list
    regions: dict
    formula: str
    auto_monitor_formula: bool = True
    seed: int = 0
    substeps: int = 20
    max_steps: int = 400
    big_M: float = 1e4
    margin: float = 1e-6
    force: bool = False
    solver: dict = field(default_factory=dict)
    variants: dict = field(default_factory=dict)
    desk_scale: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    # -- derived -------------------------------------------------------------

    def atoms(self) -> dict:
        """Atom name -> predicate: regions over the relay plus one service atom per explorer."""
        out = {}
        for name, reg in self.regions.items():
            out[name] = BoxRegion.centered(name, RELAY, reg["center"], reg["size"])
        for i, _ in enumerate(self.explorers, 1):
            out[f"m{i}"] = NormBall(f"m{i}", RELAY, f"yhat{i}", self.eta)
        return out

    def dwell_steps(self) -> list:
        A, _, _ = double_integrator_matrices()
        s_A = max_singular_value(A)
        x_g_bar = float(np.linalg.norm(self.x_g))
        return [dwell_params(s_A, self.V_T, x_g_bar, e.d_bar, self.Ts).n_steps for e in self.explorers]

    def monitor_formula(self) -> Optional[Formula]:
        """Conjunction over explorers of ``G F[0,n_i] (||y0 - yhat_i|| <= eta)``."""
        if not self.auto_monitor_formula:
            return None
        atoms = self.atoms()
        parts = [Always(Interval(0), Eventually(Interval(0, n), Atom(atoms[f"m{i}"])))
                 for i, n in enumerate(self.dwell_steps(), 1)]
        return parts[0] if len(parts) == 1 else And(*parts)

    def task_formula(self, variant: Optional[str] = None) -> Formula:
        text = self.formula if variant is None else self.variant_text(variant)
        try:
            return parse_formula(text, self.atoms())
        except UnknownAtomError as exc:
            raise ScenarioError(f"formula references unknown atom {exc.name!r}", "/formula") from exc

    def variant_text(self, variant: str) -> str:
        if variant not in self.variants:
            raise ScenarioError(f"unknown variant {variant!r} (have {sorted(self.variants)})", "/variants")
        return self.variants[variant]

    def full_formula(self, variant: Optional[str] = None) -> Formula:
        task = self.task_formula(variant)
        mon = self.monitor_formula()
        if mon is None:
            return task
        return And(*(mon.args if isinstance(mon, And) else (mon,)), task)

    def bound_report(self) -> BoundReport:
        relay, explorers = build_models(self)
        ex = explorers[0]
        return validate_config(A=ex.A, B=ex.B, C=ex.C, P=ex.P, k=self.k,
                               d_bars=[e.d_bar for e in self.explorers], x_g=self.x_g, V_T=self.V_T,
                               R=self.R, eta=self.eta, R_f=self.R_f, Ts=self.Ts)

    def with_variant(self, variant: str) -> "ScenarioConfig":
        cfg = copy.deepcopy(self)
        cfg.formula = self.variant_text(variant)
        cfg.name = f"{self.name}:{variant}"
        return cfg

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _check(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        pointer = "/" + "/".join(str(p) for p in err.absolute_path)
        raise ScenarioError(err.message, pointer)


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    """Validate a scenario document and fill defaults."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    _check(doc)
    full = copy.deepcopy(DEFAULTS)
    full.update(copy.deepcopy(doc))
    relay = full["relay"]
    u_min = relay.get("u_min", [-DEFAULT_INPUT_BOUND] * 4)
    u_max = relay.get("u_max", [DEFAULT_INPUT_BOUND] * 4)
    if any(a > b for a, b in zip(u_min, u_max)):
        raise ScenarioError("u_min exceeds u_max", "/relay/u_min")
    explorers = []
    for i, e in enumerate(full["explorers"], 1):
        pos = list(e["position"]) + [0.0] * (3 - len(e["position"]))
        explorers.append(ExplorerSpec(e.get("name", f"explorer{i}"), tuple(pos),
                                      tuple(e.get("velocity", (0.0, 0.0))), float(e["d_bar"])))
    for name, reg in full.get("regions", {}).items():
        if any(s < 0 for s in reg["size"]):
            raise ScenarioError("region size must be non-negative", f"/regions/{name}/size")
        if name in ("true", "false", "F", "G", "U", "inf") or not name.isidentifier():
            raise ScenarioError(f"region name {name!r} is not a valid atom identifier", f"/regions/{name}")
    cfg = ScenarioConfig(
        name=full.get("name", "scenario"), Ts=float(full["Ts"]), N=int(full["N"]), k=float(full["k"]),
        V_T=float(full["V_T"]), R=float(full["R"]), R_f=float(full["R_f"]), eta=float(full["eta"]),
        gravity=float(full["gravity"]), x_g=np.asarray(full["x_g"], float),
        relay_position=np.asarray(relay["position"], float), u_min=np.asarray(u_min, float),
        u_max=np.asarray(u_max, float), explorers=explorers, regions=dict(full.get("regions", {})),
        formula=full["formula"], auto_monitor_formula=bool(full["auto_monitor_formula"]),
        seed=int(full["seed"]), substeps=int(full["substeps"]), max_steps=int(full["max_steps"]),
        big_M=float(full["big_M"]), margin=float(full["margin"]), force=bool(full["force"]),
        solver=dict(full.get("solver", {})), variants=dict(full.get("variants", {})),
        desk_scale=dict(full.get("desk_scale", {})), raw=copy.deepcopy(doc),
    )
    # formula and variants must only mention declared atoms
    cfg.task_formula()
    for v in cfg.variants:
        try:
            cfg.task_formula(v)
        except ScenarioError as exc:
            raise ScenarioError(str(exc).split(": ", 1)[1], f"/variants/{v}") from exc
    return cfg


BUILTIN_PREFIX = "builtin:"


def builtin_names() -> list:
    files = resources.files("relaymtl").joinpath("scenarios")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_document(path) -> dict:
    path = str(path)
    if path.startswith(BUILTIN_PREFIX):
        name = path[len(BUILTIN_PREFIX):]
        res = resources.files("relaymtl").joinpath("scenarios", f"{name}.json")
        if not res.is_file():
            raise ScenarioError(f"no built-in scenario {name!r} (have {builtin_names()})")
        text = res.read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg} (line {exc.lineno})") from exc


def load_scenario(path, *, desk: bool = False, variant: Optional[str] = None) -> ScenarioConfig:
    doc = load_document(path)
    if desk:
        doc = desk_scale_document(doc)
    cfg = scenario_from_dict(doc)
    if variant is not None:
        cfg = cfg.with_variant(variant)
    return cfg


def desk_scale_document(doc: dict) -> dict:
    """Divide every coordinate by ``desk_scale.factor`` (default 10) and use the desk horizon.

    Radii, thresholds and interval bounds keep their values; the relay input
    bounds come from ``desk_scale`` when given.
    """
    _check(doc)
    opts = doc.get("desk_scale", {})
    f = float(opts.get("factor", 10.0))
    out = copy.deepcopy(doc)
    out.pop("desk_scale", None)
    out["name"] = doc.get("name", "scenario") + "-desk"
    out["N"] = int(opts.get("N", 10))
    out["relay"]["position"] = [c / f for c in doc["relay"]["position"]]
    for key in ("u_min", "u_max"):
        if key in opts:
            out["relay"][key] = list(opts[key])
    for e in out["explorers"]:
        e["position"] = [c / f for c in e["position"]]
        if "velocity" in e:
            e["velocity"] = [c / f for c in e["velocity"]]
    if "x_g" in out:
        out["x_g"] = [c / f for c in out["x_g"]]
    for reg in out.get("regions", {}).values():
        reg["center"] = [c / f for c in reg["center"]]
        reg["size"] = [c / f for c in reg["size"]]
    return out
