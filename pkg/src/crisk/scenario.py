"""Scenario files: loading, validation, serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import risk
from .diagnostics import BlockPolytope, ProperConvexBlockFn
from .errors import CriskError, DimensionError, UnknownNameError, ValidationError
from .l0 import EventuallyPeriodicSeq
from .measure_algebra import SubAlgebra

SECTIONS = ("positions", "measures", "polytopes", "functions", "sequences")


class ScenarioParseError(ValidationError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message, field="<json>")
        self.line = line
        self.column = column


@dataclass
class SimonsInstance:
    sequence: EventuallyPeriodicSeq
    subset: list
    raw: dict

    @classmethod
    def from_json(cls, data: dict, name: str):
        try:
            seq = EventuallyPeriodicSeq(tuple(np.asarray(t, dtype=float) for t in data.get("prefix", [])),
                                        tuple(np.asarray(t, dtype=float) for t in data["cycle"]))
            subset = data["subset"]
        except (KeyError, TypeError, ValueError, CriskError) as exc:
            raise ValidationError(f"sequence {name!r} is malformed: {exc}",
                                  field=f"sequences.{name}") from None
        return cls(seq, subset, data)


@dataclass
class ScenarioFile:
    alg: SubAlgebra
    positions: dict[str, np.ndarray] = field(default_factory=dict)
    measures: dict[str, risk.RiskMeasure] = field(default_factory=dict)
    polytopes: dict[str, BlockPolytope] = field(default_factory=dict)
    functions: dict[str, ProperConvexBlockFn] = field(default_factory=dict)
    sequences: dict[str, SimonsInstance] = field(default_factory=dict)

    def get(self, section: str, name: str):
        table = getattr(self, section)
        if name not in table:
            raise UnknownNameError(section.rstrip("s"), name, table)
        return table[name]


def _named(data: dict, section: str) -> dict:
    value = data.get(section, {})
    if not isinstance(value, dict):
        raise ValidationError(f"'{section}' must be an object keyed by name", field=section)
    return value


def parse_scenario(data: dict) -> ScenarioFile:
    if not isinstance(data, dict):
        raise ValidationError("a scenario must be a JSON object", field="<root>")
    alg = SubAlgebra.from_json(data)
    sc = ScenarioFile(alg)
    for name, values in _named(data, "positions").items():
        try:
            x = np.asarray(values, dtype=float)
        except (TypeError, ValueError):
            raise ValidationError(f"position {name!r} is not numeric", field=f"positions.{name}") from None
        if x.shape != (alg.n,):
            raise DimensionError(f"position {name!r} has shape {x.shape}, expected ({alg.n},)")
        if not np.all(np.isfinite(x)):
            raise ValidationError(f"position {name!r} has non-finite entries", field=f"positions.{name}")
        sc.positions[name] = x
    for name, spec in _named(data, "measures").items():
        sc.measures[name] = risk.from_json(alg, spec, name=name)
    for name, items in _named(data, "polytopes").items():
        if not isinstance(items, list):
            raise ValidationError(f"polytope {name!r} must be a list of blocks", field=f"polytopes.{name}")
        sc.polytopes[name] = BlockPolytope.from_json(items)
    for name, items in _named(data, "functions").items():
        if not isinstance(items, list):
            raise ValidationError(f"function {name!r} must be a list of blocks", field=f"functions.{name}")
        sc.functions[name] = ProperConvexBlockFn.from_json(items)
    for name, spec in _named(data, "sequences").items():
        sc.sequences[name] = SimonsInstance.from_json(spec, name)
    return sc


def load_scenario(path) -> ScenarioFile:
    """Read and validate a scenario file."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}: {exc.msg} at line {exc.lineno}, column {exc.colno}",
                                 exc.lineno, exc.colno) from None
    return parse_scenario(data)


def serialize_scenario(sc: ScenarioFile) -> dict:
    out = sc.alg.to_json()
    out["positions"] = {k: v.tolist() for k, v in sc.positions.items()}
    out["measures"] = {k: m.to_json() for k, m in sc.measures.items()}
    out["polytopes"] = {k: p.to_json() for k, p in sc.polytopes.items()}
    out["functions"] = {k: f.to_json() for k, f in sc.functions.items()}
    out["sequences"] = {k: s.raw for k, s in sc.sequences.items()}
    return out


def jsonable(obj):
    """Convert numpy values to plain JSON; infinities become "+inf"/"-inf", NaN becomes null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "+inf" if v > 0 else "-inf"
        return v + 0.0  # folds -0.0 into 0.0
    return obj
