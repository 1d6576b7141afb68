"""The fog function model: declarative inputs, grouping and validation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping

from fogrune.entity import Blob, Constraint, EntityError, Selector, Value
from fogrune.geo import (
    GLOBAL,
    GeoError,
    GeoPoint,
    GeoScope,
    geohash_encode,
    scope_from_json,
    scope_to_json,
)
from fogrune.operators import REGISTRY, Operator

SLOS = ("min_latency", "min_bandwidth", None)


class SpecError(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


class UnroutableError(LookupError):
    """A registration cannot be assigned to a task key."""


@dataclass(frozen=True)
class GroupBy:
    kind: str  # "entity_id" | "entity_type" | "attribute_value"
    attribute: str = ""

    def to_json(self) -> Any:
        if self.kind == "attribute_value":
            return {"per_attribute_value": self.attribute}
        return f"per_{self.kind}"

    @classmethod
    def from_json(cls, obj: Any) -> "GroupBy":
        if obj in (None, "per_entity_id"):
            return PER_ENTITY_ID
        if obj == "per_entity_type":
            return PER_ENTITY_TYPE
        if isinstance(obj, dict) and set(obj) == {"per_attribute_value"}:
            return cls("attribute_value", str(obj["per_attribute_value"] or ""))
        raise SpecError([f"unknown group_by {obj!r}"])


PER_ENTITY_ID = GroupBy("entity_id")
PER_ENTITY_TYPE = GroupBy("entity_type")


def per_attribute_value(name: str) -> GroupBy:
    return GroupBy("attribute_value", name)


@dataclass(frozen=True)
class InputSelector:
    selected_type: str
    attribute_set: tuple[str, ...] = ()
    constraints: tuple[Constraint, ...] = ()
    group_by: GroupBy = PER_ENTITY_ID
    scoped: bool = False

    def to_json(self) -> dict:
        return {
            "selected_type": self.selected_type,
            "attribute_set": list(self.attribute_set),
            "constraints": [c.to_json() for c in self.constraints],
            "group_by": self.group_by.to_json(),
            "scoped": self.scoped,
        }


@dataclass(frozen=True)
class FogFunction:
    name: str
    operator: str
    inputs: tuple[InputSelector, ...]
    output_types: tuple[str, ...] = ()
    geoscope: GeoScope | None = None
    priority: int = 50
    slo: str | None = None

    def to_json(self) -> dict:
        out: dict = {
            "name": self.name,
            "operator": self.operator,
            "inputs": [i.to_json() for i in self.inputs],
            "output_types": list(self.output_types),
            "priority": self.priority,
            "slo": self.slo,
        }
        if self.geoscope is not None:
            out["geoscope"] = scope_to_json(self.geoscope)
        return out


def function_from_json(obj: Mapping) -> FogFunction:
    """Parse a function spec, collecting every structural problem."""
    diags: list[str] = []
    if not isinstance(obj, Mapping):
        raise SpecError(["function spec must be a JSON object"])
    unknown = set(obj) - {"name", "operator", "inputs", "output_types", "geoscope",
                          "priority", "slo"}
    if unknown:
        diags.append(f"unknown fields: {sorted(unknown)}")
    inputs = []
    raw_inputs = obj.get("inputs")
    if not isinstance(raw_inputs, list):
        diags.append("inputs must be a list")
        raw_inputs = []
    for n, raw in enumerate(raw_inputs):
        try:
            inputs.append(InputSelector(
                str(raw.get("selected_type", "")),
                tuple(raw.get("attribute_set", ())),
                tuple(Constraint.from_json(c) for c in raw.get("constraints", ())),
                GroupBy.from_json(raw.get("group_by")),
                bool(raw.get("scoped", False)),
            ))
        except SpecError as exc:
            diags.extend(f"inputs[{n}]: {d}" for d in exc.diagnostics)
        except (EntityError, KeyError, TypeError, AttributeError) as exc:
            diags.append(f"inputs[{n}]: {exc}")
    geoscope = None
    if obj.get("geoscope") is not None:
        try:
            geoscope = scope_from_json(obj["geoscope"])
        except (GeoError, KeyError, TypeError) as exc:
            diags.append(f"geoscope: {exc}")
    priority = obj.get("priority", 50)
    if isinstance(priority, bool) or not isinstance(priority, int):
        diags.append(f"priority must be an integer, got {priority!r}")
        priority = 50
    if diags:
        raise SpecError(diags)
    return FogFunction(
        name=str(obj.get("name", "")),
        operator=str(obj.get("operator", "")),
        inputs=tuple(inputs),
        output_types=tuple(obj.get("output_types", ())),
        geoscope=geoscope,
        priority=priority,
        slo=obj.get("slo"),
    )


def load_function(path: str) -> FogFunction:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError([f"{path}: malformed JSON: {exc}"]) from exc
    return function_from_json(obj)


def validate(f: FogFunction, registry: Mapping[str, Operator] = REGISTRY) -> list[str]:
    diags = []
    if not f.name:
        diags.append("name must be non-empty")
    if f.operator not in registry:
        diags.append(f"unknown operator {f.operator!r}")
    if not f.inputs:
        diags.append("at least one input is required")
    for n, inp in enumerate(f.inputs):
        if not inp.selected_type:
            diags.append(f"inputs[{n}]: selected_type must be non-empty")
        if inp.group_by.kind not in ("entity_id", "entity_type", "attribute_value"):
            diags.append(f"inputs[{n}]: unknown group_by {inp.group_by.kind!r}")
        if inp.group_by.kind == "attribute_value" and not inp.group_by.attribute:
            diags.append(f"inputs[{n}]: per_attribute_value needs an attribute name")
        if any(not a for a in inp.attribute_set):
            diags.append(f"inputs[{n}]: empty attribute name in attribute_set")
    if any(not t for t in f.output_types):
        diags.append("output_types must not contain empty names")
    if not 0 <= f.priority <= 100:
        diags.append(f"priority {f.priority} outside 0..100")
    if f.slo not in SLOS:
        diags.append(f"unknown slo {f.slo!r}")
    return diags


def effective_scope(f: FogFunction, inp: InputSelector) -> GeoScope:
    if inp.scoped and f.geoscope is not None:
        return f.geoscope
    return GLOBAL


def availability_selector(f: FogFunction, index: int) -> Selector:
    inp = f.inputs[index]
    return Selector(inp.selected_type, inp.attribute_set, inp.constraints,
                    effective_scope(f, inp))


def canonical_value(v: Value) -> str:
    """Injective string form of a grouping value.

    Plain strings stay as they are unless they contain ``:``; every other
    kind carries a ``kind:`` prefix, so ``"3"`` and ``3.0`` never share a key.
    """
    if isinstance(v, str):
        return v if ":" not in v else f"str:{v}"
    if isinstance(v, bool):
        return "bool:true" if v else "bool:false"
    if isinstance(v, int):
        v = float(v)
    if isinstance(v, float):
        return "num:" + (repr(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v))
    if isinstance(v, GeoPoint):
        return "geo:" + geohash_encode(v, 12)
    if isinstance(v, Blob):
        raise UnroutableError("cannot group by an opaque blob value")
    raise UnroutableError(f"cannot group by value {v!r}")


@dataclass(frozen=True)
class GroupKey:
    function: str
    key: str

    def __str__(self) -> str:
        return f"{self.function}:{self.key}"


_MISSING = object()


def group_key(f: FogFunction, input_index: int, reg, attr_value_hint: Any = _MISSING) -> GroupKey:
    """Task key for an availability registration on one of ``f``'s inputs."""
    gb = f.inputs[input_index].group_by
    if gb.kind == "entity_id":
        return GroupKey(f.name, reg.entity_id)
    if gb.kind == "entity_type":
        return GroupKey(f.name, reg.entity_type)
    if attr_value_hint is _MISSING or attr_value_hint is None:
        raise UnroutableError(
            f"{reg.entity_id}: value of {gb.attribute!r} unknown, cannot group")
    return GroupKey(f.name, canonical_value(attr_value_hint))
