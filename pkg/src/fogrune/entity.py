"""Context entities, partial updates and selectors.

Attribute values are plain Python objects: ``float`` (numbers), ``str``,
``bool``, :class:`GeoPoint` or :class:`Blob`.  Everything here is an
immutable value; the operations are pure.
"""

from __future__ import annotations

import json
import operator
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Any, Mapping, Union

from fogrune.geo import (
    GLOBAL,
    GeoPoint,
    GeoScope,
    scope_contains,
    scope_from_json,
    scope_to_json,
)


class EntityError(ValueError):
    pass


@dataclass(frozen=True)
class Blob:
    """Opaque payload.  Only its size and a content tag are carried."""

    size: int
    tag: str = ""

    def __post_init__(self) -> None:
        if self.size < 0:
            raise EntityError("blob size must be >= 0")


Value = Union[float, str, bool, GeoPoint, Blob]


def normalize_value(v: Any) -> Value:
    if isinstance(v, bool) or isinstance(v, (str, GeoPoint, Blob)):
        return v
    if isinstance(v, (int, float)):
        return float(v)
    raise EntityError(f"unsupported attribute value: {v!r}")


def value_to_json(v: Value) -> dict:
    if isinstance(v, bool):
        return {"bool": v}
    if isinstance(v, float):
        return {"number": v}
    if isinstance(v, str):
        return {"text": v}
    if isinstance(v, GeoPoint):
        return {"geo": {"lat": v.lat, "lon": v.lon}}
    if isinstance(v, Blob):
        return {"blob": {"size": v.size, "tag": v.tag}}
    raise EntityError(f"unsupported attribute value: {v!r}")


def value_from_json(obj: Mapping) -> Value:
    if not isinstance(obj, Mapping) or len(obj) != 1:
        raise EntityError(f"bad value encoding: {obj!r}")
    (kind, raw), = obj.items()
    if kind == "bool":
        return bool(raw)
    if kind == "number":
        return float(raw)
    if kind == "text":
        return str(raw)
    if kind == "geo":
        return GeoPoint(raw["lat"], raw["lon"])
    if kind == "blob":
        return Blob(int(raw["size"]), str(raw.get("tag", "")))
    raise EntityError(f"unknown value kind: {kind!r}")


@dataclass(frozen=True)
class Attribute:
    name: str
    value: Value
    timestamp: int = 0
    source_id: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            raise EntityError("attribute name must be non-empty")
        object.__setattr__(self, "value", normalize_value(self.value))

    def to_json(self) -> dict:
        return {"name": self.name, "value": value_to_json(self.value),
                "timestamp": self.timestamp, "source_id": self.source_id}

    @classmethod
    def from_json(cls, obj: Mapping) -> "Attribute":
        return cls(obj["name"], value_from_json(obj["value"]),
                   int(obj.get("timestamp", 0)), str(obj.get("source_id", "")))


def _frozen_map(m: Mapping | None) -> Mapping:
    return MappingProxyType(dict(m or {}))


def _point_json(p: GeoPoint | None) -> dict | None:
    return None if p is None else {"lat": p.lat, "lon": p.lon}


def _point_from_json(obj: Mapping | None) -> GeoPoint | None:
    return None if obj is None else GeoPoint(obj["lat"], obj["lon"])


@dataclass(frozen=True)
class ContextEntity:
    id: str
    entity_type: str
    attributes: Mapping[str, Attribute] = field(default_factory=dict)
    location: GeoPoint | None = None
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id or not self.entity_type:
            raise EntityError("entity id and type must be non-empty")
        for k, a in self.attributes.items():
            if k != a.name:
                raise EntityError(f"attribute key {k!r} != name {a.name!r}")
        object.__setattr__(self, "attributes", _frozen_map(self.attributes))
        object.__setattr__(self, "metadata", _frozen_map(self.metadata))

    def value(self, name: str, default: Any = None) -> Any:
        a = self.attributes.get(name)
        return default if a is None else a.value

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "entity_type": self.entity_type,
            "attributes": {k: a.to_json() for k, a in self.attributes.items()},
            "location": _point_json(self.location),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ContextEntity":
        return cls(
            obj["id"], obj["entity_type"],
            {k: Attribute.from_json(a) for k, a in obj.get("attributes", {}).items()},
            _point_from_json(obj.get("location")),
            dict(obj.get("metadata") or {}),
        )


@dataclass(frozen=True)
class EntityUpdate:
    id: str
    entity_type: str
    changed: Mapping[str, Attribute] = field(default_factory=dict)
    removed: tuple[str, ...] = ()
    location: GeoPoint | None = None

    def __post_init__(self) -> None:
        if not self.id or not self.entity_type:
            raise EntityError("update id and type must be non-empty")
        for k, a in self.changed.items():
            if k != a.name:
                raise EntityError(f"attribute key {k!r} != name {a.name!r}")
        removed = tuple(self.removed)
        if set(removed) & set(self.changed):
            raise EntityError("changed and removed attribute sets overlap")
        object.__setattr__(self, "changed", _frozen_map(self.changed))
        object.__setattr__(self, "removed", removed)

    @classmethod
    def of(cls, entity_id: str, entity_type: str, *attrs: Attribute,
           location: GeoPoint | None = None,
           removed: tuple[str, ...] = ()) -> "EntityUpdate":
        return cls(entity_id, entity_type, {a.name: a for a in attrs}, removed, location)

    @property
    def is_heartbeat(self) -> bool:
        return not self.changed and not self.removed and self.location is None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "entity_type": self.entity_type,
            "changed": {k: a.to_json() for k, a in self.changed.items()},
            "removed": list(self.removed),
            "location": _point_json(self.location),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "EntityUpdate":
        return cls(
            obj["id"], obj["entity_type"],
            {k: Attribute.from_json(a) for k, a in obj.get("changed", {}).items()},
            tuple(obj.get("removed", ())),
            _point_from_json(obj.get("location")),
        )


def entity_from_update(update: EntityUpdate) -> ContextEntity:
    return ContextEntity(update.id, update.entity_type, dict(update.changed),
                         update.location)


def merge_update(entity: ContextEntity, update: EntityUpdate) -> ContextEntity:
    """Apply a partial update with latest-wins per attribute.

    Ties on timestamp go to the incoming attribute, so re-delivered
    updates are harmless.
    """
    if update.id != entity.id or update.entity_type != entity.entity_type:
        raise EntityError(
            f"update {update.entity_type}:{update.id} does not apply to "
            f"{entity.entity_type}:{entity.id}")
    attrs = dict(entity.attributes)
    for name, incoming in update.changed.items():
        current = attrs.get(name)
        if current is None or incoming.timestamp >= current.timestamp:
            attrs[name] = incoming
    for name in update.removed:
        attrs.pop(name, None)
    location = update.location if update.location is not None else entity.location
    return replace(entity, attributes=attrs, location=location)


def project(entity: ContextEntity, attribute_set) -> ContextEntity:
    if not attribute_set:
        return entity
    keep = set(attribute_set)
    attrs = {k: a for k, a in entity.attributes.items() if k in keep}
    return replace(entity, attributes=attrs)


def project_update(update: EntityUpdate, attribute_set) -> EntityUpdate:
    if not attribute_set:
        return update
    keep = set(attribute_set)
    return replace(
        update,
        changed={k: a for k, a in update.changed.items() if k in keep},
        removed=tuple(n for n in update.removed if n in keep),
    )


# -- selectors --------------------------------------------------------------

_OPS = {
    "eq": operator.eq, "ne": operator.ne,
    "lt": operator.lt, "le": operator.le,
    "gt": operator.gt, "ge": operator.ge,
}
ORDERING_OPS = frozenset({"lt", "le", "gt", "ge"})


@dataclass(frozen=True)
class Constraint:
    attribute: str
    op: str
    literal: float | str

    def __post_init__(self) -> None:
        if self.op not in _OPS:
            raise EntityError(f"unknown constraint op {self.op!r}")
        lit = self.literal
        if isinstance(lit, bool) or not isinstance(lit, (int, float, str)):
            raise EntityError("constraint literal must be a number or text")
        if isinstance(lit, int):
            object.__setattr__(self, "literal", float(lit))
        if self.op in ORDERING_OPS and isinstance(self.literal, str):
            raise EntityError(f"ordering op {self.op!r} needs a number literal")

    def holds(self, entity: ContextEntity) -> bool:
        a = entity.attributes.get(self.attribute)
        if a is None:
            return False
        v = a.value
        same_kind = isinstance(v, str) if isinstance(self.literal, str) else (
            isinstance(v, float) and not isinstance(v, bool))
        if not same_kind:
            # a value of another kind is never equal to, nor ordered against, the literal
            return self.op == "ne"
        return _OPS[self.op](v, self.literal)

    def to_json(self) -> dict:
        return {"attribute": self.attribute, "op": self.op, "literal": self.literal}

    @classmethod
    def from_json(cls, obj: Mapping) -> "Constraint":
        return cls(obj["attribute"], obj["op"], obj["literal"])


@dataclass(frozen=True)
class Selector:
    entity_type: str
    attribute_set: tuple[str, ...] = ()
    constraints: tuple[Constraint, ...] = ()
    scope: GeoScope = GLOBAL
    entity_id: str | None = None

    def __post_init__(self) -> None:
        if not self.entity_type:
            raise EntityError("selector entity_type must be non-empty")
        object.__setattr__(self, "attribute_set", tuple(self.attribute_set))
        object.__setattr__(self, "constraints", tuple(self.constraints))

    def referenced_attributes(self) -> set[str]:
        return set(self.attribute_set) | {c.attribute for c in self.constraints}

    def to_json(self) -> dict:
        return {
            "entity_type": self.entity_type,
            "attribute_set": list(self.attribute_set),
            "constraints": [c.to_json() for c in self.constraints],
            "scope": scope_to_json(self.scope),
            "entity_id": self.entity_id,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Selector":
        return cls(
            obj["entity_type"],
            tuple(obj.get("attribute_set", ())),
            tuple(Constraint.from_json(c) for c in obj.get("constraints", ())),
            scope_from_json(obj.get("scope")),
            obj.get("entity_id"),
        )


def matches(entity: ContextEntity, selector: Selector) -> bool:
    if entity.entity_type != selector.entity_type:
        return False
    if selector.entity_id is not None and entity.id != selector.entity_id:
        return False
    if not all(c.holds(entity) for c in selector.constraints):
        return False
    return scope_contains(selector.scope, entity.location)


# -- canonical encoding -------------------------------------------------------


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      default=_json_default)


def _json_default(o: Any) -> Any:
    if hasattr(o, "to_json"):
        return o.to_json()
    if isinstance(o, GeoPoint):
        return {"lat": o.lat, "lon": o.lon}
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _blob_bytes(obj: Any) -> int:
    if isinstance(obj, dict):
        inner = obj.get("blob")
        if len(obj) == 1 and isinstance(inner, dict) and set(inner) == {"size", "tag"}:
            return int(inner["size"])
        return sum(_blob_bytes(v) for v in obj.values())
    if isinstance(obj, (list, tuple)):
        return sum(_blob_bytes(v) for v in obj)
    if isinstance(obj, Blob):
        return obj.size
    if hasattr(obj, "to_json"):
        return _blob_bytes(obj.to_json())
    return 0


def serialized_size(obj: Any) -> int:
    """Bytes of the canonical JSON encoding plus the raw bytes of any blobs."""
    plain = obj.to_json() if hasattr(obj, "to_json") else obj
    return len(canonical_json(plain).encode("utf-8")) + _blob_bytes(plain)
