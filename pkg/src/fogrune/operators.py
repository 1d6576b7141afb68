"""Operator registry.

An operator is the code a task runs for every input notification:
``handle(entity, ctx)`` may return entity updates and/or call
``ctx.publish``.  Operators must be deterministic given their input and
query results, and hold no state between calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

from fogrune.entity import Attribute, ContextEntity, EntityUpdate, Selector
from fogrune.geo import GeoPoint, haversine_m


class OperatorContext(Protocol):
    task_id: str
    output_types: tuple[str, ...]

    def publish(self, update: EntityUpdate) -> None: ...

    def query(self, selector: Selector) -> list[ContextEntity]: ...

    def subscribe(self, selector: Selector) -> str: ...


Handler = Callable[[ContextEntity, OperatorContext], "list[EntityUpdate] | None"]


@dataclass(frozen=True)
class Operator:
    name: str
    handle: Handler
    cost_us: int = 0
    weight: int = 1


def _event_time(entity: ContextEntity, names) -> int:
    return max((entity.attributes[n].timestamp for n in names if n in entity.attributes),
               default=0)


def estimate_speed(entity: ContextEntity, ctx: OperatorContext) -> list[EntityUpdate]:
    """Speed from the distance between the last two reported positions."""
    loc = entity.value("location")
    prev = entity.value("prev_location")
    dt_ms = entity.value("dt_ms")
    if not isinstance(loc, GeoPoint) or not isinstance(prev, GeoPoint) or not dt_ms:
        return []
    kmh = round(haversine_m(prev, loc) / (dt_ms / 1000.0) * 3.6, 6)
    ts = _event_time(entity, ("location", "prev_location", "dt_ms"))
    out_type = ctx.output_types[0] if ctx.output_types else "Speed"
    return [EntityUpdate.of(
        f"{out_type}.{entity.id}", out_type,
        Attribute("speed_kmh", kmh, ts, entity.id),
        Attribute("source", entity.id, ts, entity.id),
        location=loc,
    )]


def speed_alarm(entity: ContextEntity, ctx: OperatorContext) -> list[EntityUpdate]:
    speed = entity.value("speed_kmh")
    if not isinstance(speed, float) or speed <= 120.0:
        return []
    ts = _event_time(entity, ("speed_kmh",))
    out_type = ctx.output_types[0] if ctx.output_types else "Alarm"
    return [EntityUpdate.of(
        f"{out_type}.{entity.id}", out_type,
        Attribute("level", "overspeed", ts, entity.id),
        Attribute("speed_kmh", speed, ts, entity.id),
        location=entity.location,
    )]


def count_members(entity: ContextEntity, ctx: OperatorContext) -> list[EntityUpdate]:
    """Publish how many entities of this type the local broker currently holds."""
    n = len(ctx.query(Selector(entity.entity_type)))
    ts = _event_time(entity, entity.attributes)
    out_type = ctx.output_types[0] if ctx.output_types else "Count"
    return [EntityUpdate.of(f"{out_type}.{ctx.task_id}", out_type,
                            Attribute("count", n, ts, ctx.task_id))]


def _noop(entity: ContextEntity, ctx: OperatorContext) -> None:
    return None


REGISTRY: dict[str, Operator] = {}


def register_operator(op: Operator) -> Operator:
    if op.name in REGISTRY:
        raise ValueError(f"operator {op.name!r} already registered")
    REGISTRY[op.name] = op
    return op


register_operator(Operator("speed_estimator", estimate_speed, cost_us=2_000))
register_operator(Operator("speed_alarm", speed_alarm, cost_us=500))
register_operator(Operator("counter", count_members, cost_us=1_000))
register_operator(Operator("dummy", _noop, cost_us=0))
