"""Per-node context broker."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from fogrune.entity import (
    ContextEntity,
    EntityError,
    EntityUpdate,
    Selector,
    entity_from_update,
    matches,
    merge_update,
    project,
    project_update,
)
from fogrune.geo import geohash_encode
from fogrune import messages as m

log = logging.getLogger(__name__)

DEFAULT_PRECISION = 5
DEFAULT_TTL_S = 30.0
REFRESH_INTERVAL_S = 10.0


class NotFound(KeyError):
    pass


@dataclass(frozen=True)
class Sink:
    address: str
    channel: str

    def to_json(self) -> dict:
        return {"address": self.address, "channel": self.channel}

    @classmethod
    def from_json(cls, obj: dict) -> "Sink":
        return cls(obj["address"], obj["channel"])


@dataclass(frozen=True)
class Subscription:
    sub_id: str
    selector: Selector
    sink: Sink
    created_at: int


def _full_update(e: ContextEntity) -> EntityUpdate:
    return EntityUpdate(e.id, e.entity_type, dict(e.attributes), (), e.location)


class Broker:
    """Stores home entities and fans updates out to subscriptions.

    Only structural changes (new entity, attribute-name set, geohash cell)
    are pushed to Discovery; value updates stay local.
    """

    def __init__(self, node_id: str, env: m.Env, discovery: str = "cloud/discovery",
                 precision: int = DEFAULT_PRECISION, ttl_s: float = DEFAULT_TTL_S,
                 refresh_s: float = REFRESH_INTERVAL_S):
        self.node_id = node_id
        self.broker_id = m.address(node_id, "broker")
        self.env = env
        self.discovery = discovery
        self.precision = precision
        self.ttl_s = ttl_s
        self.refresh_s = refresh_s
        self.entities: dict[str, ContextEntity] = {}
        self.owners: dict[str, str] = {}
        self.subscriptions: dict[str, Subscription] = {}
        self._by_entity: dict[str, dict[str, None]] = {}
        self._by_type: dict[str, dict[str, None]] = {}
        self._signature: dict[str, tuple] = {}
        self._sub_seq = 0
        self._refreshing = False
        self.registrations_sent = 0
        self.notifications_sent = 0

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        if not self._refreshing:
            self._refreshing = True
            self.env.call_later(int(self.refresh_s * 1e6), self._refresh)

    def crash(self) -> None:
        """Lose all in-memory state, as a crashed process would."""
        self.entities.clear()
        self.owners.clear()
        self.subscriptions.clear()
        self._by_entity.clear()
        self._by_type.clear()
        self._signature.clear()

    def _refresh(self) -> None:
        if self.entities:
            self.env.send(m.Message(m.REFRESH, self.broker_id, self.discovery,
                                    {"entity_ids": sorted(self.entities)}))
        self.env.call_later(int(self.refresh_s * 1e6), self._refresh)

    # -- operations --------------------------------------------------------

    def _cell(self, e: ContextEntity) -> str:
        return "" if e.location is None else geohash_encode(e.location, self.precision)

    def publish(self, update: EntityUpdate, owner: str = "") -> ContextEntity:
        old = self.entities.get(update.id)
        if old is not None and old.entity_type != update.entity_type:
            raise EntityError(
                f"{update.id} is stored as {old.entity_type}, not {update.entity_type}")
        entity = entity_from_update(update) if old is None else merge_update(old, update)
        self.entities[update.id] = entity
        if owner or update.id not in self.owners:
            self.owners[update.id] = owner

        cell = self._cell(entity)
        sig = (entity.entity_type, frozenset(entity.attributes), cell)
        if self._signature.get(update.id) != sig:
            self._signature[update.id] = sig
            self._register(entity, cell)

        for sub in self._candidates(entity):
            if not matches(entity, sub.selector):
                continue
            note = project_update(update, sub.selector.attribute_set)
            if not note.changed and not note.removed and note.location is None:
                continue
            self._notify(sub, [note], snapshot=False)
        return entity

    def _register(self, e: ContextEntity, cell: str) -> None:
        reg = {
            "entity_id": e.id,
            "entity_type": e.entity_type,
            "attribute_names": sorted(e.attributes),
            "provider_broker": self.broker_id,
            "geohash": cell,
            "ttl_s": self.ttl_s,
        }
        self.registrations_sent += 1
        self.env.send(m.Message(m.REGISTER, self.broker_id, self.discovery,
                                {"registration": reg}))

    def _candidates(self, e: ContextEntity) -> list[Subscription]:
        ids = list(self._by_entity.get(e.id, ())) + list(self._by_type.get(e.entity_type, ()))
        return [self.subscriptions[s] for s in ids]

    def _notify(self, sub: Subscription, updates: list[EntityUpdate], snapshot: bool) -> None:
        self.notifications_sent += 1
        self.env.send(m.Message(m.NOTIFY, self.broker_id, sub.sink.address, {
            "sub_id": sub.sub_id,
            "channel": sub.sink.channel,
            "snapshot": snapshot,
            "updates": [u.to_json() for u in updates],
        }))

    def query(self, selector: Selector) -> list[ContextEntity]:
        if selector.entity_id is not None:
            e = self.entities.get(selector.entity_id)
            pool = [] if e is None else [e]
        else:
            pool = self.entities.values()
        return [project(e, selector.attribute_set) for e in pool if matches(e, selector)]

    def subscribe(self, selector: Selector, sink: Sink, sub_id: str | None = None) -> str:
        if sub_id is None:
            self._sub_seq += 1
            sub_id = f"{self.node_id}-sub{self._sub_seq}"
        if sub_id in self.subscriptions:
            self.unsubscribe(sub_id)
        sub = Subscription(sub_id, selector, sink, self.env.now())
        self.subscriptions[sub_id] = sub
        if selector.entity_id is not None:
            self._by_entity.setdefault(selector.entity_id, {})[sub_id] = None
        else:
            self._by_type.setdefault(selector.entity_type, {})[sub_id] = None
        current = self.query(selector)
        if current:
            self._notify(sub, [_full_update(e) for e in current], snapshot=True)
        return sub_id

    def unsubscribe(self, sub_id: str) -> None:
        sub = self.subscriptions.pop(sub_id, None)
        if sub is None:
            raise NotFound(sub_id)
        sel = sub.selector
        index = self._by_entity if sel.entity_id is not None else self._by_type
        key = sel.entity_id if sel.entity_id is not None else sel.entity_type
        bucket = index.get(key, {})
        bucket.pop(sub_id, None)
        if not bucket:
            index.pop(key, None)

    def delete(self, entity_id: str) -> None:
        """Remove a home entity and withdraw its availability."""
        if entity_id not in self.entities:
            raise NotFound(entity_id)
        self._drop(entity_id)
        self.env.send(m.Message(m.DEREGISTER, self.broker_id, self.discovery,
                                {"entity_id": entity_id}))

    def release(self, entity_id: str) -> None:
        """Drop an entity whose home moved to another broker (no deregistration)."""
        self._drop(entity_id)

    def _drop(self, entity_id: str) -> None:
        self.entities.pop(entity_id, None)
        self.owners.pop(entity_id, None)
        self._signature.pop(entity_id, None)

    # -- message interface ------------------------------------------------------

    def handle(self, msg: m.Message) -> None:
        body = msg.body
        kind = msg.kind
        if kind == m.PUBLISH:
            try:
                self.publish(EntityUpdate.from_json(body["update"]), body.get("owner", ""))
            except EntityError as exc:
                log.warning("%s rejected publish: %s", self.broker_id, exc)
        elif kind == m.SUBSCRIBE:
            self.subscribe(Selector.from_json(body["selector"]), Sink.from_json(body["sink"]),
                           body.get("sub_id"))
        elif kind == m.UNSUBSCRIBE:
            try:
                self.unsubscribe(body["sub_id"])
            except NotFound:
                log.debug("%s: unsubscribe of unknown %s", self.broker_id, body["sub_id"])
        elif kind == m.QUERY:
            found = self.query(Selector.from_json(body["selector"]))
            self.env.send(m.Message(m.QUERY_RESP, self.broker_id, msg.src, {
                "req_id": body.get("req_id"),
                "entities": [e.to_json() for e in found],
            }))
        elif kind == m.RELEASE:
            for eid in body["entity_ids"]:
                self.release(eid)
        else:
            log.warning("%s: unexpected message %s", self.broker_id, kind)

    def dump(self) -> dict:
        return {
            "broker_id": self.broker_id,
            "entities": {k: self.entities[k].to_json() for k in sorted(self.entities)},
            "subscriptions": sorted(self.subscriptions),
        }
