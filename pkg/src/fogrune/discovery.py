"""Centralized availability index with appear/disappear subscriptions."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterator

from fogrune.entity import Selector
from fogrune.geo import GeohashPrefix, Global, geohash_center, scope_contains
from fogrune import messages as m
from fogrune.broker import NotFound

log = logging.getLogger(__name__)

APPEAR = "appear"
DISAPPEAR = "disappear"
# still matching, but the provider broker or the geohash cell changed
UPDATE = "update"

SWEEP_INTERVAL_S = 5.0


@dataclass(frozen=True)
class AvailabilityRegistration:
    entity_id: str
    entity_type: str
    attribute_names: frozenset[str]
    provider_broker: str
    geohash: str
    registered_at: int = 0
    ttl_s: float = 30.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "attribute_names", frozenset(self.attribute_names))

    def same_content(self, other: "AvailabilityRegistration") -> bool:
        return (self.entity_type == other.entity_type
                and self.attribute_names == other.attribute_names
                and self.provider_broker == other.provider_broker
                and self.geohash == other.geohash)

    def to_json(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "entity_type": self.entity_type,
            "attribute_names": sorted(self.attribute_names),
            "provider_broker": self.provider_broker,
            "geohash": self.geohash,
            "registered_at": self.registered_at,
            "ttl_s": self.ttl_s,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AvailabilityRegistration":
        return cls(obj["entity_id"], obj["entity_type"], frozenset(obj["attribute_names"]),
                   obj["provider_broker"], obj.get("geohash", ""),
                   int(obj.get("registered_at", 0)), float(obj.get("ttl_s", 30.0)))


@dataclass(frozen=True)
class AvailabilitySubscription:
    sub_id: str
    selector: Selector
    sink: str


@dataclass(frozen=True)
class AvailabilityEvent:
    kind: str
    registration: AvailabilityRegistration
    sub_id: str

    def to_json(self) -> dict:
        return {"kind": self.kind, "registration": self.registration.to_json(),
                "sub_id": self.sub_id}

    @classmethod
    def from_json(cls, obj: dict) -> "AvailabilityEvent":
        return cls(obj["kind"], AvailabilityRegistration.from_json(obj["registration"]),
                   obj["sub_id"])


def availability_matches(reg: AvailabilityRegistration, sel: Selector) -> bool:
    """Match on type, id, attribute-name presence and the cell center."""
    if reg.entity_type != sel.entity_type:
        return False
    if sel.entity_id is not None and reg.entity_id != sel.entity_id:
        return False
    if not sel.referenced_attributes() <= reg.attribute_names:
        return False
    if isinstance(sel.scope, Global):
        return True
    if not reg.geohash:
        return False
    return scope_contains(sel.scope, geohash_center(reg.geohash))


class _Trie:
    __slots__ = ("children", "ids")

    def __init__(self) -> None:
        self.children: dict[str, _Trie] = {}
        self.ids: dict[str, None] = {}

    def insert(self, cell: str, eid: str) -> None:
        node = self
        for c in cell:
            node = node.children.setdefault(c, _Trie())
        node.ids[eid] = None

    def remove(self, cell: str, eid: str) -> None:
        path = [self]
        for c in cell:
            nxt = path[-1].children.get(c)
            if nxt is None:
                return
            path.append(nxt)
        path[-1].ids.pop(eid, None)
        for depth in range(len(cell), 0, -1):
            node = path[depth]
            if node.ids or node.children:
                break
            del path[depth - 1].children[cell[depth - 1]]

    def find(self, prefix: str) -> "_Trie | None":
        node = self
        for c in prefix:
            node = node.children.get(c)
            if node is None:
                return None
        return node

    def cells(self, prefix: str = "") -> Iterator[tuple[str, dict[str, None]]]:
        if self.ids:
            yield prefix, self.ids
        for c in sorted(self.children):
            yield from self.children[c].cells(prefix + c)

    def all_ids(self) -> Iterator[str]:
        for _, ids in self.cells():
            yield from ids


class Discovery:
    """Indexes availability (type, attribute names, location cell), never values."""

    def __init__(self, env: m.Env, node_id: str = "cloud", precision: int = 5):
        self.env = env
        self.node_id = node_id
        self.addr = m.address(node_id, "discovery")
        self.precision = precision
        self.regs: dict[str, AvailabilityRegistration] = {}
        self._index: dict[str, _Trie] = {}
        self.subs: dict[str, AvailabilitySubscription] = {}
        self._subs_by_type: dict[str, dict[str, None]] = {}
        self._matched: dict[str, dict[str, None]] = {}
        self._sub_seq = 0
        self.handled: Counter[str] = Counter()

    def start(self, sweep_s: float = SWEEP_INTERVAL_S) -> None:
        def sweep() -> None:
            self.sweep_expired(self.env.now())
            self.env.call_later(int(sweep_s * 1e6), sweep)
        self.env.call_later(int(sweep_s * 1e6), sweep)

    # -- index ---------------------------------------------------------------

    def _index_add(self, reg: AvailabilityRegistration) -> None:
        self._index.setdefault(reg.entity_type, _Trie()).insert(reg.geohash, reg.entity_id)

    def _index_remove(self, reg: AvailabilityRegistration) -> None:
        trie = self._index.get(reg.entity_type)
        if trie is not None:
            trie.remove(reg.geohash, reg.entity_id)

    def query_availability(self, selector: Selector) -> list[AvailabilityRegistration]:
        if selector.entity_id is not None:
            reg = self.regs.get(selector.entity_id)
            pool = [] if reg is None else [reg]
            return [r for r in pool if availability_matches(r, selector)]
        trie = self._index.get(selector.entity_type)
        if trie is None:
            return []
        scope = selector.scope
        if isinstance(scope, Global):
            ids = list(trie.all_ids())
        elif isinstance(scope, GeohashPrefix) and len(scope.prefix) <= self.precision:
            node = trie.find(scope.prefix)
            ids = [] if node is None else [i for cell, b in node.cells(scope.prefix)
                                           if cell for i in b]
        else:
            ids = [i for cell, b in trie.cells() if cell
                   and scope_contains(scope, geohash_center(cell)) for i in b]
        need = selector.referenced_attributes()
        out = [self.regs[i] for i in ids if need <= self.regs[i].attribute_names]
        out.sort(key=lambda r: r.entity_id)
        return out

    # -- registrations ---------------------------------------------------------

    def register(self, reg: AvailabilityRegistration) -> list[AvailabilityEvent]:
        reg = replace(reg, registered_at=self.env.now())
        old = self.regs.get(reg.entity_id)
        self.regs[reg.entity_id] = reg
        if old is not None:
            self._index_remove(old)
        self._index_add(reg)
        if old is not None and old.provider_broker != reg.provider_broker:
            self.env.send(m.Message(m.RELEASE, self.addr, old.provider_broker,
                                    {"entity_ids": [reg.entity_id]}))
        if old is not None and old.same_content(reg):
            return []
        types = [reg.entity_type]
        if old is not None and old.entity_type != reg.entity_type:
            types.append(old.entity_type)
        events = []
        for t in types:
            for sub_id in list(self._subs_by_type.get(t, ())):
                sub = self.subs[sub_id]
                matched = self._matched[sub_id]
                was = reg.entity_id in matched
                now = availability_matches(reg, sub.selector)
                if now and not was:
                    matched[reg.entity_id] = None
                    events.append(AvailabilityEvent(APPEAR, reg, sub_id))
                elif was and not now:
                    del matched[reg.entity_id]
                    events.append(AvailabilityEvent(DISAPPEAR, old or reg, sub_id))
                elif was and now:
                    events.append(AvailabilityEvent(UPDATE, reg, sub_id))
        self._emit(events)
        return events

    def refresh(self, entity_ids: list[str], provider: str | None = None) -> None:
        t = self.env.now()
        for eid in entity_ids:
            reg = self.regs.get(eid)
            if reg is not None and (provider is None or reg.provider_broker == provider):
                self.regs[eid] = replace(reg, registered_at=t)

    def deregister(self, entity_id: str) -> list[AvailabilityEvent]:
        reg = self.regs.pop(entity_id, None)
        if reg is None:
            raise NotFound(entity_id)
        self._index_remove(reg)
        events = []
        for sub_id in list(self._subs_by_type.get(reg.entity_type, ())):
            matched = self._matched[sub_id]
            if entity_id in matched:
                del matched[entity_id]
                events.append(AvailabilityEvent(DISAPPEAR, reg, sub_id))
        self._emit(events)
        return events

    def sweep_expired(self, now: int) -> list[AvailabilityEvent]:
        expired = [r.entity_id for r in self.regs.values()
                   if now - r.registered_at > r.ttl_s * 1e6]
        events: list[AvailabilityEvent] = []
        for eid in sorted(expired):
            events.extend(self.deregister(eid))
        return events

    # -- subscriptions ---------------------------------------------------------

    def subscribe_availability(self, selector: Selector, sink: str,
                               sub_id: str | None = None) -> str:
        if sub_id is None:
            self._sub_seq += 1
            sub_id = f"avail{self._sub_seq}"
        if sub_id in self.subs:
            self.unsubscribe_availability(sub_id)
        self.subs[sub_id] = AvailabilitySubscription(sub_id, selector, sink)
        self._subs_by_type.setdefault(selector.entity_type, {})[sub_id] = None
        snapshot = self.query_availability(selector)
        self._matched[sub_id] = {r.entity_id: None for r in snapshot}
        self._emit([AvailabilityEvent(APPEAR, r, sub_id) for r in snapshot])
        return sub_id

    def unsubscribe_availability(self, sub_id: str) -> None:
        sub = self.subs.pop(sub_id, None)
        if sub is None:
            raise NotFound(sub_id)
        self._matched.pop(sub_id, None)
        bucket = self._subs_by_type.get(sub.selector.entity_type, {})
        bucket.pop(sub_id, None)

    def _emit(self, events: list[AvailabilityEvent]) -> None:
        for ev in events:
            sub = self.subs[ev.sub_id]
            self.env.send(m.Message(m.AVAIL_EVENT, self.addr, sub.sink, ev.to_json()))

    # -- message interface ------------------------------------------------------

    def handle(self, msg: m.Message) -> None:
        self.handled[msg.kind] += 1
        body = msg.body
        if msg.kind == m.REGISTER:
            self.register(AvailabilityRegistration.from_json(body["registration"]))
        elif msg.kind == m.DEREGISTER:
            try:
                self.deregister(body["entity_id"])
            except NotFound:
                log.debug("deregister of unknown %s", body["entity_id"])
        elif msg.kind == m.REFRESH:
            self.refresh(body["entity_ids"], msg.src)
        elif msg.kind == m.SUB_AVAIL:
            self.subscribe_availability(Selector.from_json(body["selector"]),
                                        body.get("sink", msg.src), body.get("sub_id"))
        elif msg.kind == m.UNSUB_AVAIL:
            try:
                self.unsubscribe_availability(body["sub_id"])
            except NotFound:
                log.debug("unsubscribe of unknown %s", body["sub_id"])
        elif msg.kind == m.QUERY_AVAIL:
            found = self.query_availability(Selector.from_json(body["selector"]))
            self.env.send(m.Message(m.QUERY_AVAIL_RESP, self.addr, msg.src, {
                "req_id": body.get("req_id"),
                "registrations": [r.to_json() for r in found],
            }))
        else:
            log.warning("discovery: unexpected message %s", msg.kind)
