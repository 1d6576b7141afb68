"""Orchestrator: turns availability events into orchestration actions.

The decision logic is reconcile-based.  For every (function, group key)
the desired set of input bindings is derived from the availability seen so
far; an event only re-derives the keys it touches and emits the actions
that move the running task towards that set.

Placement is longest-common-geohash-prefix locality over edge workers with
free capacity, with the cloud as overflow.  A placement's locality score is
the common prefix length for an edge worker and -1 for the cloud.
"""

from __future__ import annotations

import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable

from fogrune import actions as A
from fogrune import messages as m
from fogrune.discovery import APPEAR, DISAPPEAR, UPDATE, AvailabilityEvent, AvailabilityRegistration
from fogrune.entity import Selector, value_from_json
from fogrune.function import (
    FogFunction,
    SpecError,
    UnroutableError,
    availability_selector,
    effective_scope,
    function_from_json,
    group_key,
    validate,
)
from fogrune.geo import common_prefix_len
from fogrune.operators import REGISTRY, Operator

log = logging.getLogger(__name__)

_MISSING = object()


class PlacementError(RuntimeError):
    pass


@dataclass(frozen=True)
class Policy:
    """How tasks are placed; the three programming models differ only here."""

    placement: str = "locality"  # "locality" | "cloud"
    migration: bool = True
    whole_entity: bool = False  # subscribe to full entities instead of projections
    rebalance: bool = True

    @classmethod
    def for_mode(cls, mode: str) -> "Policy":
        if mode == "fog":
            return cls()
        if mode == "edge":
            return cls(migration=False, whole_entity=True, rebalance=False)
        if mode == "cloud":
            return cls(placement="cloud", migration=False, whole_entity=True, rebalance=False)
        raise ValueError(f"unknown mode {mode!r}")


@dataclass
class WorkerRecord:
    worker_id: str
    node_id: str
    geohash: str
    is_cloud: bool
    capacity: int
    load: int = 0
    last_heartbeat: int = 0
    reserved: int = 0
    alive: bool = True

    def to_json(self) -> dict:
        return {"worker_id": self.worker_id, "node_id": self.node_id,
                "geohash": self.geohash, "is_cloud": self.is_cloud,
                "capacity": self.capacity, "load": self.load,
                "reserved": self.reserved, "last_heartbeat": self.last_heartbeat,
                "alive": self.alive}


@dataclass
class TaskInstance:
    task_id: str
    function: str
    key: str
    worker_id: str
    inputs: dict[tuple[int, str], A.InputBinding]
    state: str = A.LAUNCHING
    producer_geohash: str = ""
    priority: int = 50
    weight: int = 1

    @property
    def input_subscriptions(self) -> list[tuple[Selector, str]]:
        return [(b.selector, b.sub_id(self.task_id)) for _, b in sorted(self.inputs.items())]

    def to_json(self) -> dict:
        return {"task_id": self.task_id, "function": self.function, "key": self.key,
                "worker_id": self.worker_id, "state": self.state,
                "producer_geohash": self.producer_geohash, "priority": self.priority,
                "inputs": [{"input_index": b.input_index, "entity_id": b.entity_id,
                            "broker": b.broker, "sub_id": b.sub_id(self.task_id)}
                           for _, b in sorted(self.inputs.items())]}


@dataclass(frozen=True)
class NodeJoined:
    worker_id: str


@dataclass(frozen=True)
class WorkerOverloaded:
    worker_id: str


@dataclass(frozen=True)
class ProducerMoved:
    entity_id: str
    new_geohash: str


def migration_kind(src: WorkerRecord, dst: WorkerRecord) -> str:
    side = lambda w: "cloud" if w.is_cloud else "edge"  # noqa: E731
    return f"{side(src)}->{side(dst)}"


class Orchestrator:
    def __init__(self, env: m.Env, *, node_id: str = "cloud",
                 discovery: str = "cloud/discovery", policy: Policy | None = None,
                 heartbeat_s: float = 5.0, dead_after: int = 3,
                 registry: dict[str, Operator] | None = None,
                 resolver: Callable[[AvailabilityRegistration, str], Any] | None = None):
        self.env = env
        self.node_id = node_id
        self.addr = m.address(node_id, "orchestrator")
        self.discovery = discovery
        self.policy = policy or Policy()
        self.heartbeat_s = heartbeat_s
        self.dead_after = dead_after
        self.registry = REGISTRY if registry is None else registry
        self.resolver = resolver

        self.functions: dict[str, FogFunction] = {}
        self._sub_index: dict[str, tuple[str, int]] = {}
        self.avail: dict[str, list[dict[str, AvailabilityRegistration]]] = {}
        self._keys: dict[tuple[str, int, str], str] = {}
        self._members: dict[str, list[dict[str, dict[str, None]]]] = {}
        self.tasks: dict[str, dict[str, TaskInstance]] = {}
        self.by_id: dict[str, TaskInstance] = {}
        self.workers: dict[str, WorkerRecord] = {}
        self.deferred: dict[tuple[str, str], None] = {}
        self._generation: dict[tuple[str, str], int] = defaultdict(int)
        self._pending: dict[int, AvailabilityEvent] = {}
        self._req_seq = 0
        self._mig_seq = 0
        self.decision_wall_ms: list[float] = []
        self.migrations: list[dict] = []

    def start(self) -> None:
        def loop() -> None:
            self.tick()
            self.env.call_later(int(self.heartbeat_s * 1e6), loop)
        self.env.call_later(int(self.heartbeat_s * 1e6), loop)

    # -- registration -------------------------------------------------------------

    def register_function(self, f: FogFunction) -> None:
        diags = validate(f, self.registry)
        if f.name in self.functions:
            diags.append(f"function {f.name!r} already registered")
        if diags:
            raise SpecError(diags)
        self.functions[f.name] = f
        self.avail[f.name] = [{} for _ in f.inputs]
        self._members[f.name] = [{} for _ in f.inputs]
        self.tasks[f.name] = {}
        for i in range(len(f.inputs)):
            sub_id = f"{f.name}#{i}"
            self._sub_index[sub_id] = (f.name, i)
            self.env.send(m.Message(m.SUB_AVAIL, self.addr, self.discovery, {
                "selector": availability_selector(f, i).to_json(),
                "sink": self.addr,
                "sub_id": sub_id,
            }))

    # -- availability events ----------------------------------------------------------

    def on_event(self, ev: AvailabilityEvent, attr_value_hint: Any = _MISSING) -> list[A.Action]:
        t0 = time.perf_counter()
        try:
            actions = self._on_event(ev, attr_value_hint)
        finally:
            self.decision_wall_ms.append((time.perf_counter() - t0) * 1000.0)
        return self._dispatch(actions)

    def _on_event(self, ev: AvailabilityEvent, hint: Any) -> list[A.Action]:
        loc = self._sub_index.get(ev.sub_id)
        if loc is None:
            log.warning("ignoring stale availability event for %s", ev.sub_id)
            return []
        fname, idx = loc
        f = self.functions[fname]
        reg = ev.registration
        eid = reg.entity_id
        gb = f.inputs[idx].group_by
        pool = self.avail[fname][idx]
        prev = pool.get(eid)
        old_key = self._keys.get((fname, idx, eid))

        if ev.kind == DISAPPEAR:
            if prev is None:
                return []
            del pool[eid]
            new_key = None
        else:
            if gb.kind == "attribute_value" and (ev.kind == APPEAR or old_key is None):
                if hint is _MISSING:
                    hint = self._lookup(ev)
                    if hint is _MISSING:
                        return []
            try:
                new_key = old_key if (ev.kind == UPDATE and old_key is not None) \
                    else group_key(f, idx, reg, hint).key
            except UnroutableError as exc:
                log.warning("unroutable availability for %s: %s", fname, exc)
                return []
            if ev.kind == APPEAR and prev is not None and prev.same_content(reg) \
                    and old_key == new_key:
                return []
            pool[eid] = reg

        members = self._members[fname][idx]
        if old_key is not None and old_key != new_key:
            bucket = members.get(old_key, {})
            bucket.pop(eid, None)
            if not bucket:
                members.pop(old_key, None)
            del self._keys[(fname, idx, eid)]
        if new_key is not None:
            members.setdefault(new_key, {})[eid] = None
            self._keys[(fname, idx, eid)] = new_key

        if idx > 0 and gb.kind == "entity_type":
            affected = set(self.tasks[fname]) | set(self._members[fname][0])
        else:
            affected = {k for k in (old_key, new_key) if k is not None}
        moved = (ev.kind == UPDATE and prev is not None
                 and (prev.geohash != reg.geohash or prev.provider_broker != reg.provider_broker))
        actions: list[A.Action] = []
        for key in sorted(affected):
            actions += self._reconcile(fname, key, moved=moved)
        return actions

    def _lookup(self, ev: AvailabilityEvent) -> Any:
        f = self.functions[self._sub_index[ev.sub_id][0]]
        attr = f.inputs[self._sub_index[ev.sub_id][1]].group_by.attribute
        if self.resolver is not None:
            return self.resolver(ev.registration, attr)
        self._req_seq += 1
        self._pending[self._req_seq] = ev
        sel = Selector(ev.registration.entity_type, (attr,), entity_id=ev.registration.entity_id)
        self.env.send(m.Message(m.QUERY, self.addr, ev.registration.provider_broker,
                                {"selector": sel.to_json(), "req_id": self._req_seq}))
        return _MISSING

    def on_value(self, req_id: int, entities: list[dict]) -> list[A.Action]:
        ev = self._pending.pop(req_id, None)
        if ev is None:
            return []
        attr = self.functions[self._sub_index[ev.sub_id][0]].inputs[
            self._sub_index[ev.sub_id][1]].group_by.attribute
        value = None
        for e in entities:
            a = e["attributes"].get(attr)
            if a is not None:
                value = value_from_json(a["value"])
        return self.on_event(ev, value)

    # -- reconciliation ----------------------------------------------------------------

    def _binding(self, f: FogFunction, idx: int, reg: AvailabilityRegistration) -> A.InputBinding:
        inp = f.inputs[idx]
        attrs = () if self.policy.whole_entity else inp.attribute_set
        sel = Selector(inp.selected_type, attrs, inp.constraints, effective_scope(f, inp),
                       entity_id=reg.entity_id)
        return A.InputBinding(idx, reg.entity_id, reg.provider_broker, sel)

    def _desired(self, fname: str, key: str) -> dict[tuple[int, str], A.InputBinding]:
        f = self.functions[fname]
        primaries = self._members[fname][0].get(key)
        if not primaries:
            return {}
        out = {}
        for i, inp in enumerate(f.inputs):
            pool = self.avail[fname][i]
            if i == 0:
                eids = primaries
            elif inp.group_by.kind == "entity_type":
                eids = pool
            else:
                eids = self._members[fname][i].get(key, {})
            for eid in sorted(eids):
                out[(i, eid)] = self._binding(f, i, pool[eid])
        return out

    def _producer_geohash(self, fname: str, key: str) -> str:
        primaries = self._members[fname][0].get(key)
        if not primaries:
            return ""
        return self.avail[fname][0][min(primaries)].geohash

    def _reconcile(self, fname: str, key: str, moved: bool = False) -> list[A.Action]:
        desired = self._desired(fname, key)
        cur = self.tasks[fname].get(key)
        if not desired:
            self.deferred.pop((fname, key), None)
            return self._remove(cur) if cur is not None else []
        if cur is None:
            return self._place_new(fname, key, desired)
        cur.producer_geohash = self._producer_geohash(fname, key)
        if moved and self.policy.migration:
            target = self._better_worker(cur)
            if target is not None:
                return self._migrate(cur, target, desired, "producer_moved")
        return self._diff_inputs(cur, desired)

    def _diff_inputs(self, cur: TaskInstance,
                     desired: dict[tuple[int, str], A.InputBinding]) -> list[A.Action]:
        removes = [A.Action(A.REMOVE_INPUT, cur.worker_id, cur.task_id, binding=b)
                   for ident, b in sorted(cur.inputs.items()) if desired.get(ident) != b]
        adds = [A.Action(A.ADD_INPUT, cur.worker_id, cur.task_id, binding=b)
                for ident, b in sorted(desired.items()) if cur.inputs.get(ident) != b]
        cur.inputs = dict(desired)
        return removes + adds

    def _weight(self, fname: str) -> int:
        op = self.registry.get(self.functions[fname].operator)
        return op.weight if op else 1

    def _new_task(self, fname: str, key: str, worker_id: str,
                  desired: dict[tuple[int, str], A.InputBinding]) -> TaskInstance:
        f = self.functions[fname]
        self._generation[(fname, key)] += 1
        task_id = f"{fname}:{key}#{self._generation[(fname, key)]}"
        ti = TaskInstance(task_id, fname, key, worker_id, dict(desired),
                          producer_geohash=self._producer_geohash(fname, key),
                          priority=f.priority, weight=self._weight(fname))
        self.tasks[fname][key] = ti
        self.by_id[task_id] = ti
        self.workers[worker_id].load += ti.weight
        self.env.trace("task_decided", task_id=task_id, worker=worker_id)
        return ti

    def _spec(self, ti: TaskInstance) -> A.TaskSpec:
        f = self.functions[ti.function]
        return A.TaskSpec(ti.task_id, ti.function, ti.key, f.operator,
                          tuple(b for _, b in sorted(ti.inputs.items())),
                          f.output_types, f.priority)

    def _place_new(self, fname: str, key: str,
                   desired: dict[tuple[int, str], A.InputBinding]) -> list[A.Action]:
        f = self.functions[fname]
        try:
            wid = self.select_worker(self._producer_geohash(fname, key), f.slo,
                                     weight=self._weight(fname))
        except PlacementError:
            self.deferred[(fname, key)] = None
            return []
        self.deferred.pop((fname, key), None)
        ti = self._new_task(fname, key, wid, desired)
        return [A.Action(A.ADD_TASK, wid, ti.task_id, spec=self._spec(ti))]

    def _remove(self, ti: TaskInstance, migration_id: str | None = None) -> list[A.Action]:
        ti.state = A.TERMINATING
        self.env.trace("task_removing", task_id=ti.task_id, migration_id=migration_id)
        if self.tasks[ti.function].get(ti.key) is ti:
            del self.tasks[ti.function][ti.key]
        w = self.workers.get(ti.worker_id)
        if w is not None:
            w.load -= ti.weight
        if w is None or not w.alive:
            self.by_id.pop(ti.task_id, None)
            return []
        return [A.Action(A.REMOVE_TASK, ti.worker_id, ti.task_id, migration_id=migration_id)]

    def _migrate(self, cur: TaskInstance, target: str,
                 desired: dict[tuple[int, str], A.InputBinding], reason: str) -> list[A.Action]:
        self._mig_seq += 1
        mig = f"mig{self._mig_seq}"
        src = self.workers[cur.worker_id]
        remove = self._remove(cur, mig)
        new = self._new_task(cur.function, cur.key, target, desired)
        kind = migration_kind(src, self.workers[target])
        self.migrations.append({"migration_id": mig, "task": new.task_id, "from": src.worker_id,
                                "to": target, "kind": kind, "reason": reason,
                                "at": self.env.now()})
        self.env.trace("migration_planned", migration_id=mig, kind=kind, reason=reason,
                       old_task=cur.task_id, new_task=new.task_id)
        add = A.Action(A.ADD_TASK, target, new.task_id, spec=self._spec(new), migration_id=mig)
        return [add] + remove

    # -- placement ---------------------------------------------------------------------

    def _score(self, w: WorkerRecord, geohash: str) -> int:
        return -1 if w.is_cloud else common_prefix_len(w.geohash, geohash)

    def select_worker(self, producer_geohash: str, slo: str | None = None, *,
                      weight: int = 1, exclude: tuple[str, ...] = (),
                      loads: dict[str, int] | None = None) -> str:
        """Pick a worker for a new task.

        Every SLO currently maps to the same locality rule.
        """
        load = (lambda w: loads[w.worker_id]) if loads is not None else (lambda w: w.load)
        alive = [w for w in self.workers.values() if w.alive and w.worker_id not in exclude]
        if not alive:
            raise PlacementError("no alive workers")
        fits = [w for w in alive if load(w) + weight <= w.capacity]
        if self.policy.placement == "locality":
            edges = [w for w in fits if not w.is_cloud]
            if edges:
                best = min(edges, key=lambda w: (-self._score(w, producer_geohash),
                                                 load(w), w.worker_id))
                return best.worker_id
        clouds = [w for w in fits if w.is_cloud]
        if clouds:
            return min(clouds, key=lambda w: (load(w), w.worker_id)).worker_id
        raise PlacementError("no worker with free capacity")

    def _better_worker(self, ti: TaskInstance) -> str | None:
        cur = self.workers.get(ti.worker_id)
        cur_score = -2 if cur is None or not cur.alive else self._score(cur, ti.producer_geohash)
        candidates = [w for w in self.workers.values()
                      if w.alive and not w.is_cloud and w.worker_id != ti.worker_id
                      and w.load + ti.weight <= w.capacity]
        if not candidates:
            return None
        best = min(candidates, key=lambda w: (-self._score(w, ti.producer_geohash),
                                              w.load, w.worker_id))
        return best.worker_id if self._score(best, ti.producer_geohash) > cur_score else None

    def plan_migration(self, trigger) -> list[A.Action]:
        if not self.policy.migration:
            return []
        actions: list[A.Action] = []
        if isinstance(trigger, NodeJoined):
            new = self.workers[trigger.worker_id]
            hosted = [t for f in sorted(self.tasks) for _, t in sorted(self.tasks[f].items())
                      if self.workers[t.worker_id].is_cloud]
            hosted.sort(key=lambda t: (-t.priority, t.function, t.key))
            for ti in hosted:
                if new.load + ti.weight > new.capacity:
                    break
                if common_prefix_len(new.geohash, ti.producer_geohash) >= 1:
                    actions += self._migrate(ti, new.worker_id, dict(ti.inputs), "node_joined")
        elif isinstance(trigger, WorkerOverloaded):
            w = self.workers[trigger.worker_id]
            victims = [t for f in self.tasks.values() for t in f.values()
                       if t.worker_id == w.worker_id]
            # the tail of the canonical order, so a later rebalance keeps the eviction
            victims.sort(key=lambda t: (-t.priority, t.function, t.key), reverse=True)
            for ti in victims:
                if w.load <= w.capacity:
                    break
                clouds = [c for c in self.workers.values()
                          if c.alive and c.is_cloud and c.load + ti.weight <= c.capacity]
                if not clouds:
                    log.warning("no cloud capacity left to relieve %s", w.worker_id)
                    break
                target = min(clouds, key=lambda c: (c.load, c.worker_id)).worker_id
                actions += self._migrate(ti, target, dict(ti.inputs), "overload")
        elif isinstance(trigger, ProducerMoved):
            for fname in sorted(self.tasks):
                for key, ti in sorted(self.tasks[fname].items()):
                    primaries = self._members[fname][0].get(key, {})
                    if not primaries or min(primaries) != trigger.entity_id:
                        continue
                    ti.producer_geohash = trigger.new_geohash
                    target = self._better_worker(ti)
                    if target is not None:
                        actions += self._migrate(ti, target, dict(ti.inputs), "producer_moved")
        else:
            raise TypeError(f"unknown migration trigger {trigger!r}")
        return actions

    def rebalance(self) -> list[A.Action]:
        """Move tasks to the canonical placement for the current state.

        The canonical placement assigns tasks greedily in (priority desc,
        function, key) order with the normal worker-selection rule, so the
        quiescent layout does not depend on the order events arrived in.
        """
        live = [t for f in self.tasks.values() for t in f.values()]
        live.sort(key=lambda t: (-t.priority, t.function, t.key))
        loads = {w.worker_id: w.reserved for w in self.workers.values()}
        target: dict[str, str] = {}
        for ti in live:
            try:
                wid = self.select_worker(ti.producer_geohash, weight=ti.weight, loads=loads)
            except PlacementError:
                wid = ti.worker_id
            loads[wid] = loads.get(wid, 0) + ti.weight
            target[ti.task_id] = wid
        actions: list[A.Action] = []
        for ti in live:
            if target[ti.task_id] != ti.worker_id:
                actions += self._migrate(ti, target[ti.task_id], dict(ti.inputs), "rebalance")
        return actions

    # -- system context ------------------------------------------------------------------

    def on_worker_heartbeat(self, rec: dict | WorkerRecord) -> list[A.Action]:
        if isinstance(rec, WorkerRecord):
            rec = rec.to_json()
        wid = rec["worker_id"]
        w = self.workers.get(wid)
        joined = w is None or not w.alive
        if w is None:
            w = WorkerRecord(wid, rec.get("node_id", wid), rec.get("geohash", ""),
                             bool(rec.get("is_cloud", False)), int(rec["capacity"]))
            self.workers[wid] = w
        assigned = w.load - w.reserved if not joined else 0
        w.geohash = rec.get("geohash", w.geohash)
        w.is_cloud = bool(rec.get("is_cloud", w.is_cloud))
        w.capacity = int(rec["capacity"])
        w.reserved = int(rec.get("reserved", 0))
        w.load = assigned + w.reserved
        w.last_heartbeat = self.env.now()
        w.alive = True
        actions: list[A.Action] = []
        if joined and not w.is_cloud:
            actions += self.plan_migration(NodeJoined(wid))
        actions += self._retry_deferred()
        if w.load > w.capacity:
            actions += self.plan_migration(WorkerOverloaded(wid))
        return self._dispatch(actions)

    def _retry_deferred(self) -> list[A.Action]:
        order = sorted(self.deferred, key=lambda fk: (-self.functions[fk[0]].priority, fk))
        actions: list[A.Action] = []
        for fname, key in order:
            if self.tasks[fname].get(key) is None:
                actions += self._reconcile(fname, key)
            else:
                self.deferred.pop((fname, key), None)
        return actions

    def tick(self) -> list[A.Action]:
        now = self.env.now()
        limit = self.dead_after * self.heartbeat_s * 1e6
        actions: list[A.Action] = []
        for w in sorted(self.workers.values(), key=lambda w: w.worker_id):
            if w.alive and now - w.last_heartbeat > limit:
                actions += self._worker_died(w)
        actions += self._retry_deferred()
        if self.policy.rebalance and self.policy.migration:
            actions += self.rebalance()
        return self._dispatch(actions)

    def _worker_died(self, w: WorkerRecord) -> list[A.Action]:
        log.info("worker %s missed heartbeats, replanning its tasks", w.worker_id)
        w.alive = False
        w.load = 0
        orphans = [t for f in self.tasks.values() for t in f.values() if t.worker_id == w.worker_id]
        for t in list(self.by_id.values()):
            if t.worker_id == w.worker_id:
                del self.by_id[t.task_id]
        actions: list[A.Action] = []
        for ti in sorted(orphans, key=lambda t: (-t.priority, t.function, t.key)):
            del self.tasks[ti.function][ti.key]
            actions += self._reconcile(ti.function, ti.key)
        return actions

    def on_report(self, body: dict) -> list[A.Action]:
        ti = self.by_id.get(body["task_id"])
        status = body["status"]
        if ti is None:
            return []
        actions: list[A.Action] = []
        if status == "running" and ti.state == A.LAUNCHING:
            ti.state = A.RUNNING
        elif status == "terminated":
            self.by_id.pop(ti.task_id, None)
        elif status == "rejected":
            self.by_id.pop(ti.task_id, None)
            if self.tasks[ti.function].get(ti.key) is ti:
                del self.tasks[ti.function][ti.key]
                w = self.workers.get(ti.worker_id)
                if w is not None:
                    # evidently full; trust that until the next heartbeat
                    w.load = max(w.load - ti.weight, w.capacity)
                self.deferred[(ti.function, ti.key)] = None
                actions = self._retry_deferred()
        return self._dispatch(actions)

    # -- plumbing --------------------------------------------------------------------------

    _ORDER = {A.REMOVE_TASK: 0, A.REMOVE_INPUT: 1, A.ADD_TASK: 2, A.ADD_INPUT: 3}

    def _dispatch(self, actions: list[A.Action]) -> list[A.Action]:
        """Send a batch; a task both created and removed within it is never sent."""
        added = {a.task_id for a in actions if a.kind == A.ADD_TASK}
        void = {a.task_id for a in actions if a.kind == A.REMOVE_TASK and a.task_id in added}
        if void:
            migs = {a.migration_id for a in actions
                    if a.kind == A.REMOVE_TASK and a.task_id in void and a.migration_id}
            self.migrations = [x for x in self.migrations if x["migration_id"] not in migs]
            for tid in void:
                self.by_id.pop(tid, None)
            actions = [a for a in actions if a.task_id not in void]
        for a in sorted(actions, key=lambda a: self._ORDER[a.kind]):
            w = self.workers.get(a.worker_id)
            node = w.node_id if w is not None else a.worker_id
            self.env.send(m.Message(m.ACTION, self.addr, m.address(node, "worker"), a.to_json()))
        return actions

    def handle(self, msg: m.Message) -> None:
        body = msg.body
        if msg.kind == m.AVAIL_EVENT:
            self.on_event(AvailabilityEvent.from_json(body))
        elif msg.kind == m.HEARTBEAT:
            self.on_worker_heartbeat(body)
        elif msg.kind == m.TASK_REPORT:
            self.on_report(body)
        elif msg.kind == m.QUERY_RESP:
            self.on_value(body["req_id"], body["entities"])
        elif msg.kind == m.REG_FUNC:
            try:
                self.register_function(function_from_json(body["function"]))
            except SpecError as exc:
                log.error("function registration rejected: %s", exc)
        elif msg.kind == m.DUMP_STATE:
            self.env.send(m.Message(m.STATE, self.addr, msg.src, self.dump_state()))
        else:
            log.warning("orchestrator: unexpected message %s", msg.kind)

    def placement(self) -> dict[tuple[str, str], tuple[str, tuple]]:
        """(function, key) -> (worker, input bindings); ids and timing excluded."""
        return {
            (fname, key): (ti.worker_id, tuple((b.input_index, b.entity_id, b.broker)
                                               for _, b in sorted(ti.inputs.items())))
            for fname in sorted(self.tasks) for key, ti in sorted(self.tasks[fname].items())
        }

    def dump_state(self) -> dict:
        return {
            "functions": sorted(self.functions),
            "tasks": {fname: {key: ti.to_json() for key, ti in sorted(self.tasks[fname].items())}
                      for fname in sorted(self.tasks)},
            "terminating": sorted(t for t, ti in self.by_id.items()
                                  if ti.state == A.TERMINATING),
            "workers": {wid: w.to_json() for wid, w in sorted(self.workers.items())},
            "deferred": [list(k) for k in self.deferred],
        }
