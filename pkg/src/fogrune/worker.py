"""Worker: runs tasks for orchestration actions on one fog node.

Containers are replaced by in-process sandboxes.  Launch and termination
costs come from a :class:`LaunchTiming`.  A worker has a fixed number of
launcher lanes (one by default), so actions on one worker queue behind each
other like on a container engine, while different workers proceed in
parallel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from fogrune import actions as A
from fogrune import messages as m
from fogrune.broker import Broker, Sink
from fogrune.entity import (
    Attribute,
    ContextEntity,
    EntityUpdate,
    Selector,
    entity_from_update,
    merge_update,
)
from fogrune.geo import geohash_center
from fogrune.operators import REGISTRY, Operator

log = logging.getLogger(__name__)

HEARTBEAT_INTERVAL_S = 5.0


@dataclass(frozen=True)
class LaunchTiming:
    fetch_ms: float = 5000.0
    launch_ms: float = 2000.0
    terminate_ms: float = 300.0
    # "task-not-launched": report running without starting anything
    skip_launch: bool = False
    lanes: int = 1

    def __post_init__(self) -> None:
        if min(self.fetch_ms, self.launch_ms, self.terminate_ms) < 0:
            raise ValueError("timing delays must be >= 0")
        if self.lanes < 1:
            raise ValueError("lanes must be >= 1")

    @classmethod
    def from_json(cls, obj: dict | None) -> "LaunchTiming":
        obj = obj or {}
        return cls(float(obj.get("fetch_ms", 5000.0)), float(obj.get("launch_ms", 2000.0)),
                   float(obj.get("terminate_ms", 300.0)), bool(obj.get("skip_launch", False)),
                   int(obj.get("lanes", 1)))

    def to_json(self) -> dict:
        return {"fetch_ms": self.fetch_ms, "launch_ms": self.launch_ms,
                "terminate_ms": self.terminate_ms, "skip_launch": self.skip_launch,
                "lanes": self.lanes}


@dataclass
class TaskSandbox:
    spec: A.TaskSpec
    operator: Operator
    state: str = A.LAUNCHING
    migration_id: str | None = None
    inputs: dict[tuple[int, str], A.InputBinding] = field(default_factory=dict)
    subscribed: dict[str, str] = field(default_factory=dict)  # sub_id -> broker address
    view: dict[str, ContextEntity] = field(default_factory=dict)
    busy_until: int = 0
    invocations: int = 0

    @property
    def task_id(self) -> str:
        return self.spec.task_id


class _TaskContext:
    """Callbacks handed to the operator; valid while the task runs."""

    def __init__(self, worker: "Worker", box: TaskSandbox):
        self._worker = worker
        self._box = box
        self.task_id = box.task_id
        self.output_types = box.spec.output_types
        self.published: list[EntityUpdate] = []

    def publish(self, update: EntityUpdate) -> None:
        self.published.append(update)

    def query(self, selector: Selector) -> list[ContextEntity]:
        return self._worker.broker.query(selector) if self._worker.broker else []

    def subscribe(self, selector: Selector) -> str:
        n = sum(1 for s in self._box.subscribed if s.startswith(f"{self.task_id}|x"))
        sub_id = f"{self.task_id}|x{n}"
        self._worker._subscribe(self._box, sub_id, self._worker.broker_addr, selector)
        return sub_id


class Worker:
    def __init__(self, node_id: str, env: m.Env, *, capacity: int = 8,
                 geohash: str = "", is_cloud: bool = False,
                 timing: LaunchTiming | None = None, broker: Broker | None = None,
                 orchestrator: str = "cloud/orchestrator",
                 heartbeat_s: float = HEARTBEAT_INTERVAL_S,
                 registry: dict[str, Operator] | None = None):
        if capacity <= 0:
            raise ValueError("capacity must be > 0")
        self.node_id = node_id
        self.worker_id = node_id
        self.addr = m.address(node_id, "worker")
        self.broker_addr = m.address(node_id, "broker")
        self.env = env
        self.capacity = capacity
        self.geohash = geohash
        self.is_cloud = is_cloud
        self.timing = timing or LaunchTiming()
        self.broker = broker
        self.orchestrator = orchestrator
        self.heartbeat_s = heartbeat_s
        self.registry = REGISTRY if registry is None else registry
        self.tasks: dict[str, TaskSandbox] = {}
        # operator -> virtual time its image is (or will be) available locally
        self.cache: dict[str, int] = {}
        self.reserved = 0
        self.alive = True
        self._lanes = [0] * self.timing.lanes
        self.dropped = 0
        self.rejected = 0

    # -- load ------------------------------------------------------------------

    @property
    def load(self) -> int:
        live = (b.operator.weight for b in self.tasks.values() if b.state != A.TERMINATING)
        return sum(live) + self.reserved

    def start(self) -> None:
        self.alive = True
        self.heartbeat()

    def fail(self) -> None:
        """Crash: running tasks and launch queues are lost, the image cache survives."""
        self.alive = False
        self.tasks.clear()
        self.reserved = 0
        self._lanes = [0] * self.timing.lanes

    # -- actions ---------------------------------------------------------------

    def _free_lane(self) -> tuple[int, int]:
        lane = min(range(len(self._lanes)), key=self._lanes.__getitem__)
        return lane, max(self.env.now(), self._lanes[lane])

    def _engine_slot(self, delay_us: int) -> int:
        """Queue work on the earliest free lane; returns the delay until it is done."""
        lane, start = self._free_lane()
        self._lanes[lane] = start + delay_us
        return self._lanes[lane] - self.env.now()

    def _report(self, box_or_id, status: str, **extra) -> None:
        if isinstance(box_or_id, TaskSandbox):
            task_id = box_or_id.task_id
            extra.setdefault("inputs", sorted(box_or_id.subscribed))
            extra.setdefault("migration_id", box_or_id.migration_id)
        else:
            task_id = box_or_id
        body = {"task_id": task_id, "worker_id": self.worker_id, "status": status}
        body.update(extra)
        self.env.send(m.Message(m.TASK_REPORT, self.addr, self.orchestrator, body))

    def execute(self, action: A.Action) -> None:
        if not self.alive:
            return
        if action.kind == A.ADD_TASK:
            self._add_task(action)
            return
        box = self.tasks.get(action.task_id)
        if box is None:
            log.debug("%s: %s for unknown task %s", self.worker_id, action.kind, action.task_id)
            self._report(action.task_id, "error", reason="unknown task",
                         migration_id=action.migration_id)
            return
        if action.kind == A.REMOVE_TASK:
            self._remove_task(box, action.migration_id)
        elif action.kind == A.ADD_INPUT:
            b = action.binding
            box.inputs[b.ident] = b
            if box.state == A.RUNNING:
                self._subscribe(box, b.sub_id(box.task_id), b.broker, b.selector)
            self._report(box, "inputs")
        elif action.kind == A.REMOVE_INPUT:
            b = action.binding
            box.inputs.pop(b.ident, None)
            sub_id = b.sub_id(box.task_id)
            if sub_id in box.subscribed:
                self._unsubscribe(box, sub_id)
            box.view.pop(b.entity_id, None)
            self._report(box, "inputs")

    def _add_task(self, action: A.Action) -> None:
        spec = action.spec
        if spec.task_id in self.tasks:
            return
        op = self.registry.get(spec.operator)
        if op is None:
            self.rejected += 1
            self._report(spec.task_id, "rejected", reason=f"unknown operator {spec.operator}",
                         migration_id=action.migration_id)
            return
        if self.load + op.weight > self.capacity:
            self.rejected += 1
            self._report(spec.task_id, "rejected", reason="capacity exceeded",
                         migration_id=action.migration_id)
            return
        box = TaskSandbox(spec, op, migration_id=action.migration_id)
        box.inputs = {b.ident: b for b in spec.inputs}
        self.tasks[spec.task_id] = box
        if self.timing.skip_launch:
            fetched, delay_us = False, 0
            self.env.call_later(delay_us, self._launched, box, fetched)
            return
        lane, start = self._free_lane()
        fetch_us = int(round(self.timing.fetch_ms * 1000))
        ready = self.cache.get(spec.operator)
        fetched = ready is None
        if fetched:
            ready = start + fetch_us
            self.cache[spec.operator] = ready
        # a launch never begins before its image is local, even if another lane fetches it
        done = max(start, ready) + int(round(self.timing.launch_ms * 1000))
        self._lanes[lane] = done
        self.env.call_later(done - self.env.now(), self._launched, box, fetched)

    def _launched(self, box: TaskSandbox, fetched: bool) -> None:
        if not self.alive or self.tasks.get(box.task_id) is not box or box.state != A.LAUNCHING:
            return
        box.state = A.RUNNING
        box.busy_until = self.env.now()
        for b in list(box.inputs.values()):
            self._subscribe(box, b.sub_id(box.task_id), b.broker, b.selector)
        self.env.trace("task_running", task_id=box.task_id, worker=self.worker_id,
                       fetched=fetched, migration_id=box.migration_id)
        self._report(box, "running")

    def _remove_task(self, box: TaskSandbox, migration_id: str | None) -> None:
        if box.state == A.TERMINATING:
            return
        box.state = A.TERMINATING
        for sub_id in list(box.subscribed):
            self._unsubscribe(box, sub_id)
        delay_us = int(round(self.timing.terminate_ms * 1000))
        self.env.call_later(self._engine_slot(delay_us), self._terminated, box, migration_id)

    def _terminated(self, box: TaskSandbox, migration_id: str | None) -> None:
        if not self.alive:
            return
        if self.tasks.get(box.task_id) is box:
            del self.tasks[box.task_id]
        self.env.trace("task_terminated", task_id=box.task_id, worker=self.worker_id,
                       migration_id=migration_id)
        self._report(box, "terminated", migration_id=migration_id)

    def _subscribe(self, box: TaskSandbox, sub_id: str, broker: str, selector: Selector) -> None:
        if box.subscribed.get(sub_id, broker) != broker:
            self._unsubscribe(box, sub_id)
        box.subscribed[sub_id] = broker
        self.env.send(m.Message(m.SUBSCRIBE, self.addr, broker, {
            "selector": selector.to_json(),
            "sink": Sink(self.addr, box.task_id).to_json(),
            "sub_id": sub_id,
        }))

    def _unsubscribe(self, box: TaskSandbox, sub_id: str) -> None:
        broker = box.subscribed.pop(sub_id)
        self.env.send(m.Message(m.UNSUBSCRIBE, self.addr, broker, {"sub_id": sub_id}))

    # -- data path -----------------------------------------------------------------

    def deliver(self, task_id: str, updates: list[EntityUpdate]) -> None:
        box = self.tasks.get(task_id)
        if not self.alive or box is None or box.state != A.RUNNING:
            self.dropped += 1
            return
        for u in updates:
            old = box.view.get(u.id)
            entity = entity_from_update(u) if old is None else merge_update(old, u)
            box.view[u.id] = entity
            done = max(self.env.now(), box.busy_until) + box.operator.cost_us
            box.busy_until = done
            self.env.call_later(done - self.env.now(), self._invoke, box, entity)

    def _invoke(self, box: TaskSandbox, entity: ContextEntity) -> None:
        if not self.alive or box.state != A.RUNNING:
            self.dropped += 1
            return
        ctx = _TaskContext(self, box)
        out = box.operator.handle(entity, ctx) or []
        box.invocations += 1
        for u in list(out) + ctx.published:
            self.env.send(m.Message(m.PUBLISH, self.addr, self.broker_addr,
                                    {"update": u.to_json(), "owner": box.task_id}))

    # -- system context --------------------------------------------------------------

    def record(self) -> dict:
        return {
            "worker_id": self.worker_id,
            "node_id": self.node_id,
            "geohash": self.geohash,
            "is_cloud": self.is_cloud,
            "capacity": self.capacity,
            "load": self.load,
            "reserved": self.reserved,
            "last_heartbeat": self.env.now(),
        }

    def heartbeat(self, reschedule: bool = True) -> dict:
        if not self.alive:
            return {}
        rec = self.record()
        self.env.send(m.Message(m.HEARTBEAT, self.addr, self.orchestrator, rec))
        t = self.env.now()
        loc = geohash_center(self.geohash) if self.geohash else None
        node_entity = EntityUpdate.of(
            f"FogNode.{self.node_id}", "FogNode",
            Attribute("capacity", self.capacity, t, self.worker_id),
            Attribute("load", rec["load"], t, self.worker_id),
            Attribute("is_cloud", self.is_cloud, t, self.worker_id),
            location=loc,
        )
        self.env.send(m.Message(m.PUBLISH, self.addr, self.broker_addr,
                                {"update": node_entity.to_json(), "owner": self.worker_id}))
        if reschedule:
            self.env.call_later(int(self.heartbeat_s * 1e6), self.heartbeat)
        return rec

    def handle(self, msg: m.Message) -> None:
        if not self.alive:
            return
        if msg.kind == m.ACTION:
            self.execute(A.Action.from_json(msg.body))
        elif msg.kind == m.NOTIFY:
            self.deliver(msg.body["channel"],
                         [EntityUpdate.from_json(u) for u in msg.body["updates"]])
        else:
            log.warning("%s: unexpected message %s", self.worker_id, msg.kind)

    def dump(self) -> dict:
        return {
            "worker_id": self.worker_id,
            "load": self.load,
            "capacity": self.capacity,
            "cache": sorted(self.cache),
            "tasks": {t: {"state": b.state, "inputs": sorted(b.subscribed)}
                      for t, b in sorted(self.tasks.items())},
        }
