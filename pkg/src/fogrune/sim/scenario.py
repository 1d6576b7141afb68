"""Wires brokers, workers, Discovery and the Orchestrator into a simulated cluster."""

from __future__ import annotations

import logging
import time
from collections import Counter
from dataclasses import replace
from typing import IO, Any

from fogrune import messages as m
from fogrune.broker import Broker
from fogrune.discovery import Discovery
from fogrune.entity import EntityUpdate, value_to_json
from fogrune.function import PER_ENTITY_TYPE, FogFunction
from fogrune.geo import common_prefix_len
from fogrune.operators import Operator
from fogrune.orchestrator import Orchestrator, Policy
from fogrune.sim.config import EVENT_KINDS, ConfigError, EventSpec, SimConfig, check_config
from fogrune.sim.devices import Device
from fogrune.sim.engine import Engine
from fogrune.sim.metrics import MetricsReport, results_digest, summarize
from fogrune.sim.network import Network
from fogrune.worker import Worker

log = logging.getLogger(__name__)


class SimEnv:
    def __init__(self, cluster: "Cluster"):
        self._c = cluster

    def now(self) -> int:
        return self._c.engine.now_us

    def send(self, msg: m.Message) -> None:
        self._c.network.send(msg)

    def call_later(self, delay_us: int, fn, *args) -> None:
        self._c.engine.call_later(delay_us, fn, *args)

    def trace(self, event: str, **fields: Any) -> None:
        self._c.traces.append((self._c.engine.now_us, time.perf_counter(), event, fields))


def cloud_variant(f: FogFunction) -> FogFunction:
    """One type-wide task per function, as a cloud function service would run it."""
    return replace(f, inputs=tuple(replace(i, group_by=PER_ENTITY_TYPE) for i in f.inputs))


class Cluster:
    def __init__(self, cfg: SimConfig, *, realtime: bool = False,
                 message_log: IO[str] | None = None,
                 registry: dict[str, Operator] | None = None):
        diags = check_config(cfg)
        if diags:
            raise ConfigError(diags)
        self.cfg = cfg
        self.engine = Engine(realtime)
        self.network = Network(self.engine, self._latency_us,
                               access_us=int(round(cfg.latency_ms["access"] * 1000)),
                               message_log=message_log)
        self.env = SimEnv(self)
        self.traces: list[tuple[int, float, str, dict]] = []
        self.roles = {n.node_id: n for n in cfg.nodes}
        cloud = cfg.cloud.node_id
        self.cloud_id = cloud

        self.discovery = Discovery(self.env, node_id=cloud)
        self.orchestrator = Orchestrator(self.env, node_id=cloud,
                                         discovery=self.discovery.addr,
                                         policy=Policy.for_mode(cfg.mode),
                                         heartbeat_s=cfg.heartbeat_s, registry=registry)
        self.network.attach(self.discovery.addr, self.discovery.handle)
        self.network.attach(self.orchestrator.addr, self.orchestrator.handle)

        self.brokers: dict[str, Broker] = {}
        self.workers: dict[str, Worker] = {}
        for n in cfg.nodes:
            if cfg.mode == "cloud" and not n.is_cloud:
                continue  # edges only relay device traffic to the cloud
            broker = Broker(n.node_id, self.env, discovery=self.discovery.addr)
            worker = Worker(n.node_id, self.env, capacity=n.capacity, geohash=n.geohash,
                            is_cloud=n.is_cloud, timing=cfg.timing, broker=broker,
                            orchestrator=self.orchestrator.addr,
                            heartbeat_s=cfg.heartbeat_s, registry=registry)
            worker.cache.update(dict.fromkeys(n.cached_operators, 0))
            self.brokers[n.node_id] = broker
            self.workers[n.node_id] = worker
            self.network.attach(broker.broker_id, broker.handle)
            self.network.attach(worker.addr, worker.handle)

        self.output_types = {t for f in cfg.functions for t in f.output_types}
        self.latencies_ms: list[float] = []
        self.results: dict[str, dict] = {}
        self._answered: set[tuple[str, int]] = set()
        self.network.taps.append(self._observe)

        self.devices: list[Device] = []
        self._bound: dict[str, str] = {}
        start_us = int(cfg.device_start_s * 1e6)
        for spec in cfg.devices:
            for i in range(spec.count):
                did = f"{spec.entity_type.lower()}-{len(self.devices):04d}"
                self.devices.append(Device(did, i, spec, cfg.seed, self.env, self._route,
                                           start_us=start_us))
        self._started = False
        self._pending_events: list[EventSpec] = list(cfg.events)

    # -- topology --------------------------------------------------------------------

    def _latency_us(self, a: str, b: str) -> int:
        ms = self.cfg.links.get((a, b))
        if ms is None:
            ra, rb = self.roles[a].is_cloud, self.roles[b].is_cloud
            ms = self.cfg.latency_ms["edge-cloud" if ra or rb else "edge-edge"]
        return int(round(ms * 1000))

    def live_edges(self) -> list[str]:
        return [n.node_id for n in self.cfg.edges if n.node_id not in self.network.down]

    def nearest_edge(self, geohash: str) -> str | None:
        edges = self.live_edges()
        if not edges:
            return None
        return min(edges, key=lambda e: (-common_prefix_len(self.roles[e].geohash, geohash), e))

    def _route(self, dev: Device) -> tuple[str, str]:
        """(access node, home broker address) for a device's next publish."""
        gh = dev.geohash
        access = self.nearest_edge(gh) or self.cloud_id
        mode = self.cfg.mode
        if mode == "cloud":
            home = self.cloud_id
        elif mode == "edge":
            home = self._bound.get(dev.device_id)
            if home is None or home in self.network.down:
                home = access
                self._bound[dev.device_id] = home
        else:
            near = common_prefix_len(self.roles[access].geohash, gh) if access != self.cloud_id else 0
            home = access if near >= 1 else self.cloud_id
        return access, m.address(home, "broker")

    # -- observation -------------------------------------------------------------------

    def _observe(self, msg: m.Message) -> None:
        if msg.kind != m.PUBLISH or not msg.src.endswith("/worker"):
            return
        u = msg.body["update"]
        if u["entity_type"] not in self.output_types:
            return
        update = EntityUpdate.from_json(u)
        if not update.changed:
            return
        ts = max(a.timestamp for a in update.changed.values())
        # one sample per raw publish; replays after a resubscription are duplicates
        if (update.id, ts) not in self._answered:
            self._answered.add((update.id, ts))
            self.latencies_ms.append((self.engine.now_us - ts) / 1000.0)
        vals = self.results.setdefault(update.id, {})
        for name, a in update.changed.items():
            vals[name] = value_to_json(a.value)

    # -- lifecycle ---------------------------------------------------------------------

    def _start_node(self, node_id: str) -> None:
        self.network.down.discard(node_id)
        if node_id in self.brokers:
            self.brokers[node_id].start()
            self.workers[node_id].start()

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        self.discovery.start()
        self.orchestrator.start()
        for n in self.cfg.nodes:
            if n.start:
                self._start_node(n.node_id)
            else:
                self.network.down.add(n.node_id)
        for f in self.cfg.functions:
            self.orchestrator.register_function(
                cloud_variant(f) if self.cfg.mode == "cloud" else f)
        stop_us = int(self.cfg.duration_s * 1e6)
        for d in self.devices:
            d.stop_us = stop_us
            d.start()
        for ev in self._pending_events:
            self._schedule(ev)
        self._pending_events = []

    def inject(self, event: EventSpec) -> None:
        """Schedule a cluster event at its virtual time."""
        if event.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {event.kind!r}")
        if event.node not in self.roles:
            raise KeyError(f"unknown node {event.node!r}")
        if not 0 <= event.at_s <= self.cfg.duration_s:
            raise ValueError("event time outside the run")
        if self._started:
            self._schedule(event)
        else:
            self._pending_events.append(event)

    def _schedule(self, ev: EventSpec) -> None:
        self.engine.at(max(self.engine.now_us, int(ev.at_s * 1e6)), self._fire, ev)

    def _fire(self, ev: EventSpec) -> None:
        self.env.trace("cluster_event", kind=ev.kind, node=ev.node)
        if ev.kind == "node_joined":
            if ev.node in self.network.down:
                self._start_node(ev.node)
        elif ev.kind == "node_failed":
            self.network.down.add(ev.node)
            if ev.node in self.workers:
                self.workers[ev.node].fail()
                self.brokers[ev.node].crash()
        elif ev.kind == "overload_burst":
            w = self.workers.get(ev.node)
            if w is not None and w.alive:
                w.reserved += ev.slots
                w.heartbeat(reschedule=False)

    def run(self, until_s: float | None = None, stop=None) -> None:
        self.start()
        end = self.cfg.duration_s + self.cfg.drain_s if until_s is None else until_s
        self.engine.run(int(end * 1e6), stop=stop)

    # -- reporting --------------------------------------------------------------------

    def trace_times(self, event: str, key: str = "task_id") -> dict[str, int]:
        out: dict[str, int] = {}
        for t, _, ev, fields in self.traces:
            if ev == event and fields.get(key) is not None:
                out.setdefault(fields[key], t)
        return out

    def report(self) -> MetricsReport:
        cfg = self.cfg
        decided = self.trace_times("task_decided")
        running = self.trace_times("task_running")
        startup = {t: round((running[t] - decided[t]) / 1000.0, 6)
                   for t in sorted(running) if t in decided}
        terminated = self.trace_times("task_terminated", key="migration_id")
        migrations = {}
        kinds: Counter[str] = Counter()
        for mig in self.orchestrator.migrations:
            kinds[mig["kind"]] += 1
            new_up, old_down = running.get(mig["task"]), terminated.get(mig["migration_id"])
            done = None
            if new_up is not None and old_down is not None:
                done = round((max(new_up, old_down) - mig["at"]) / 1000.0, 6)
            migrations[mig["migration_id"]] = {"kind": mig["kind"], "reason": mig["reason"],
                                               "ms": done}
        throughput = 0.0
        if running:
            span = max(running.values()) - min(decided.get(t, running[t]) for t in running)
            throughput = round(len(running) / (span / 1e6), 6) if span > 0 else 0.0
        decisions: dict = {"count": len(self.orchestrator.decision_wall_ms)}
        if cfg.wall_clock_metrics:
            decisions.update(summarize(self.orchestrator.decision_wall_ms))
        placed = Counter(ti.worker_id for f in self.orchestrator.tasks.values()
                         for ti in f.values())
        return MetricsReport(
            mode=cfg.mode, seed=cfg.seed, duration_s=cfg.duration_s,
            cross_node_traffic_bytes={"total": self.network.traffic_total,
                                      "per_link": dict(sorted(self.network.traffic_by_link.items())),
                                      "per_kind": dict(sorted(self.network.traffic_by_kind.items()))},
            messages={"sent": self.network.sent, "delivered": self.network.delivered,
                      "dropped": dict(sorted(self.network.dropped.items())),
                      "in_flight": self.network.in_flight},
            service_latency_ms=summarize(self.latencies_ms),
            startup_latency_ms={"summary": summarize(list(startup.values())), "per_task": startup},
            migration_latency_ms=migrations,
            migrations=dict(sorted(kinds.items())),
            throughput_tasks_per_s=throughput,
            decision_latency_ms=decisions,
            tasks={"launched": len(running),
                   "active": sum(placed.values()),
                   "per_worker": dict(sorted(placed.items())),
                   "deferred": len(self.orchestrator.deferred)},
            results={"count": len(self.results), "digest": results_digest(self.results)},
            extra={"device_publishes": sum(d.published for d in self.devices)},
        )

    def dump(self, what: str) -> dict:
        if what == "tasks":
            return self.orchestrator.dump_state()["tasks"]
        if what == "entities":
            return {n: b.dump()["entities"] for n, b in sorted(self.brokers.items())}
        if what == "workers":
            return {"orchestrator": self.orchestrator.dump_state()["workers"],
                    "local": {n: w.dump() for n, w in sorted(self.workers.items())}}
        if what == "state":
            return self.orchestrator.dump_state()
        raise ValueError(f"cannot inspect {what!r}")


def run_scenario(cfg: SimConfig, *, message_log: IO[str] | None = None) -> MetricsReport:
    cluster = Cluster(cfg, message_log=message_log)
    cluster.run()
    return cluster.report()
