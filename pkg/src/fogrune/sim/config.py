"""Scenario configuration (JSON-backed dataclasses)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any

from fogrune.function import FogFunction, SpecError, function_from_json, validate
from fogrune.geo import is_geohash
from fogrune.worker import LaunchTiming

MODES = ("cloud", "edge", "fog")
EVENT_KINDS = ("node_joined", "node_failed", "overload_burst")
DEFAULT_LATENCY_MS = {"access": 5.0, "edge-edge": 20.0, "edge-cloud": 50.0}


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    role: str  # "cloud" | "edge"
    geohash: str = ""
    capacity: int = 8
    # nodes listed here but absent at start join through a node_joined event
    start: bool = True
    cached_operators: tuple[str, ...] = ()

    @property
    def is_cloud(self) -> bool:
        return self.role == "cloud"


@dataclass(frozen=True)
class Mobility:
    kind: str = "static"  # "static" | "random" | "trace"
    moves: int = 1
    window_s: tuple[float, float] = (0.0, 0.0)
    # trace steps: (at_s, cell, device indexes or None for all)
    trace: tuple[tuple[float, str, tuple[int, ...] | None], ...] = ()


@dataclass(frozen=True)
class DeviceSpec:
    entity_type: str = "Car"
    count: int = 1
    payload_bytes: int = 126
    update_interval_ms: float = 1000.0
    cells: tuple[str, ...] = ()
    mobility: Mobility = Mobility()
    # fraction of a cell's size a car drifts per update
    step: float = 0.05
    # spread first publishes uniformly over one interval
    start_jitter: bool = True


@dataclass(frozen=True)
class EventSpec:
    kind: str
    node: str
    at_s: float
    slots: int = 0


@dataclass(frozen=True)
class SimConfig:
    nodes: tuple[NodeSpec, ...]
    seed: int = 0
    duration_s: float = 60.0
    drain_s: float = 5.0
    mode: str = "fog"
    latency_ms: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_LATENCY_MS))
    links: dict[tuple[str, str], float] = field(default_factory=dict)
    devices: tuple[DeviceSpec, ...] = ()
    functions: tuple[FogFunction, ...] = ()
    timing: LaunchTiming = LaunchTiming()
    events: tuple[EventSpec, ...] = ()
    heartbeat_s: float = 5.0
    # devices begin publishing once the cluster has settled
    device_start_s: float = 1.0
    wall_clock_metrics: bool = False

    def with_(self, **changes: Any) -> "SimConfig":
        return replace(self, **changes)

    @property
    def cloud(self) -> NodeSpec:
        return next(n for n in self.nodes if n.is_cloud)

    @property
    def edges(self) -> list[NodeSpec]:
        return [n for n in self.nodes if not n.is_cloud]


class ConfigError(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


def _mobility(obj: dict | None) -> Mobility:
    obj = obj or {"kind": "static"}
    steps = []
    for st in obj.get("trace", ()):
        devs = st.get("devices")
        steps.append((float(st["at_s"]), str(st["cell"]),
                      None if devs is None else tuple(int(d) for d in devs)))
    window = obj.get("window_s", (0.0, 0.0))
    return Mobility(str(obj.get("kind", "static")), int(obj.get("moves", 1)),
                    (float(window[0]), float(window[1])), tuple(steps))


def config_from_json(obj: dict) -> SimConfig:
    diags: list[str] = []
    try:
        nodes = tuple(NodeSpec(str(n["node_id"]), str(n.get("role", "edge")),
                               str(n.get("geohash", "")), int(n.get("capacity", 8)),
                               bool(n.get("start", True)),
                               tuple(n.get("cached_operators", ())))
                      for n in obj.get("nodes", ()))
        devices = tuple(DeviceSpec(str(d.get("entity_type", "Car")), int(d.get("count", 1)),
                                   int(d.get("payload_bytes", 126)),
                                   float(d.get("update_interval_ms", 1000.0)),
                                   tuple(d.get("cells", ())), _mobility(d.get("mobility")),
                                   float(d.get("step", 0.05)),
                                   bool(d.get("start_jitter", True)))
                        for d in obj.get("devices", ()))
        events = tuple(EventSpec(str(e["kind"]), str(e["node"]), float(e["at_s"]),
                                 int(e.get("slots", 0)))
                       for e in obj.get("events", ()))
        links = {}
        for link in obj.get("links", ()):
            a, b = link["between"]
            links[(a, b)] = links[(b, a)] = float(link["latency_ms"])
        latency = dict(DEFAULT_LATENCY_MS)
        latency.update({k: float(v) for k, v in obj.get("latency_ms", {}).items()})
        timing = LaunchTiming.from_json(obj.get("timing"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError([f"malformed scenario: {exc!r}"]) from exc
    functions = []
    for n, f in enumerate(obj.get("functions", ())):
        try:
            functions.append(function_from_json(f))
        except SpecError as exc:
            diags.extend(f"functions[{n}]: {d}" for d in exc.diagnostics)
    cfg = SimConfig(
        nodes=nodes, seed=int(obj.get("seed", 0)), duration_s=float(obj.get("duration_s", 60)),
        drain_s=float(obj.get("drain_s", 5)), mode=str(obj.get("mode", "fog")),
        latency_ms=latency, links=links, devices=devices, functions=tuple(functions),
        timing=timing, events=events, heartbeat_s=float(obj.get("heartbeat_s", 5.0)),
        device_start_s=float(obj.get("device_start_s", 1.0)),
        wall_clock_metrics=bool(obj.get("wall_clock_metrics", False)),
    )
    diags.extend(check_config(cfg))
    if diags:
        raise ConfigError(diags)
    return cfg


def load_config(path: str) -> SimConfig:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: malformed JSON: {exc}"]) from exc
    return config_from_json(obj)


def check_config(cfg: SimConfig) -> list[str]:
    diags = []
    if cfg.mode not in MODES:
        diags.append(f"mode must be one of {MODES}, got {cfg.mode!r}")
    ids = [n.node_id for n in cfg.nodes]
    if len(set(ids)) != len(ids):
        diags.append("duplicate node ids")
    if sum(n.is_cloud for n in cfg.nodes) != 1:
        diags.append("exactly one cloud node is required")
    for n in cfg.nodes:
        if n.role not in ("cloud", "edge"):
            diags.append(f"{n.node_id}: role must be cloud or edge")
        if n.capacity <= 0:
            diags.append(f"{n.node_id}: capacity must be > 0")
        if n.geohash and not is_geohash(n.geohash):
            diags.append(f"{n.node_id}: invalid geohash {n.geohash!r}")
        if not n.is_cloud and not n.geohash:
            diags.append(f"{n.node_id}: edge nodes need a geohash")
        if "/" in n.node_id or not n.node_id:
            diags.append(f"invalid node id {n.node_id!r}")
        if n.is_cloud and not n.start:
            diags.append("the cloud node must be up from the start")
    if any(v < 0 for v in cfg.latency_ms.values()) or any(v < 0 for v in cfg.links.values()):
        diags.append("link latencies must be >= 0")
    if cfg.duration_s <= 0 or cfg.drain_s < 0:
        diags.append("duration_s must be > 0 and drain_s >= 0")
    if cfg.device_start_s < 0:
        diags.append("device_start_s must be >= 0")
    if cfg.heartbeat_s <= 0:
        diags.append("heartbeat_s must be > 0")
    for i, d in enumerate(cfg.devices):
        if d.count <= 0:
            diags.append(f"devices[{i}]: count must be > 0")
        if d.update_interval_ms <= 0:
            diags.append(f"devices[{i}]: update_interval_ms must be > 0")
        if d.payload_bytes < 0:
            diags.append(f"devices[{i}]: payload_bytes must be >= 0")
        if not d.cells or not all(is_geohash(c) for c in d.cells):
            diags.append(f"devices[{i}]: cells must be a non-empty list of geohashes")
        mob = d.mobility
        if mob.kind not in ("static", "random", "trace"):
            diags.append(f"devices[{i}]: unknown mobility {mob.kind!r}")
        if mob.kind == "random" and not 0 <= mob.window_s[0] <= mob.window_s[1]:
            diags.append(f"devices[{i}]: mobility window must satisfy 0 <= start <= end")
        for at_s, cell, _ in mob.trace:
            if not is_geohash(cell) or at_s < 0:
                diags.append(f"devices[{i}]: bad trace step ({at_s}, {cell!r})")
    names = [f.name for f in cfg.functions]
    if len(set(names)) != len(names):
        diags.append("duplicate function names")
    for f in cfg.functions:
        diags.extend(f"{f.name}: {d}" for d in validate(f))
    for e in cfg.events:
        if e.kind not in EVENT_KINDS:
            diags.append(f"unknown event kind {e.kind!r}")
        if e.node not in ids:
            diags.append(f"event {e.kind}: unknown node {e.node!r}")
        if not 0 <= e.at_s <= cfg.duration_s:
            diags.append(f"event {e.kind} at {e.at_s}s is outside the run")
    return diags


def config_to_json(cfg: SimConfig) -> dict:
    seen = set()
    links = []
    for (a, b), v in sorted(cfg.links.items()):
        if (b, a) not in seen:
            seen.add((a, b))
            links.append({"between": [a, b], "latency_ms": v})
    return {
        "seed": cfg.seed, "duration_s": cfg.duration_s, "drain_s": cfg.drain_s,
        "mode": cfg.mode, "heartbeat_s": cfg.heartbeat_s,
        "device_start_s": cfg.device_start_s,
        "wall_clock_metrics": cfg.wall_clock_metrics,
        "latency_ms": dict(cfg.latency_ms), "links": links,
        "nodes": [{"node_id": n.node_id, "role": n.role, "geohash": n.geohash,
                   "capacity": n.capacity, "start": n.start,
                   "cached_operators": list(n.cached_operators)} for n in cfg.nodes],
        "devices": [{"entity_type": d.entity_type, "count": d.count,
                     "payload_bytes": d.payload_bytes,
                     "update_interval_ms": d.update_interval_ms, "cells": list(d.cells),
                     "step": d.step, "start_jitter": d.start_jitter,
                     "mobility": {"kind": d.mobility.kind, "moves": d.mobility.moves,
                                  "window_s": list(d.mobility.window_s),
                                  "trace": [{"at_s": a, "cell": c,
                                             "devices": None if ds is None else list(ds)}
                                            for a, c, ds in d.mobility.trace]}}
                    for d in cfg.devices],
        "functions": [f.to_json() for f in cfg.functions],
        "timing": cfg.timing.to_json(),
        "events": [{"kind": e.kind, "node": e.node, "at_s": e.at_s, "slots": e.slots}
                   for e in cfg.events],
    }
