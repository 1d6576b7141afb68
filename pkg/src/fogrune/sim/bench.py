"""Micro-benchmarks: task startup, migration and launch throughput."""

from __future__ import annotations

from dataclasses import replace

from fogrune.function import function_from_json
from fogrune.geo import BASE32
from fogrune.sim.config import DeviceSpec, EventSpec, NodeSpec, SimConfig
from fogrune.sim.metrics import MetricsReport
from fogrune.sim.scenario import Cluster
from fogrune.worker import LaunchTiming

SPEED = function_from_json({
    "name": "speed",
    "operator": "speed_estimator",
    "inputs": [{"selected_type": "Car",
                "attribute_set": ["location", "prev_location", "dt_ms"],
                "group_by": "per_entity_id"}],
    "output_types": ["Speed"],
})
OPERATOR = "speed_estimator"
REGION = "u0yj"


def _cars(count: int, cells: list[str]) -> DeviceSpec:
    return DeviceSpec("Car", count, 126, 1000.0, tuple(cells), start_jitter=False)


def _base(nodes: list[NodeSpec], devices: DeviceSpec, timing: LaunchTiming,
          seed: int) -> SimConfig:
    return SimConfig(nodes=tuple(nodes), seed=seed, duration_s=600.0, drain_s=0.0,
                     mode="fog", devices=(devices,), functions=(SPEED,), timing=timing,
                     device_start_s=0.5)


def _running(cluster: Cluster, n: int = 1):
    return lambda: sum(1 for t in cluster.traces if t[2] == "task_running") >= n


def _startup_case(name: str, timing: LaunchTiming, cached: bool, seed: int) -> dict:
    cloud = NodeSpec("cloud", "cloud", "", 4, cached_operators=(OPERATOR,) if cached else ())
    cluster = Cluster(_base([cloud], _cars(1, [REGION + "0k"]), timing, seed))
    cluster.run(until_s=60.0, stop=_running(cluster))
    decided = cluster.trace_times("task_decided")
    running = cluster.trace_times("task_running")
    task = next(iter(running))
    decision_ms = cluster.orchestrator.decision_wall_ms[0]
    virtual_ms = (running[task] - decided[task]) / 1000.0
    return {"scenario": name, "decision_ms": round(decision_ms, 6),
            "virtual_ms": virtual_ms, "startup_ms": round(decision_ms + virtual_ms, 6)}


def bench_startup(timing: LaunchTiming = LaunchTiming(), seed: int = 0) -> MetricsReport:
    """The three startup cases: decision only, fetch and launch, launch only."""
    rows = [
        _startup_case("decision_only", replace(timing, skip_launch=True), False, seed),
        _startup_case("fetch_and_launch", timing, False, seed),
        _startup_case("launch_only", timing, True, seed),
    ]
    return MetricsReport(mode="fog", seed=seed, duration_s=0.0,
                         startup_latency_ms={r["scenario"]: r["startup_ms"] for r in rows},
                         extra={"kind": "startup", "timing": timing.to_json(), "rows": rows})


def bench_migration(timing: LaunchTiming = LaunchTiming(), seed: int = 0,
                    join_at_s: float = 10.0) -> MetricsReport:
    """A Cloud->Edge migration against separately measured start and terminate costs."""
    cars = _cars(1, [REGION + "0k"])
    cached = (OPERATOR,)

    def cloud() -> NodeSpec:
        return NodeSpec("cloud", "cloud", "", 4, cached_operators=cached)

    # start latency: the same task placed straight onto the edge
    c = Cluster(_base([cloud(), NodeSpec("edge1", "edge", REGION + "0", 4,
                                         cached_operators=cached)], cars, timing, seed))
    c.run(until_s=60.0, stop=_running(c))
    task, up = next(iter(c.trace_times("task_running").items()))
    start_ms = (up - c.trace_times("task_decided")[task]) / 1000.0

    # terminate latency: remove a running cloud task
    c = Cluster(_base([cloud()], cars, timing, seed))
    c.run(until_s=60.0, stop=_running(c))
    t_remove = c.engine.now_us + 1_000_000
    for d in c.devices:
        d.stop_us = t_remove
    c.engine.at(t_remove, c.brokers["cloud"].delete, c.devices[0].device_id)
    c.run(until_s=120.0, stop=lambda: bool(c.trace_times("task_terminated")))
    task, down = next(iter(c.trace_times("task_terminated").items()))
    stop_ms = (down - c.trace_times("task_removing")[task]) / 1000.0

    # the migration itself: edge1 joins next to the producer of a cloud task
    cfg = _base([cloud(), NodeSpec("edge1", "edge", REGION + "0", 4, start=False,
                                   cached_operators=cached)], cars, timing, seed)
    c = Cluster(replace(cfg, events=(EventSpec("node_joined", "edge1", join_at_s),)))
    c.run(until_s=join_at_s + 60.0, stop=lambda: any(
        v["ms"] is not None for v in c.report().migration_latency_ms.values()))
    report = c.report()
    mig_id, mig = next(iter(report.migration_latency_ms.items()))
    row = {"migration_id": mig_id, "kind": mig["kind"], "migration_ms": mig["ms"],
           "start_ms": start_ms, "terminate_ms": stop_ms}
    report.extra = {"kind": "migration", "timing": timing.to_json(), "rows": [row]}
    return report


def bench_throughput(workers: tuple[int, ...] = (1, 2, 4, 8), tasks_per_worker: int = 3,
                     launch_ms: float = 500.0, seed: int = 0,
                     realtime: bool = True) -> MetricsReport:
    """Launch a flood of tasks over W edge workers and measure tasks per second.

    With ``realtime`` the engine charges simulated delays in wall-clock time
    and throughput is measured on the wall clock.
    """
    timing = LaunchTiming(fetch_ms=0.0, launch_ms=launch_ms, terminate_ms=0.0)
    rows = []
    for w in workers:
        edges = [NodeSpec(f"edge{i + 1}", "edge", REGION + BASE32[i], tasks_per_worker,
                          cached_operators=(OPERATOR,)) for i in range(w)]
        cars = _cars(w * tasks_per_worker, [e.geohash + "k" for e in edges])
        cfg = _base([NodeSpec("cloud", "cloud", "", 1), *edges], cars, timing, seed)
        c = Cluster(cfg, realtime=realtime)
        n = w * tasks_per_worker
        c.run(until_s=600.0, stop=_running(c, n))
        decided = [t for t in c.traces if t[2] == "task_decided"]
        running = [t for t in c.traces if t[2] == "task_running"]
        v_span = (max(t[0] for t in running) - min(t[0] for t in decided)) / 1e6
        w_span = max(t[1] for t in running) - min(t[1] for t in decided)
        rows.append({"workers": w, "tasks": len(running),
                     "virtual_s": round(v_span, 6),
                     "throughput_virtual": round(len(running) / v_span, 6),
                     "wall_s": round(w_span, 6) if realtime else None,
                     "throughput_wall": round(len(running) / w_span, 6) if realtime else None})
    key = "throughput_wall" if realtime else "throughput_virtual"
    return MetricsReport(mode="fog", seed=seed, duration_s=0.0,
                         throughput_tasks_per_s=rows[-1][key],
                         extra={"kind": "throughput", "realtime": realtime,
                                "launch_ms": launch_ms, "rows": rows})


def bench(kind: str, **params) -> MetricsReport:
    kinds = {"startup": bench_startup, "migration": bench_migration,
             "throughput": bench_throughput}
    if kind not in kinds:
        raise ValueError(f"unknown bench {kind!r}; expected one of {sorted(kinds)}")
    return kinds[kind](**params)
