import io
import json

import pytest
from hypothesis import given, settings, strategies as st

from fogrune.sim.config import (
    ConfigError, EventSpec, Mobility, NodeSpec, config_from_json, config_to_json,
)
from fogrune.sim.engine import Engine
from fogrune.sim.metrics import percentile, summarize
from fogrune.sim.network import recompute_traffic
from fogrune.sim.scenario import Cluster, run_scenario
from simkit import small_cfg

MOBILE = Mobility("random", 1, (5.0, 12.0))


CONTROL = {"HEARTBEAT", "REGISTER", "REFRESH", "SUB_AVAIL"}


def test_zero_devices_zero_traffic_and_tasks():
    r = run_scenario(small_cfg(cars=0))
    assert r.tasks["launched"] == 0 and r.tasks["active"] == 0
    assert r.results["count"] == 0
    # only the control plane (heartbeats, node registrations) crosses nodes
    per_kind = r.cross_node_traffic_bytes["per_kind"]
    assert set(per_kind) <= CONTROL
    assert "PUBLISH" not in per_kind and "NOTIFY" not in per_kind


def test_same_seed_byte_identical():
    cfg = small_cfg(mobility=MOBILE)
    assert run_scenario(cfg).dumps() == run_scenario(cfg).dumps()


def test_other_seed_differs():
    a = run_scenario(small_cfg(mobility=MOBILE, seed=1)).dumps()
    b = run_scenario(small_cfg(mobility=MOBILE, seed=2)).dumps()
    assert a != b


def test_conservation_and_exact_link_latency():
    c = Cluster(small_cfg(mobility=MOBILE))
    net = c.network
    expected: dict[int, int] = {}
    mismatches = []
    send = net.send

    def recording_send(msg):
        before = net.in_flight
        send(msg)
        if net.in_flight > before:
            delay = 0 if msg.src_node == msg.dst_node else c._latency_us(msg.src_node,
                                                                       msg.dst_node)
            expected[id(msg)] = c.engine.now() + delay + (net.access_us if msg.from_device else 0)

    def tap(msg):
        if expected.pop(id(msg), None) != c.engine.now():
            mismatches.append(msg.kind)

    net.send = recording_send
    net.taps.insert(0, tap)
    c.run()
    assert mismatches == []
    assert net.sent == net.delivered + sum(net.dropped.values()) + net.in_flight
    assert net.delivered > 1000


def test_traffic_additivity_and_recompute():
    log = io.StringIO()
    c = Cluster(small_cfg(mobility=MOBILE), message_log=log)
    c.run()
    total, links = recompute_traffic(log.getvalue().splitlines())
    assert total == c.network.traffic_total == sum(c.network.traffic_by_link.values())
    assert links == dict(c.network.traffic_by_link)


def test_clock_monotone():
    e = Engine()
    seen = []
    for t in (5, 1, 3, 3, 0):
        e.at(t, lambda t=t: seen.append(e.now_us))
    e.run(10)
    assert seen == sorted(seen) and e.now_us == 10


def test_node_joined_migrates_from_cloud():
    cfg = small_cfg(cars=4, edges=1)
    cfg = cfg.with_(nodes=(cfg.nodes[0], NodeSpec("edge1", "edge", "u0yj0", 20, start=False)),
                    events=(EventSpec("node_joined", "edge1", 8.0),))
    c = Cluster(cfg)
    c.run(until_s=7.9)
    assert {w for w, _ in c.orchestrator.placement().values()} == {"cloud"}
    c.run()
    r = c.report()
    assert r.migrations == {"cloud->edge": 4}
    assert all(v["ms"] is not None for v in r.migration_latency_ms.values())
    assert {w for w, _ in c.orchestrator.placement().values()} == {"edge1"}


def test_node_failed_without_tasks_no_migration():
    cfg = small_cfg(cars=2, edges=3).with_(events=(EventSpec("node_failed", "edge3", 5.0),))
    r = run_scenario(cfg)
    assert r.migrations == {}


def test_node_failed_with_tasks_replans():
    cfg = small_cfg(cars=4, duration_s=40.0).with_(
        events=(EventSpec("node_failed", "edge1", 5.0),))
    c = Cluster(cfg)
    c.run()
    placed = c.orchestrator.placement()
    assert len(placed) == 4
    assert all(w != "edge1" for w, _ in placed.values())


def test_failed_node_rejoins_empty():
    cfg = small_cfg(cars=4, duration_s=60.0).with_(
        events=(EventSpec("node_failed", "edge1", 5.0), EventSpec("node_joined", "edge1", 30.0)))
    c = Cluster(cfg)
    c.run(until_s=29.0)
    assert c.brokers["edge1"].subscriptions == {} and c.workers["edge1"].tasks == {}
    c.run()
    assert c.workers["edge1"].alive and c.orchestrator.workers["edge1"].alive
    assert len(c.orchestrator.placement()) == 4


@pytest.mark.parametrize("slots", [1, 3])
def test_overload_burst_evicts_overflow(slots):
    cfg = small_cfg(cars=4, edges=1, edge_capacity=4)
    cfg = cfg.with_(events=(EventSpec("overload_burst", "edge1", 6.0, slots=slots),))
    r = run_scenario(cfg)
    assert r.migrations == {"edge->cloud": slots}


def test_mode_equivalence_of_results():
    digests = {m: run_scenario(small_cfg(mode=m, mobility=MOBILE)).results for m in
               ("cloud", "edge", "fog")}
    assert digests["cloud"]["count"] == 8
    assert digests["cloud"] == digests["edge"] == digests["fog"]


def test_fog_saves_traffic_over_cloud():
    cloud = run_scenario(small_cfg(mode="cloud", payload=1682))
    fog = run_scenario(small_cfg(mode="fog", payload=1682))
    ratio = cloud.cross_node_traffic_bytes["total"] / fog.cross_node_traffic_bytes["total"]
    assert ratio >= 20


def test_inject_rejects_bad_events():
    c = Cluster(small_cfg())
    with pytest.raises(KeyError):
        c.inject(EventSpec("node_failed", "edge9", 1.0))
    with pytest.raises(ValueError):
        c.inject(EventSpec("node_failed", "edge1", 999.0))
    with pytest.raises(ValueError):
        c.inject(EventSpec("meteor", "edge1", 1.0))


def test_invalid_config_rejected_before_start():
    with pytest.raises(ConfigError):
        Cluster(small_cfg(mode="mesh"))
    with pytest.raises(ConfigError) as exc:
        config_from_json({"nodes": [{"node_id": "e", "role": "edge"}],
                          "devices": [{"count": 0, "cells": []}]})
    assert len(exc.value.diagnostics) >= 3


def test_config_json_roundtrip():
    cfg = small_cfg(mobility=Mobility("trace", trace=((3.0, "u0yj1k", (0, 1)),)))
    cfg = cfg.with_(events=(EventSpec("overload_burst", "edge1", 2.0, 2),),
                    links={("cloud", "edge1"): 80.0, ("edge1", "cloud"): 80.0})
    assert config_from_json(json.loads(json.dumps(config_to_json(cfg)))) == cfg


def test_trace_mobility_moves_devices():
    trace = Mobility("trace", trace=((4.0, "u0yj1k", None),))
    c = Cluster(small_cfg(cars=2, mobility=trace).with_(
        devices=(small_cfg().devices[0].__class__("Car", 2, 126, 500.0, ("u0yj0k",), trace),)))
    c.run()
    assert all(d.geohash.startswith("u0yj1") for d in c.devices)
    assert c.report().migrations.get("edge->edge", 0) == 2


def test_link_override_changes_latency():
    base = run_scenario(small_cfg(mode="cloud")).service_latency_ms["mean"]
    slow = small_cfg(mode="cloud").with_(links={(a, "cloud"): 200.0 for a in ("edge1", "edge2")}
                                         | {("cloud", a): 200.0 for a in ("edge1", "edge2")})
    assert run_scenario(slow).service_latency_ms["mean"] > base + 100


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=200),
       st.floats(0, 100))
def test_percentile_nearest_rank(xs, q):
    got = percentile(xs, q)
    s = sorted(xs)
    assert got in s
    assert sum(1 for x in s if x <= got) >= q / 100 * len(s) - 1e-9


def test_summarize_empty_and_values():
    assert summarize([])["count"] == 0
    s = summarize([1.0, 2.0, 3.0, 4.0])
    assert s["mean"] == 2.5 and s["p50"] == 2.0 and s["p95"] == 4.0
