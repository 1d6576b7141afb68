import pytest

from fogrune import actions as A
from fogrune import messages as m
from fogrune.discovery import APPEAR, DISAPPEAR, UPDATE, AvailabilityEvent, AvailabilityRegistration
from fogrune.entity import value_to_json
from fogrune.function import (
    PER_ENTITY_ID, PER_ENTITY_TYPE, FogFunction, InputSelector, SpecError, per_attribute_value,
)
from fogrune.orchestrator import (
    NodeJoined, Orchestrator, PlacementError, Policy, ProducerMoved, WorkerOverloaded,
)


def speed_fn(name="speed", group_by=PER_ENTITY_ID, priority=50) -> FogFunction:
    return FogFunction(name, "speed_estimator",
                       (InputSelector("Car", ("location",), group_by=group_by),),
                       ("Speed",), priority=priority)


def make(policy=None, workers=(), **kw):
    env = m.CollectingEnv()
    o = Orchestrator(env, policy=policy or Policy(), **kw)
    for wid, gh, cap in workers:
        o.on_worker_heartbeat({"worker_id": wid, "node_id": wid, "geohash": gh,
                               "is_cloud": wid == "cloud", "capacity": cap})
    env.take()
    return env, o


def car(eid, cell="u4pru", broker="edge1/broker"):
    return AvailabilityRegistration(eid, "Car", frozenset({"location"}), broker, cell)


def appear(eid, sub="speed#0", **kw):
    return AvailabilityEvent(APPEAR, car(eid, **kw), sub)


def disappear(eid, sub="speed#0", **kw):
    return AvailabilityEvent(DISAPPEAR, car(eid, **kw), sub)


def kinds(actions):
    return [a.kind for a in actions]


WORKERS = (("cloud", "", 100), ("edgeA", "u4pru", 10), ("edgeB", "u0yj0", 10))


def test_register_subscribes_per_input():
    env, o = make(workers=WORKERS)
    f = FogFunction("join", "dummy", (InputSelector("Car"), InputSelector("Road")))
    o.register_function(f)
    subs = env.take(m.SUB_AVAIL)
    assert [s.body["sub_id"] for s in subs] == ["join#0", "join#1"]
    assert env.take(m.ACTION) == []


def test_register_with_three_cars_gives_three_add_tasks():
    env, o = make(workers=WORKERS)
    o.register_function(speed_fn())
    acts = [a for i in range(3) for a in o.on_event(appear(f"c{i}"))]
    assert kinds(acts) == [A.ADD_TASK] * 3
    assert len(env.take(m.ACTION)) == 3


def test_duplicate_registration_rejected_without_change():
    env, o = make(workers=WORKERS)
    o.register_function(speed_fn())
    env.take()
    with pytest.raises(SpecError):
        o.register_function(speed_fn())
    assert env.take() == [] and list(o.functions) == ["speed"]


def test_invalid_function_rejected():
    _, o = make()
    with pytest.raises(SpecError):
        o.register_function(FogFunction("x", "nope", ()))


def test_appear_idempotent_then_disappear():
    _, o = make(workers=WORKERS)
    o.register_function(speed_fn())
    assert kinds(o.on_event(appear("c1"))) == [A.ADD_TASK]
    assert o.on_event(appear("c1")) == []
    assert kinds(o.on_event(disappear("c1"))) == [A.REMOVE_TASK]
    assert o.placement() == {}


def test_stale_subscription_ignored():
    _, o = make(workers=WORKERS)
    assert o.on_event(appear("c1", sub="gone#0")) == []


def test_per_type_shares_one_task_with_inputs():
    _, o = make(workers=WORKERS)
    o.register_function(speed_fn(group_by=PER_ENTITY_TYPE))
    assert kinds(o.on_event(appear("c1"))) == [A.ADD_TASK]
    assert kinds(o.on_event(appear("c2"))) == [A.ADD_INPUT]
    assert kinds(o.on_event(disappear("c1"))) == [A.REMOVE_INPUT]
    assert kinds(o.on_event(disappear("c2"))) == [A.REMOVE_TASK]


def test_attribute_value_grouping_uses_resolver():
    colors = {"c1": "red", "c2": "red", "c3": "blue"}
    _, o = make(workers=WORKERS, resolver=lambda reg, attr: colors[reg.entity_id])
    o.register_function(speed_fn(group_by=per_attribute_value("color")))
    for c in colors:
        o.on_event(appear(c))
    assert sorted(k for _, k in o.placement()) == ["blue", "red"]


def test_attribute_value_grouping_queries_broker():
    env, o = make(workers=WORKERS)
    o.register_function(speed_fn(group_by=per_attribute_value("color")))
    env.take()
    assert o.on_event(appear("c1")) == []
    (q,) = env.take(m.QUERY)
    assert q.dst == "edge1/broker"
    ent = {"attributes": {"color": {"value": value_to_json("red")}}}
    assert kinds(o.on_value(q.body["req_id"], [ent])) == [A.ADD_TASK]
    assert list(o.placement()) == [("speed", "red")]


def test_select_worker_examples():
    _, o = make(workers=(("cloud", "", 10), ("edgeA", "u4pru", 1)))
    assert o.select_worker("u4pru") == "edgeA"
    o.workers["edgeA"].load = 1
    assert o.select_worker("u4pru") == "cloud"
    _, o = make(workers=(("cloud", "", 10), ("e3", "u4pzz", 5), ("e5", "u4pru", 5)))
    assert o.select_worker("u4pru") == "e5"
    assert o.select_worker("u4pqq", "min_bandwidth") == "e3"


def test_select_worker_tie_breaks():
    _, o = make(workers=(("cloud", "", 10), ("eB", "u4pr0", 5), ("eA", "u4pr1", 5)))
    assert o.select_worker("u4prz") == "eA"
    o.workers["eA"].load = 2
    assert o.select_worker("u4prz") == "eB"


def test_select_worker_errors():
    _, o = make()
    with pytest.raises(PlacementError):
        o.select_worker("u4pru")
    _, o = make(policy=Policy.for_mode("cloud"), workers=WORKERS)
    assert o.select_worker("u4pru") == "cloud"


def test_node_joined_migrates_colocated_cloud_task():
    _, o = make(workers=(("cloud", "", 10),))
    o.register_function(speed_fn())
    o.on_event(appear("c1", cell="u4pru"))
    o.on_event(appear("c2", cell="s0000"))
    acts = o.on_worker_heartbeat({"worker_id": "edgeA", "node_id": "edgeA",
                                  "geohash": "u4pru", "capacity": 4})
    assert kinds(acts) == [A.ADD_TASK, A.REMOVE_TASK]
    assert acts[0].worker_id == "edgeA" and acts[1].worker_id == "cloud"
    assert acts[0].migration_id == acts[1].migration_id
    assert o.migrations[0]["kind"] == "cloud->edge"
    assert o.placement()[("speed", "c1")][0] == "edgeA"


def test_producer_moved_same_cell_is_empty():
    _, o = make(workers=WORKERS)
    o.register_function(speed_fn())
    o.on_event(appear("c1"))
    assert o.plan_migration(ProducerMoved("c1", "u4pru")) == []


def test_producer_moved_to_other_edge():
    _, o = make(workers=WORKERS)
    o.register_function(speed_fn())
    o.on_event(appear("c1"))
    acts = o.plan_migration(ProducerMoved("c1", "u0yj0"))
    assert [(a.kind, a.worker_id) for a in acts] == [(A.ADD_TASK, "edgeB"),
                                                    (A.REMOVE_TASK, "edgeA")]
    assert o.migrations[-1]["kind"] == "edge->edge"


def test_update_event_migrates_when_producer_moves():
    _, o = make(workers=WORKERS)
    o.register_function(speed_fn())
    o.on_event(appear("c1"))
    ev = AvailabilityEvent(UPDATE, car("c1", cell="u0yj0", broker="edgeB/broker"), "speed#0")
    acts = o.on_event(ev)
    assert kinds(acts) == [A.ADD_TASK, A.REMOVE_TASK]
    assert acts[0].spec.inputs[0].broker == "edgeB/broker"


def test_overload_evicts_min_priority():
    _, o = make(workers=(("cloud", "", 10), ("edgeA", "u4pru", 3)))
    for p, name in ((30, "f30"), (10, "f10"), (20, "f20")):
        o.register_function(speed_fn(name, priority=p))
        o.on_event(appear("c1", sub=f"{name}#0"))
    assert o.workers["edgeA"].load == 3
    o.workers["edgeA"].capacity = 2
    acts = o.plan_migration(WorkerOverloaded("edgeA"))
    assert [(a.kind, a.worker_id) for a in acts] == [(A.ADD_TASK, "cloud"),
                                                    (A.REMOVE_TASK, "edgeA")]
    assert acts[0].spec.function == "f10"
    assert o.migrations[-1]["kind"] == "edge->cloud"


def test_heartbeat_under_and_over_capacity():
    _, o = make(workers=(("cloud", "", 10), ("edgeA", "u4pru", 2)))
    o.register_function(speed_fn())
    o.on_event(appear("c1"))
    o.on_event(appear("c2"))
    hb = {"worker_id": "edgeA", "node_id": "edgeA", "geohash": "u4pru", "capacity": 2}
    assert o.on_worker_heartbeat(hb) == []
    acts = o.on_worker_heartbeat(dict(hb, reserved=1))
    assert kinds(acts) == [A.ADD_TASK, A.REMOVE_TASK]


def test_missed_heartbeats_mark_dead_and_replan():
    env, o = make(workers=(("cloud", "", 10), ("edgeA", "u4pru", 2)), heartbeat_s=5.0)
    o.register_function(speed_fn())
    o.on_event(appear("c1"))
    env.t = 14_000_000
    o.on_worker_heartbeat({"worker_id": "cloud", "node_id": "cloud", "is_cloud": True,
                           "capacity": 10})
    assert o.tick() == [] and o.workers["edgeA"].alive
    env.t = 15_000_001
    acts = o.tick()
    assert not o.workers["edgeA"].alive
    assert [(a.kind, a.worker_id) for a in acts] == [(A.ADD_TASK, "cloud")]


def test_placement_deferred_until_capacity():
    _, o = make(workers=(("edgeA", "u4pru", 1),))
    o.register_function(speed_fn())
    o.on_event(appear("c1"))
    assert o.on_event(appear("c2")) == []
    assert ("speed", "c2") in o.deferred
    o.on_event(disappear("c1"))
    assert ("speed", "c2") not in o.placement()
    assert kinds(o.tick()) == [A.ADD_TASK]
    assert ("speed", "c2") in o.placement() and not o.deferred


def test_rejection_defers_and_retries():
    _, o = make(workers=WORKERS)
    o.register_function(speed_fn())
    (add,) = o.on_event(appear("c1"))
    acts = o.on_report({"task_id": add.task_id, "status": "rejected"})
    assert [(a.kind, a.worker_id) for a in acts] == [(A.ADD_TASK, "edgeB")]


def test_multi_input_attach_and_release():
    _, o = make(workers=WORKERS)
    f = FogFunction("j", "dummy", (InputSelector("Car"),
                                   InputSelector("Road", group_by=PER_ENTITY_TYPE)))
    o.register_function(f)
    road = AvailabilityRegistration("r1", "Road", frozenset(), "edge1/broker", "u4pru")
    assert o.on_event(AvailabilityEvent(APPEAR, road, "j#1")) == []
    assert kinds(o.on_event(appear("c1", sub="j#0"))) == [A.ADD_TASK]
    assert kinds(o.on_event(appear("c2", sub="j#0"))) == [A.ADD_TASK]
    acts = o.on_event(AvailabilityEvent(DISAPPEAR, road, "j#1"))
    assert kinds(acts) == [A.REMOVE_INPUT, A.REMOVE_INPUT]


def test_dump_state_shape():
    env, o = make(workers=WORKERS)
    o.register_function(speed_fn())
    o.on_event(appear("c1"))
    o.handle(m.Message(m.DUMP_STATE, "cli", o.addr, {}))
    (st,) = env.take(m.STATE)
    assert st.body["tasks"]["speed"]["c1"]["worker_id"] == "edgeA"
    assert set(st.body["workers"]) == {"cloud", "edgeA", "edgeB"}


def test_task_created_and_moved_in_one_tick_is_never_sent():
    env, o = make(workers=(("cloud", "", 10), ("edgeA", "u0yj0", 1), ("edgeB", "u0yj1", 1)))
    o.register_function(speed_fn())
    o.on_event(appear("c0", cell="u0yj0"))
    o.on_event(appear("c1", cell="u0yj1"))
    env.take()
    env.t = 16_000_000
    for w in ("cloud", "edgeB"):
        o.workers[w].last_heartbeat = env.t
    acts = o.tick()
    # c0's replacement would land on the cloud and move straight on to edgeB
    assert sorted((a.kind, a.task_id, a.worker_id) for a in acts) == [
        (A.ADD_TASK, "speed:c0#3", "edgeB"),
        (A.ADD_TASK, "speed:c1#2", "cloud"),
        (A.REMOVE_TASK, "speed:c1#1", "edgeB"),
    ]
    assert len(env.take(m.ACTION)) == 3
    assert [x["task"] for x in o.migrations] == ["speed:c1#2"]
    assert "speed:c0#2" not in o.by_id
