import itertools

import pytest
from hypothesis import given, strategies as st

from fogrune.entity import (
    Attribute,
    Blob,
    Constraint,
    ContextEntity,
    EntityError,
    EntityUpdate,
    Selector,
    canonical_json,
    entity_from_update,
    matches,
    merge_update,
    project,
    project_update,
    serialized_size,
    value_from_json,
    value_to_json,
)
from fogrune.geo import GeohashPrefix, GeoPoint
from strategies import attributes, entities, selectors, update_for, values


def car(**attrs):
    return ContextEntity("c1", "Car", {k: Attribute(k, v, 1) for k, v in attrs.items()})


def test_latest_wins():
    e = ContextEntity("x", "Room", {"temp": Attribute("temp", 20, 1)})
    out = merge_update(e, EntityUpdate.of("x", "Room", Attribute("temp", 21, 2)))
    assert out.value("temp") == 21.0 and out.attributes["temp"].timestamp == 2


def test_stale_update_ignored():
    e = ContextEntity("x", "Room", {"temp": Attribute("temp", 20, 2)})
    out = merge_update(e, EntityUpdate.of("x", "Room", Attribute("temp", 19, 1)))
    assert out == e


def test_equal_timestamp_incoming_wins():
    e = ContextEntity("x", "Room", {"temp": Attribute("temp", 20, 5)})
    out = merge_update(e, EntityUpdate.of("x", "Room", Attribute("temp", 22, 5)))
    assert out.value("temp") == 22.0


def test_removed_and_location():
    e = ContextEntity("x", "Room", {"a": Attribute("a", 1, 1), "b": Attribute("b", 2, 1)},
                      GeoPoint(1, 1))
    out = merge_update(e, EntityUpdate.of("x", "Room", removed=("b",)))
    assert set(out.attributes) == {"a"} and out.location == GeoPoint(1, 1)
    moved = merge_update(out, EntityUpdate.of("x", "Room", location=GeoPoint(2, 2)))
    assert moved.location == GeoPoint(2, 2)


@pytest.mark.parametrize("uid,utype", [("y", "Room"), ("x", "Car")])
def test_merge_rejects_mismatch(uid, utype):
    e = ContextEntity("x", "Room")
    with pytest.raises(EntityError):
        merge_update(e, EntityUpdate.of(uid, utype, Attribute("a", 1, 1)))


def test_update_changed_removed_disjoint():
    with pytest.raises(EntityError):
        EntityUpdate("x", "Room", {"a": Attribute("a", 1)}, ("a",))


def test_selector_examples():
    e = car(speed=80)
    assert matches(e, Selector("Car", constraints=(Constraint("speed", "gt", 70),)))
    assert not matches(e, Selector("Road"))
    assert not matches(e, Selector("Car", constraints=(Constraint("missing", "eq", 1),)))


def test_locationless_entity_rejected_by_geo_scope():
    assert not matches(car(speed=1), Selector("Car", scope=GeohashPrefix("u")))


def test_ordering_op_needs_number():
    with pytest.raises(EntityError):
        Constraint("kind", "lt", "red")


def test_project_examples():
    e = car(a=1, b=2, c=3)
    assert set(project(e, ["a"]).attributes) == {"a"}
    assert project(e, []) == e
    assert project(e, ["a"]).id == e.id


def test_projection_shrinks_blob_entities():
    e = ContextEntity("c1", "Car", {"speed": Attribute("speed", 3, 1),
                                    "payload": Attribute("payload", Blob(1682), 1)})
    assert serialized_size(project(e, ["speed"])) < serialized_size(e)
    assert serialized_size(e) - serialized_size(project(e, ["speed"])) > 1682


def test_blob_counts_its_size():
    small = serialized_size({"v": value_to_json(Blob(0))})
    assert serialized_size({"v": value_to_json(Blob(1000))}) == small + 1000 + 3


def test_attribute_named_blob_is_not_a_payload():
    plain = {"blob": {"size": 10, "tag": "x", "other": 1}}
    assert serialized_size(plain) == len(canonical_json(plain))


@given(values)
def test_value_json_roundtrip(v):
    from fogrune.entity import normalize_value
    assert value_from_json(value_to_json(v)) == normalize_value(v)


@given(entities())
def test_entity_json_roundtrip(e):
    assert ContextEntity.from_json(e.to_json()) == e


@given(entities(), entities())
def test_serialized_size_deterministic(a, b):
    assert serialized_size(a) == serialized_size(ContextEntity.from_json(a.to_json()))
    if a == b:
        assert serialized_size(a) == serialized_size(b)


@given(entities(), selectors())
def test_projection_keeps_match_decision(e, sel):
    keep = sel.referenced_attributes()
    assert matches(project(e, keep), sel) == matches(e, sel)


@given(entities(), st.lists(st.sampled_from(["speed", "temp", "kind"]), max_size=3))
def test_projected_update_subset(e, names):
    u = update_for(e, list(e.attributes.values()))
    p = project_update(u, names)
    if names:
        assert set(p.changed) <= set(names)
    else:
        assert p == u


@given(entities(), st.lists(attributes(ts=st.integers(0, 10_000)), min_size=1, max_size=4,
                             unique_by=lambda a: a.timestamp))
def test_replay_any_order_same_entity(e, attrs):
    # brute force over every ordering; oracle: the newest version of each attribute,
    # where an update beats a stored attribute with the same timestamp
    expected = dict(e.attributes)
    for a in attrs:
        cur = expected.get(a.name)
        if cur is None or a.timestamp > cur.timestamp or (
                a.timestamp == cur.timestamp and cur is e.attributes.get(a.name)):
            expected[a.name] = a
    updates = [update_for(e, [a]) for a in attrs]
    for order in itertools.permutations(updates):
        out = e
        for u in order:
            out = merge_update(out, u)
        assert dict(out.attributes) == expected


def test_entity_from_update():
    u = EntityUpdate.of("c", "Car", Attribute("s", 1, 3), location=GeoPoint(1, 2))
    e = entity_from_update(u)
    assert e.value("s") == 1.0 and e.location == GeoPoint(1, 2)
