"""Hypothesis strategies shared by the test modules."""

from __future__ import annotations

from hypothesis import strategies as st

from fogrune.entity import Attribute, Blob, Constraint, ContextEntity, EntityUpdate, Selector
from fogrune.geo import GLOBAL, Circle, GeohashPrefix, GeoPoint

ATTR_NAMES = ["speed", "temp", "kind", "flag", "pos", "payload"]
TYPES = ["Car", "Road", "Sensor"]
TEXTS = ["a", "b", "red", "blue"]

lats = st.floats(-89.0, 89.0, allow_nan=False)
lons = st.floats(-179.0, 179.0, allow_nan=False)
points = st.builds(GeoPoint, lats, lons)
# points clustered around a small region so geo scopes actually bite
local_points = st.builds(GeoPoint, st.floats(48.0, 48.4), st.floats(11.3, 11.7))

values = st.one_of(
    st.floats(-200, 200, allow_nan=False).map(lambda x: round(x, 2)),
    st.sampled_from(TEXTS),
    st.booleans(),
    local_points,
    st.integers(0, 2000).map(lambda n: Blob(n, "raw")),
)


@st.composite
def attributes(draw, names=ATTR_NAMES, ts=st.integers(0, 1000)):
    name = draw(st.sampled_from(names))
    return Attribute(name, draw(values), draw(ts), draw(st.sampled_from(["s1", "s2"])))


@st.composite
def entities(draw, ids=st.sampled_from([f"e{i}" for i in range(8)])):
    attrs = draw(st.lists(attributes(), max_size=5, unique_by=lambda a: a.name))
    loc = draw(st.one_of(st.none(), local_points))
    return ContextEntity(draw(ids), draw(st.sampled_from(TYPES)),
                         {a.name: a for a in attrs}, loc)


@st.composite
def constraints(draw):
    op = draw(st.sampled_from(["eq", "ne", "lt", "le", "gt", "ge"]))
    if op in ("eq", "ne") and draw(st.booleans()):
        lit = draw(st.sampled_from(TEXTS))
    else:
        lit = float(draw(st.integers(-200, 200)))
    return Constraint(draw(st.sampled_from(ATTR_NAMES)), op, lit)


scopes = st.one_of(
    st.just(GLOBAL),
    st.builds(Circle, local_points, st.floats(100.0, 40_000.0)),
    st.sampled_from(["u", "u2", "u28", "u281", "s", "u0"]).map(GeohashPrefix),
)


@st.composite
def selectors(draw):
    return Selector(
        draw(st.sampled_from(TYPES)),
        tuple(draw(st.lists(st.sampled_from(ATTR_NAMES), max_size=3, unique=True))),
        tuple(draw(st.lists(constraints(), max_size=2))),
        draw(scopes),
        draw(st.one_of(st.none(), st.sampled_from(["e0", "e1", "e2"]))),
    )


def update_for(entity: ContextEntity, attrs, removed=(), location=None) -> EntityUpdate:
    return EntityUpdate(entity.id, entity.entity_type, {a.name: a for a in attrs},
                        tuple(removed), location)
