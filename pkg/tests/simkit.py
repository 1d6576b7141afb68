"""Small cluster configurations shared by the simulation tests."""

from __future__ import annotations

from fogrune.function import function_from_json
from fogrune.sim.config import DeviceSpec, Mobility, NodeSpec, SimConfig
from fogrune.worker import LaunchTiming

SPEED = function_from_json({
    "name": "speed", "operator": "speed_estimator",
    "inputs": [{"selected_type": "Car", "attribute_set": ["location", "prev_location", "dt_ms"],
                "group_by": "per_entity_id"}],
    "output_types": ["Speed"],
})
FAST = LaunchTiming(fetch_ms=200.0, launch_ms=100.0, terminate_ms=50.0, lanes=4)


def small_cfg(cars: int = 8, mode: str = "fog", seed: int = 1, duration_s: float = 20.0,
              payload: int = 126, mobility: Mobility = Mobility(), edges: int = 2,
              edge_capacity: int = 20, **kw) -> SimConfig:
    nodes = [NodeSpec("cloud", "cloud", "", 100)]
    nodes += [NodeSpec(f"edge{i + 1}", "edge", f"u0yj{i}", edge_capacity) for i in range(edges)]
    devices = (DeviceSpec("Car", cars, payload, 500.0,
                          tuple(f"u0yj{i}k" for i in range(max(edges, 1))), mobility),) \
        if cars else ()
    return SimConfig(nodes=tuple(nodes), seed=seed, duration_s=duration_s, drain_s=3.0,
                     mode=mode, devices=devices, functions=(SPEED,), timing=FAST, **kw)
