"""Metric collection and the JSON report of a scenario run."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

from fogrune.entity import canonical_json


def percentile(values: list[float], q: float) -> float:
    """Nearest-rank percentile (q in 0..100)."""
    if not values:
        return 0.0
    xs = sorted(values)
    k = max(1, math.ceil(q / 100.0 * len(xs)))
    return xs[k - 1]


def summarize(values: list[float]) -> dict:
    if not values:
        return {"count": 0, "mean": 0.0, "p50": 0.0, "p95": 0.0, "max": 0.0}
    return {"count": len(values), "mean": _r(sum(values) / len(values)),
            "p50": _r(percentile(values, 50)), "p95": _r(percentile(values, 95)),
            "max": _r(max(values))}


def _r(x: float) -> float:
    return round(float(x), 6)


@dataclass
class MetricsReport:
    mode: str
    seed: int
    duration_s: float
    cross_node_traffic_bytes: dict = field(default_factory=dict)
    messages: dict = field(default_factory=dict)
    service_latency_ms: dict = field(default_factory=dict)
    startup_latency_ms: dict = field(default_factory=dict)
    migration_latency_ms: dict = field(default_factory=dict)
    migrations: dict = field(default_factory=dict)
    throughput_tasks_per_s: float = 0.0
    decision_latency_ms: dict = field(default_factory=dict)
    tasks: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"


def results_digest(results: dict[str, dict]) -> str:
    return hashlib.sha256(canonical_json(
        {k: results[k] for k in sorted(results)}).encode()).hexdigest()
