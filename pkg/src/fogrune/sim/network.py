"""Message transport between simulated nodes, with byte accounting."""

from __future__ import annotations

import json
import logging
from collections import Counter
from typing import IO, Any, Callable

from fogrune.messages import Message
from fogrune.sim.engine import Engine

log = logging.getLogger(__name__)


class Network:
    """Delivers messages after their link latency or drops them explicitly.

    Every message ends up in exactly one of ``delivered`` or ``dropped``.
    Cross-node traffic counts messages put on the wire between two different
    nodes; per-link totals are keyed ``"src->dst"``.
    """

    def __init__(self, engine: Engine, latency_us: Callable[[str, str], int],
                 access_us: int = 0, message_log: IO[str] | None = None):
        self.engine = engine
        self._latency_us = latency_us
        self.access_us = access_us
        self.endpoints: dict[str, Callable[[Message], None]] = {}
        self.down: set[str] = set()
        self.taps: list[Callable[[Message], None]] = []
        self.message_log = message_log
        self.traffic_total = 0
        self.traffic_by_link: Counter[str] = Counter()
        self.traffic_by_kind: Counter[str] = Counter()
        self.sent = 0
        self.in_flight = 0
        self.delivered = 0
        self.dropped: Counter[str] = Counter()

    def attach(self, address: str, handler: Callable[[Message], None]) -> None:
        self.endpoints[address] = handler

    def _log(self, entry: dict[str, Any]) -> None:
        if self.message_log is not None:
            self.message_log.write(json.dumps(entry, sort_keys=True, separators=(",", ":")))
            self.message_log.write("\n")

    def send(self, msg: Message) -> None:
        self.sent += 1
        now = self.engine.now()
        src, dst = msg.src_node, msg.dst_node
        if src in self.down or dst in self.down:
            self.dropped["node_down"] += 1
            if self.message_log is not None:
                self._log({"t": now, "kind": msg.kind, "src": msg.src, "dst": msg.dst,
                           "size": msg.size, "dropped": "node_down"})
            return
        delay = 0 if src == dst else self._latency_us(src, dst)
        if msg.from_device:
            delay += self.access_us
        if src != dst:
            self.traffic_total += msg.size
            self.traffic_by_link[f"{src}->{dst}"] += msg.size
            self.traffic_by_kind[msg.kind] += msg.size
        if self.message_log is not None:
            self._log({"t": now, "kind": msg.kind, "src": msg.src, "dst": msg.dst,
                       "size": msg.size, "deliver_at": now + delay})
        self.in_flight += 1
        self.engine.call_later(delay, self._deliver, msg)

    def _deliver(self, msg: Message) -> None:
        self.in_flight -= 1
        if msg.dst_node in self.down:
            self.dropped["node_down"] += 1
            self._log({"t": self.engine.now(), "kind": msg.kind, "dst": msg.dst,
                       "dropped": "node_down_on_arrival"})
            return
        handler = self.endpoints.get(msg.dst)
        if handler is None:
            self.dropped["no_endpoint"] += 1
            self._log({"t": self.engine.now(), "kind": msg.kind, "dst": msg.dst,
                       "dropped": "no_endpoint"})
            log.debug("no endpoint for %s (%s)", msg.dst, msg.kind)
            return
        self.delivered += 1
        for tap in self.taps:
            tap(msg)
        handler(msg)


def recompute_traffic(log_lines) -> tuple[int, dict[str, int]]:
    """Per-link traffic from an NDJSON message log, independent of the counters."""
    total = 0
    by_link: Counter[str] = Counter()
    for line in log_lines:
        e = json.loads(line)
        if "deliver_at" not in e:
            continue
        s, d = e["src"].split("/", 1)[0], e["dst"].split("/", 1)[0]
        if s != d:
            total += e["size"]
            by_link[f"{s}->{d}"] += e["size"]
    return total, dict(by_link)
