"""Message envelope and the environment handle every component runs in.

Addresses are ``"<node>/<component>"`` strings, e.g. ``"edge1/broker"``.
Bodies are plain JSON-ready dicts so their size can be charged to links.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

from fogrune.entity import serialized_size

# broker
PUBLISH = "PUBLISH"
QUERY = "QUERY"
QUERY_RESP = "QUERY_RESP"
SUBSCRIBE = "SUBSCRIBE"
UNSUBSCRIBE = "UNSUBSCRIBE"
NOTIFY = "NOTIFY"
RELEASE = "RELEASE"
# discovery
REGISTER = "REGISTER"
DEREGISTER = "DEREGISTER"
REFRESH = "REFRESH"
SUB_AVAIL = "SUB_AVAIL"
UNSUB_AVAIL = "UNSUB_AVAIL"
AVAIL_EVENT = "AVAIL_EVENT"
QUERY_AVAIL = "QUERY_AVAIL"
QUERY_AVAIL_RESP = "QUERY_AVAIL_RESP"
# orchestrator / worker
REG_FUNC = "REG_FUNC"
ACTION = "ACTION"
HEARTBEAT = "HEARTBEAT"
TASK_REPORT = "TASK_REPORT"
DUMP_STATE = "DUMP_STATE"
STATE = "STATE"


def node_of(address: str) -> str:
    return address.split("/", 1)[0]


def address(node: str, component: str) -> str:
    return f"{node}/{component}"


@dataclass
class Message:
    kind: str
    src: str
    dst: str
    body: dict
    from_device: bool = False
    _size: int | None = field(default=None, repr=False, compare=False)

    @property
    def src_node(self) -> str:
        return node_of(self.src)

    @property
    def dst_node(self) -> str:
        return node_of(self.dst)

    @property
    def size(self) -> int:
        if self._size is None:
            self._size = serialized_size({"kind": self.kind, "src": self.src,
                                          "dst": self.dst, "body": self.body})
        return self._size

    def to_json(self) -> dict:
        return {"kind": self.kind, "src": self.src, "dst": self.dst, "body": self.body}


class Env(Protocol):
    """What a component may do to the outside world."""

    def now(self) -> int:
        """Logical time in microseconds."""

    def send(self, msg: Message) -> None: ...

    def call_later(self, delay_us: int, fn: Callable[..., Any], *args: Any) -> None: ...

    def trace(self, event: str, **fields: Any) -> None: ...


class CollectingEnv:
    """Env that records outgoing messages instead of delivering them.

    Handy for exercising a single component; ``call_later`` callbacks run
    when :meth:`advance` moves the clock past their due time.
    """

    def __init__(self, start_us: int = 0) -> None:
        self.t = start_us
        self.sent: list[Message] = []
        self.traces: list[tuple[str, dict]] = []
        self._timers: list[tuple[int, int, Callable, tuple]] = []
        self._seq = 0

    def now(self) -> int:
        return self.t

    def send(self, msg: Message) -> None:
        self.sent.append(msg)

    def call_later(self, delay_us: int, fn: Callable[..., Any], *args: Any) -> None:
        self._seq += 1
        self._timers.append((self.t + max(0, int(delay_us)), self._seq, fn, args))

    def trace(self, event: str, **fields: Any) -> None:
        self.traces.append((event, fields))

    def advance(self, delta_us: int) -> None:
        target = self.t + delta_us
        while True:
            due = sorted(t for t in self._timers if t[0] <= target)
            if not due:
                break
            item = due[0]
            self._timers.remove(item)
            self.t = item[0]
            item[2](*item[3])
        self.t = target

    def take(self, kind: str | None = None) -> list[Message]:
        out = [m for m in self.sent if kind is None or m.kind == kind]
        self.sent = [m for m in self.sent if not (kind is None or m.kind == kind)]
        return out
