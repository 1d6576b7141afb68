"""Simulated IoT devices publishing a moving entity."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable

from fogrune import messages as m
from fogrune.entity import Attribute, Blob, EntityUpdate
from fogrune.geo import GeoPoint, geohash_bbox, geohash_encode
from fogrune.sim.config import DeviceSpec

# keep positions away from cell borders so the encoded cell is unambiguous
_MARGIN = 0.1


def _inside(rng: random.Random, cell: str) -> GeoPoint:
    lat_lo, lat_hi, lon_lo, lon_hi = geohash_bbox(cell)
    fy = rng.uniform(_MARGIN, 1 - _MARGIN)
    fx = rng.uniform(_MARGIN, 1 - _MARGIN)
    return GeoPoint(lat_lo + fy * (lat_hi - lat_lo), lon_lo + fx * (lon_hi - lon_lo))


def _drift(rng: random.Random, p: GeoPoint, cell: str, step: float) -> GeoPoint:
    lat_lo, lat_hi, lon_lo, lon_hi = geohash_bbox(cell)
    dy = rng.uniform(-step, step) * (lat_hi - lat_lo)
    dx = rng.uniform(-step, step) * (lon_hi - lon_lo)
    lat = min(max(p.lat + dy, lat_lo + _MARGIN * (lat_hi - lat_lo)),
              lat_hi - _MARGIN * (lat_hi - lat_lo))
    lon = min(max(p.lon + dx, lon_lo + _MARGIN * (lon_hi - lon_lo)),
              lon_hi - _MARGIN * (lon_hi - lon_lo))
    return GeoPoint(lat, lon)


@dataclass
class Move:
    at_us: int
    cell: str


def plan_moves(spec: DeviceSpec, index: int, home_cell: str,
               rng: random.Random) -> list[Move]:
    mob = spec.mobility
    if mob.kind == "random":
        lo, hi = mob.window_s
        times = sorted(rng.uniform(lo, hi) for _ in range(mob.moves))
        moves, cur = [], home_cell
        for t in times:
            others = [c for c in spec.cells if c != cur] or [cur]
            cur = rng.choice(others)
            moves.append(Move(int(t * 1e6), cur))
        return moves
    if mob.kind == "trace":
        return [Move(int(at * 1e6), cell) for at, cell, devs in sorted(mob.trace)
                if devs is None or index in devs]
    return []


class Device:
    """One entity producer.

    All randomness comes from a per-device RNG seeded from the scenario seed
    and the device id, and moves are applied lazily on the next publish, so
    the trajectory is identical whatever the placement mode does.
    """

    def __init__(self, device_id: str, index: int, spec: DeviceSpec, seed: int,
                 env: m.Env, route: Callable[["Device"], tuple[str, str]],
                 start_us: int = 0):
        self.device_id = device_id
        self.index = index
        self.spec = spec
        self.env = env
        self.route = route
        self.rng = random.Random(f"{seed}:{device_id}")
        self.cell = spec.cells[index % len(spec.cells)]
        self.position = _inside(self.rng, self.cell)
        self.moves = plan_moves(spec, index, self.cell, self.rng)
        self.interval_us = int(spec.update_interval_ms * 1000)
        jitter = self.rng.randrange(self.interval_us)
        self.first_us = start_us + (jitter if spec.start_jitter else 0)
        self.last_us: int | None = None
        self.published = 0
        self.stop_us: int | None = None

    @property
    def geohash(self) -> str:
        return geohash_encode(self.position, 8)

    def start(self) -> None:
        self.env.call_later(self.first_us - self.env.now(), self.tick)

    def tick(self) -> None:
        now = self.env.now()
        if self.stop_us is not None and now >= self.stop_us:
            return
        prev = self.position
        while self.moves and self.moves[0].at_us <= now:
            self.cell = self.moves.pop(0).cell
            self.position = _inside(self.rng, self.cell)
        if self.position == prev:
            self.position = _drift(self.rng, prev, self.cell, self.spec.step)
        dt_ms = self.interval_us / 1000 if self.last_us is None else (now - self.last_us) / 1000
        self.last_us = now
        src = self.device_id
        update = EntityUpdate.of(
            self.device_id, self.spec.entity_type,
            Attribute("location", self.position, now, src),
            Attribute("prev_location", prev, now, src),
            Attribute("dt_ms", dt_ms, now, src),
            Attribute("payload", Blob(self.spec.payload_bytes, "raw"), now, src),
            location=self.position,
        )
        access, broker = self.route(self)
        self.env.send(m.Message(m.PUBLISH, m.address(access, f"device:{self.device_id}"),
                                broker, {"update": update.to_json(), "owner": self.device_id},
                                from_device=True))
        self.published += 1
        self.env.call_later(self.interval_us, self.tick)
