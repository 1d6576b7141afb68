"""Cross-node traffic and service latency for the three programming models.

Runs the static car scenario with small and big payloads in cloud, edge and
fog mode, then the mobile scenario in edge and fog mode, and prints a table.

    python scripts/efficiency_table.py [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

from fogrune.sim.config import load_config
from fogrune.sim.scenario import run_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="126,1682")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--json", help="also write the rows here")
    args = ap.parse_args()

    static = load_config(str(SCENARIOS / "cars_static.json"))
    mobile = load_config(str(SCENARIOS / "cars_mobile.json"))
    if args.seed is not None:
        static, mobile = static.with_(seed=args.seed), mobile.with_(seed=args.seed)

    rows = []
    t0 = time.perf_counter()
    for size in (int(s) for s in args.sizes.split(",")):
        cfg = static.with_(devices=tuple(replace(d, payload_bytes=size) for d in static.devices))
        for mode in ("cloud", "edge", "fog"):
            rows.append(("static", size, mode, run_scenario(cfg.with_(mode=mode))))
    for mode in ("edge", "fog"):
        rows.append(("mobile", mobile.devices[0].payload_bytes, mode,
                     run_scenario(mobile.with_(mode=mode))))
    wall = time.perf_counter() - t0

    print(f"{'scenario':8} {'payload':>7} {'mode':5} {'traffic MB':>11} "
          f"{'latency mean ms':>16} {'p95 ms':>8}")
    out = []
    for scen, size, mode, r in rows:
        mb = r.cross_node_traffic_bytes["total"] / 1e6
        lat = r.service_latency_ms
        print(f"{scen:8} {size:>7} {mode:5} {mb:>11.3f} {lat['mean']:>16.1f} {lat['p95']:>8.1f}")
        out.append({"scenario": scen, "payload_bytes": size, "mode": mode,
                    "traffic_bytes": r.cross_node_traffic_bytes["total"],
                    "latency_ms": lat})
    print(f"\n{len(rows)} runs in {wall:.1f}s wall")
    if args.json:
        Path(args.json).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
