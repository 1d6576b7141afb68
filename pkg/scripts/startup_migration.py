"""Startup decomposition and migration latency with configurable launch costs.

    python scripts/startup_migration.py --fetch-ms 5000 --launch-ms 2000 --terminate-ms 300
"""

from __future__ import annotations

import argparse

from fogrune.sim.bench import bench_migration, bench_startup
from fogrune.worker import LaunchTiming


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fetch-ms", type=float, default=5000.0)
    ap.add_argument("--launch-ms", type=float, default=2000.0)
    ap.add_argument("--terminate-ms", type=float, default=300.0)
    args = ap.parse_args()
    timing = LaunchTiming(fetch_ms=args.fetch_ms, launch_ms=args.launch_ms,
                          terminate_ms=args.terminate_ms)

    print("startup")
    for r in bench_startup(timing).extra["rows"]:
        print(f"  {r['scenario']:18} decision {r['decision_ms']:8.3f} ms"
              f"  virtual {r['virtual_ms']:9.1f} ms  total {r['startup_ms']:9.1f} ms")

    row = bench_migration(timing).extra["rows"][0]
    start, stop, mig = row["start_ms"], row["terminate_ms"], row["migration_ms"]
    print("migration")
    print(f"  start {start:.1f} ms, terminate {stop:.1f} ms")
    print(f"  measured {mig:.1f} ms ({row['kind']}); max {max(start, stop):.1f}, "
          f"sum {start + stop:.1f}")


if __name__ == "__main__":
    main()
