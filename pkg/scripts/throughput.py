"""Task launch throughput against the number of edge workers.

Launch delays are charged in wall-clock time by default, so the run takes a
few seconds per worker count.

    python scripts/throughput.py --workers 1,2,4,8 [--virtual]
"""

from __future__ import annotations

import argparse

from fogrune.sim.bench import bench_throughput


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workers", default="1,2,4,8")
    ap.add_argument("--tasks-per-worker", type=int, default=3)
    ap.add_argument("--launch-ms", type=float, default=500.0)
    ap.add_argument("--virtual", action="store_true")
    args = ap.parse_args()

    workers = tuple(int(w) for w in args.workers.split(","))
    rep = bench_throughput(workers, args.tasks_per_worker, args.launch_ms,
                           realtime=not args.virtual)
    key = "throughput_virtual" if args.virtual else "throughput_wall"
    base = rep.extra["rows"][0][key] / rep.extra["rows"][0]["workers"]
    print(f"{'W':>3} {'tasks':>6} {'tasks/s':>9} {'vs linear':>10}")
    for r in rep.extra["rows"]:
        dev = r[key] / (r["workers"] * base) - 1
        print(f"{r['workers']:>3} {r['tasks']:>6} {r[key]:>9.2f} {dev:>+10.1%}")


if __name__ == "__main__":
    main()
