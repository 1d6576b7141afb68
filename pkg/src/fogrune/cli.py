"""Command-line front end.

Exit codes: 0 success, 1 validation diagnostics, 2 runtime error.
Machine-readable output goes to stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from fogrune.function import SpecError, function_from_json, validate
from fogrune.sim.bench import bench
from fogrune.sim.config import ConfigError, config_from_json, config_to_json
from fogrune.sim.scenario import Cluster
from fogrune.worker import LaunchTiming

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Invalid(Exception):
    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


def _read_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise _Invalid([f"{path}: malformed JSON: {exc}"]) from exc
    except OSError as exc:
        raise _Invalid([f"{path}: {exc.strerror}"]) from exc


def _load_scenario(path: str, args: argparse.Namespace):
    obj = _read_json(path)
    for flag, key in (("mode", "mode"), ("seed", "seed"), ("duration", "duration_s")):
        value = getattr(args, flag, None)
        if value is not None:
            obj[key] = value
    try:
        return config_from_json(obj)
    except ConfigError as exc:
        raise _Invalid(exc.diagnostics) from exc


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_validate(args: argparse.Namespace) -> int:
    obj = _read_json(args.path)
    if isinstance(obj, dict) and "nodes" in obj:
        _load_scenario(args.path, args)
        return EXIT_OK
    try:
        diags = validate(function_from_json(obj))
    except SpecError as exc:
        diags = exc.diagnostics
    if diags:
        raise _Invalid(diags)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_scenario(args.path, args)
    log_fh = open(args.log_messages, "w") if args.log_messages else None
    try:
        cluster = Cluster(cfg, message_log=log_fh)
        cluster.run()
    finally:
        if log_fh is not None:
            log_fh.close()
    report = cluster.report()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.dumps())
    else:
        sys.stdout.write(report.dumps())
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    params: dict = {"seed": args.seed or 0}
    if args.kind == "throughput":
        params.update(workers=tuple(int(w) for w in args.workers.split(",")),
                      tasks_per_worker=args.tasks_per_worker, launch_ms=args.launch_ms,
                      realtime=not args.virtual)
    else:
        params["timing"] = LaunchTiming(fetch_ms=args.fetch_ms, launch_ms=args.launch_ms,
                                        terminate_ms=args.terminate_ms)
    _emit(bench(args.kind, **params).to_json(), args.out)
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    cfg = _load_scenario(args.scenario, args)
    cluster = Cluster(cfg)
    at = cfg.duration_s + cfg.drain_s if args.at is None else args.at
    cluster.run(until_s=at)
    _emit(cluster.dump(args.what), None)
    return EXIT_OK


def cmd_register(args: argparse.Namespace) -> int:
    obj = _read_json(args.path)
    try:
        f = function_from_json(obj)
    except SpecError as exc:
        raise _Invalid(exc.diagnostics) from exc
    diags = validate(f)
    if diags:
        raise _Invalid(diags)
    target = _read_json(args.target)
    try:
        cfg = config_from_json(target)
    except ConfigError as exc:
        raise _Invalid([f"{args.target}: {d}" for d in exc.diagnostics]) from exc
    if any(g.name == f.name for g in cfg.functions):
        raise _Invalid([f"function {f.name!r} already registered in {args.target}"])
    cfg = replace(cfg, functions=cfg.functions + (f,))
    with open(args.target, "w") as fh:
        json.dump(config_to_json(cfg), fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fogrune", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_flags(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--mode", choices=("cloud", "edge", "fog"))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--duration", type=float, help="virtual seconds")

    sp = sub.add_parser("validate", help="check a function spec or scenario file")
    sp.add_argument("path")
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("run", help="run a scenario and write its metrics report")
    sp.add_argument("path")
    scenario_flags(sp)
    sp.add_argument("--out", help="report path (default: stdout)")
    sp.add_argument("--log-messages", metavar="PATH", help="write every message as NDJSON")
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("bench", help="startup, migration or throughput benchmark")
    sp.add_argument("kind", choices=("startup", "migration", "throughput"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", default="1,2,4,8")
    sp.add_argument("--tasks-per-worker", type=int, default=3)
    sp.add_argument("--fetch-ms", type=float, default=5000.0)
    sp.add_argument("--launch-ms", type=float, default=None)
    sp.add_argument("--terminate-ms", type=float, default=300.0)
    sp.add_argument("--virtual", action="store_true",
                    help="throughput on the virtual clock instead of wall time")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_bench)

    sp = sub.add_parser("inspect", help="run a scenario up to a time and dump state")
    sp.add_argument("what", choices=("tasks", "entities", "workers", "state"))
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--at", type=float, help="virtual seconds (default: end of run)")
    scenario_flags(sp)
    sp.set_defaults(fn=cmd_inspect)

    sp = sub.add_parser("register", help="add a function spec to a scenario file")
    sp.add_argument("path")
    sp.add_argument("--target", required=True, help="scenario file to update")
    sp.set_defaults(fn=cmd_register)
    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("FOGRUNE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    if getattr(args, "kind", None) and args.launch_ms is None:
        args.launch_ms = 500.0 if args.kind == "throughput" else 2000.0
    try:
        return args.fn(args)
    except _Invalid as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - map anything unexpected to exit 2
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
