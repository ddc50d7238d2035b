"""Command-line entry points: poolgaze-collect, poolgaze-sim, poolgaze-serve.

Exit codes: 0 on clean stop, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import math
import signal
import sys
import threading

from .collector import (
    CollectorConfig,
    InvalidConfig,
    SimulatorSource,
    SourceUnavailable,
    aligned_tick,
    build_machine_registry,
    build_source,
    poll_once,
    run_loop,
)
from .model import UTC, set_pool_timezone
from .simulate import InvalidScenario, Scenario, load_scenario, simulate, write_ground_truth
from .store import (
    DataRoot,
    MachineRegistry,
    RegistryEntry,
    WriterLock,
    WriterLockHeld,
    save_registry,
)

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
logger = logging.getLogger("poolgaze")


def _stop_event_on_signals() -> threading.Event:
    stop = threading.Event()

    def handler(signum, frame):
        stop.set()

    signal.signal(signal.SIGINT, handler)
    signal.signal(signal.SIGTERM, handler)
    return stop


def collect_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="poolgaze-collect",
        description="Poll a status source and append records to the data root.",
    )
    parser.add_argument("--data-root", required=True)
    parser.add_argument(
        "--source",
        required=True,
        help='cmd:"...", file:PATH, or sim:SCENARIO_FILE (sim: for defaults)',
    )
    parser.add_argument("--interval-s", type=int, default=300)
    parser.add_argument("--lookback-days", type=int, default=30)
    parser.add_argument("--pool-tz", default="UTC")
    parser.add_argument(
        "--once", action="store_true", help="poll one aligned tick and exit (cron mode)"
    )
    parser.add_argument(
        "--build-registry",
        action="store_true",
        help="rebuild machines.reg from current status output",
    )
    args = parser.parse_args(argv)

    try:
        config = CollectorConfig(
            data_root=args.data_root,
            source=args.source,
            interval_s=args.interval_s,
            lookback_days=args.lookback_days,
            pool_tz=args.pool_tz,
        )
        set_pool_timezone(config.pool_tz)
        store = DataRoot(config.data_root)
        source = build_source(config.source)
    except (InvalidConfig, InvalidScenario, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    if args.build_registry:
        try:
            registry = build_machine_registry(source, store)
        except SourceUnavailable as exc:
            print(f"cannot build registry: {exc}", file=sys.stderr)
            return 1
        logger.info("registry saved with %d machines", len(registry.entries))
        if not args.once:
            return 0

    if args.once:
        tick = aligned_tick(dt.datetime.now(UTC).timestamp(), config.interval_s)
        when = dt.datetime.fromtimestamp(tick, UTC)
        try:
            with WriterLock(store):
                report = poll_once(source, store, when)
        except WriterLockHeld as exc:
            print(str(exc), file=sys.stderr)
            return 1
        for err in report.errors:
            logger.warning("%s", err)
        logger.info(
            "poll at %s: %d machines, %d records",
            when.isoformat(),
            report.machines_seen,
            report.records_written,
        )
        return 0

    stop = _stop_event_on_signals()
    logger.info(
        "collecting every %ds into %s (Ctrl-C to stop)",
        config.interval_s,
        store.path,
    )
    try:
        polls = run_loop(config, store, stop)
    except WriterLockHeld as exc:
        print(str(exc), file=sys.stderr)
        return 1
    logger.info("stopped after %d polls", polls)
    return 0


def sim_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="poolgaze-sim",
        description="Write a synthetic data root plus its ground-truth sidecar.",
    )
    parser.add_argument("--scenario", help="scenario file (flat key=value)")
    parser.add_argument("--seed", type=int, help="override the scenario seed")
    parser.add_argument("--emit-days", type=int, default=1)
    parser.add_argument("--data-root", required=True)
    parser.add_argument("--interval-s", type=int, default=300)
    args = parser.parse_args(argv)

    try:
        overrides = {} if args.seed is None else {"seed": args.seed}
        if args.scenario:
            scenario = load_scenario(args.scenario, **overrides)
        else:
            scenario = Scenario(**overrides)
        if args.emit_days < 1:
            raise InvalidScenario("--emit-days must be >= 1")
        if args.interval_s < 1:
            raise InvalidScenario("--interval-s must be >= 1")
    except (InvalidScenario, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    store = DataRoot(args.data_root)
    gt = simulate(scenario)
    source = SimulatorSource(gt)
    emit_s = args.emit_days * 86400
    try:
        with WriterLock(store):
            records = 0
            for tick in range(0, emit_s, args.interval_s):
                when = scenario.start + dt.timedelta(seconds=tick)
                report = poll_once(source, store, when)
                records += report.records_written
            # The simulator knows its own schedule restrictions; keep them in
            # the registry so the panoramic view can show them.
            save_registry(
                store,
                MachineRegistry(
                    tuple(
                        RegistryEntry(m.name, m.slot_count, restriction=m.restriction)
                        for m in gt.machines
                    )
                ),
            )
    except WriterLockHeld as exc:
        print(str(exc), file=sys.stderr)
        return 1
    write_ground_truth(gt, store.path / "ground_truth.json")
    logger.info(
        "wrote %d records over %d day(s) to %s", records, args.emit_days, store.path
    )
    return 0


def serve_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="poolgaze-serve",
        description="Serve the monitoring API over HTTP.",
    )
    parser.add_argument("--data-root", required=True)
    parser.add_argument("--source", required=True)
    parser.add_argument("--listen", default="127.0.0.1:8420")
    parser.add_argument("--refresh-cache-s", type=float, default=5.0)
    parser.add_argument("--interval-s", type=int, default=300)
    parser.add_argument("--lookback-days", type=int, default=30)
    parser.add_argument(
        "--cors-origin",
        action="append",
        default=None,
        help="allowed dashboard origin (repeatable; default *)",
    )
    args = parser.parse_args(argv)

    host, _, port_text = args.listen.rpartition(":")
    if not host or not port_text.isdigit():
        print(f"bad --listen value: {args.listen!r}", file=sys.stderr)
        return 2

    try:
        from .api import create_app

        app = create_app(
            args.data_root,
            args.source,
            interval_s=args.interval_s,
            cache_s=args.refresh_cache_s,
            lookback_days=args.lookback_days,
            cors_origins=tuple(args.cors_origin) if args.cors_origin else ("*",),
        )
    except (InvalidConfig, InvalidScenario, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    import uvicorn

    uvicorn.run(app, host=host, port=int(port_text), log_level="info")
    return 0


def main(argv=None) -> int:  # convenience dispatcher for `python -m poolgaze`
    parser = argparse.ArgumentParser(prog="poolgaze")
    parser.add_argument("command", choices=["collect", "sim", "serve"])
    args, rest = parser.parse_known_args(argv)
    return {"collect": collect_main, "sim": sim_main, "serve": serve_main}[
        args.command
    ](rest)


if __name__ == "__main__":
    sys.exit(main())
