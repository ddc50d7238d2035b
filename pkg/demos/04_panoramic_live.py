#!/usr/bin/env python3
"""The live panoramic view as the API computes it: the colored slot grid,
queue table, filters, and a chart from the predefined catalog.

Requires demo-data from 01_build_synthetic_pool.py.  Talks to the service
layer in-process; `poolgaze-serve` exposes exactly the same payloads over
HTTP for the browser dashboard.
"""

import datetime as dt
from pathlib import Path

from poolgaze import Scenario, SimulatorSource, simulate
from poolgaze.api import (
    LiveView,
    apply_panoramic_query,
    build_charts,
    machine_payload,
    parse_panoramic_query,
)
from poolgaze.store import DataRoot

import importlib.util

spec = importlib.util.spec_from_file_location(
    "demo01", Path(__file__).parent / "01_build_synthetic_pool.py"
)
demo01 = importlib.util.module_from_spec(spec)
spec.loader.exec_module(demo01)

DEMO_ROOT = Path(__file__).parent / "demo-data"

CELL = {
    "OwnerBlue": "B",
    "RunningRed": "R",
    "IdleGreen": ".",
    "SuspendedAmber": "s",
    "OtherGray": "?",
}


def main() -> None:
    root = DataRoot(DEMO_ROOT)
    source = SimulatorSource(simulate(demo01.SCENARIO))
    live = LiveView(root, source, cache_s=5.0, lookback_days=30,
                    clock=dt.datetime.now(dt.timezone.utc).timestamp)

    machines, taken_at = live.machines()
    query = parse_panoramic_query(
        {"fields": "name,slots,os,load_total,restrictions,last_job_time"}
    )
    shown, counts = apply_panoramic_query(machines, query)
    print(f"pool at {taken_at:%Y-%m-%d %H:%M:%S}Z  "
          f"({counts['machines_shown']}/{counts['machines_total']} machines, "
          f"{counts['slots_shown']}/{counts['slots_total']} slots)\n")
    for machine in shown:
        payload = machine_payload(machine, query, taken_at)
        cells = "".join(CELL[s["display_class"]] for s in payload.get("slots", []))
        restriction = payload.get("restriction") or "-"
        last = payload.get("last_job_time") or "never"
        print(f"  {payload['name']:8s} [{cells:8s}] load {payload['load_avg_total']:5.2f} "
              f"restr {restriction[:22]:22s} last job {last}")
    print("\n  legend: R running, s suspended, B owner, . idle, ? other")

    queue = live.queue()
    print("\nqueue (live only, never stored):")
    for row in queue.rows:
        print(f"  {row.user:8s} running {row.running:2d} idle {row.idle:2d} "
              f"held {row.held:2d}")
    print(f"  total    running {queue.total_running:2d} idle {queue.total_idle:2d} "
          f"held {queue.total_held:2d}")

    filtered_query = parse_panoramic_query({"slot_state": "Claimed"})
    filtered, fcounts = apply_panoramic_query(machines, filtered_query)
    print(f"\nfilter slot_state=Claimed: {fcounts['machines_shown']} machines, "
          f"{fcounts['slots_shown']} matching slots")

    [chart] = build_charts(shown, ("slots-by-state",), taken_at)
    print(f"\nchart {chart['id']!r}:")
    for point in chart["series"]:
        print(f"  {point['label']:12s} {'#' * point['value']} {point['value']}")


if __name__ == "__main__":
    main()
