#!/usr/bin/env python3
"""Daily accounting for one machine: the summary table, the AM/PM job-count
timeline, and the per-slot job detail with phases.

Requires demo-data from 01_build_synthetic_pool.py.
"""

import datetime as dt
from pathlib import Path

from poolgaze import (
    DataRoot,
    Phase,
    ReconstructionParams,
    clip_intervals_to_date,
    concurrency_curve,
    day_summary,
    load_registry,
)
from poolgaze.aggregate import intervals_for_range

DEMO_ROOT = Path(__file__).parent / "demo-data"
PARAMS = ReconstructionParams(interval_s=300)


def pick_machine_and_day(root: DataRoot):
    registry = load_registry(root)
    machine = registry.entries[0].machine
    yesterday = (dt.datetime.now(dt.timezone.utc) - dt.timedelta(days=1)).date()
    return machine, registry.entries[0].slot_count, yesterday


def main() -> None:
    root = DataRoot(DEMO_ROOT)
    machine, slot_count, date = pick_machine_and_day(root)
    print(f"machine {machine} ({slot_count} slots) on {date}\n")

    by_slot = intervals_for_range(root, machine, date, 1, PARAMS)
    flat = [iv for ivs in by_slot.values() for iv in ivs]
    clipped = clip_intervals_to_date(flat, date)

    summary = day_summary(machine, date, slot_count, clipped)
    rows = [
        ("theoretical", summary.theoretical_s, 86400.0, 100.0),
        ("owner/idle", summary.owner_idle_s, summary.owner_idle_avg_slot_s,
         summary.owner_idle_pct),
        ("condor total", summary.condor_total_s, summary.condor_total_avg_slot_s,
         summary.condor_total_pct),
        ("  running", summary.running_s, summary.running_avg_slot_s,
         summary.running_pct),
        ("  suspended", summary.suspended_s, summary.suspended_avg_slot_s,
         summary.suspended_pct),
    ]
    print(f"{'':14s} {'total':>10s} {'avg/slot':>10s} {'% of max':>9s}")
    for name, total, avg, pct in rows:
        print(f"{name:14s} {total / 3600:9.2f}h {avg / 3600:9.2f}h {pct:8.2f}%")

    print("\njob concurrency (one step per change, split AM/PM):")
    curve = concurrency_curve(clipped, date)
    noon = dt.datetime.combine(date, dt.time(12), tzinfo=dt.timezone.utc)
    for half, label in ((lambda t: t < noon, "AM"), (lambda t: t >= noon, "PM")):
        steps = [(t, r, s) for t, r, s in curve if half(t)]
        line = " ".join(f"{t:%H:%M}={r}r/{s}s" for t, r, s in steps[:8])
        print(f"  {label}: {line}{' ...' if len(steps) > 8 else ''}")

    print("\nper-slot details (tooltip fields):")
    for slot in sorted(by_slot):
        for iv in by_slot[slot]:
            if iv.end.date() < date or iv.start.date() > date:
                continue
            phases = ", ".join(
                f"{seg.phase.value} {seg.duration_s // 60}min" for seg in iv.segments
            )
            print(
                f"  slot {slot}: job {iv.job_id} ({iv.owner}) "
                f"{iv.start:%H:%M}-{iv.end:%H:%M} [{phases}]"
            )
    running = sum(iv.phase_seconds(Phase.RUNNING) for iv in clipped)
    assert running == summary.running_s  # accounting and detail always agree


if __name__ == "__main__":
    main()
