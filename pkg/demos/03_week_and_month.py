#!/usr/bin/env python3
"""Week and month usage views: per-day stacked figures plus totals and the
per-day / per-day-slot averages.

Requires demo-data from 01_build_synthetic_pool.py.
"""

import datetime as dt
from pathlib import Path

from poolgaze import DataRoot, PeriodSpan, ReconstructionParams, load_registry
from poolgaze.aggregate import period_summary

DEMO_ROOT = Path(__file__).parent / "demo-data"
PARAMS = ReconstructionParams(interval_s=300)


def bar(seconds: int, scale_s: int, width: int = 40) -> str:
    filled = round(width * seconds / scale_s) if scale_s else 0
    return "#" * filled


def main() -> None:
    root = DataRoot(DEMO_ROOT)
    registry = load_registry(root)
    machine = registry.entries[0].machine
    start = (dt.datetime.now(dt.timezone.utc) - dt.timedelta(days=1)).date()

    for span in (PeriodSpan.WEEK, PeriodSpan.MONTH):
        period = period_summary(root, machine, start, span, PARAMS)
        print(f"\n{span.value} view for {machine} from {start} "
              f"({period.span_days} days)")
        scale = period.slot_count * 86400
        for day in period.per_day[:10]:
            print(
                f"  {day.date}  run {day.running_s / 3600:6.1f}h "
                f"susp {day.suspended_s / 3600:5.1f}h  "
                f"|{bar(day.condor_total_s, scale)}"
            )
        if period.span_days > 10:
            print(f"  ... {period.span_days - 10} more days")
        print(
            f"  totals: running {period.totals['running_s'] / 3600:.1f}h, "
            f"suspended {period.totals['suspended_s'] / 3600:.1f}h"
        )
        print(
            f"  avg/day: {period.avg_per_day_s['condor_total_s'] / 3600:.2f}h,"
            f" avg/day/slot: {period.avg_per_day_slot_s['condor_total_s'] / 3600:.2f}h"
        )
        checksum = sum(d.condor_total_s for d in period.per_day)
        assert checksum == period.totals["condor_total_s"]  # exact composition


if __name__ == "__main__":
    main()
