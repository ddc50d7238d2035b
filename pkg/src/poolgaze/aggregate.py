"""Job-timeline reconstruction from polling samples, and the usage accounting
built on top of it (daily table, week/month summaries, concurrency curve).

Sampling semantics ("coverage rule"): an observation at tick t carrying job J
in phase P covers [t, t+interval) of J in P.  Consecutive covers of the same
(slot, job) merge into one interval.  A silent gap g between covers (no
observation of that slot at all) is bridged when interval < g <= gap_limit,
with the earlier phase extended across the gap; a longer gap splits the job
into two intervals.  An observation of the slot that contradicts the open job
(different job, or no job) always closes it at that instant: bridging applies
only to missing polls, never across observed evidence.

This rule makes totals exact multiples of the polling interval on gap-free
streams: running seconds equal interval x (number of Running observations),
an identity the tests rely on.
"""

from __future__ import annotations

import calendar
import datetime as dt
import enum
from dataclasses import dataclass

from .model import (
    UTC,
    SECONDS_PER_DAY,
    DailySummary,
    JobInterval,
    PeriodSummary,
    Phase,
    Segment,
    SlotObservation,
)
from .store import DataRoot, load_registry, read_range


class UnsortedInput(ValueError):
    pass


class MixedMachines(ValueError):
    pass


class SlotCountMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ReconstructionParams:
    """interval_s is the collector's polling period; gaps up to gap_limit_s
    (default 2x, i.e. one lost poll) are bridged instead of splitting jobs."""

    interval_s: int
    gap_limit_s: int | None = None

    def __post_init__(self) -> None:
        if self.interval_s < 1:
            raise ValueError("interval_s must be >= 1")
        if self.gap_limit_s is None:
            object.__setattr__(self, "gap_limit_s", 2 * self.interval_s)
        if self.gap_limit_s < self.interval_s:
            raise ValueError("gap_limit_s must be >= interval_s")


class PeriodSpan(enum.Enum):
    WEEK = "week"
    MONTH = "month"


def span_days_for(span: PeriodSpan, start_date: dt.date) -> int:
    if span is PeriodSpan.WEEK:
        return 7
    return calendar.monthrange(start_date.year, start_date.month)[1]


class _OpenInterval:
    __slots__ = ("job_id", "owner", "start", "last_tick", "segments", "phase")

    def __init__(self, obs: SlotObservation):
        self.job_id = obs.job_id
        self.owner = obs.owner
        self.start = obs.timestamp
        self.last_tick = obs.timestamp
        self.phase = obs.phase
        self.segments: list[tuple[Phase, dt.datetime]] = [(obs.phase, obs.timestamp)]

    def extend(self, obs: SlotObservation) -> None:
        if obs.phase is not self.phase:
            self.segments.append((obs.phase, obs.timestamp))
            self.phase = obs.phase
        self.last_tick = obs.timestamp

    def close(self, machine: str, slot: int, end: dt.datetime) -> JobInterval:
        segs = []
        for i, (phase, seg_start) in enumerate(self.segments):
            seg_end = self.segments[i + 1][1] if i + 1 < len(self.segments) else end
            segs.append(Segment(phase=phase, start=seg_start, end=seg_end))
        return JobInterval(
            machine=machine,
            slot=slot,
            job_id=self.job_id,
            owner=self.owner,
            start=self.start,
            end=end,
            segments=tuple(segs),
        )


def reconstruct_intervals(
    observations: list[SlotObservation], params: ReconstructionParams
) -> dict[int, list[JobInterval]]:
    """Rebuild per-slot job intervals from one machine's sorted observations.

    Returns {slot: [JobInterval, ...]} in time order.  Raises UnsortedInput
    when timestamps go backwards (or a slot is sampled twice at one tick) and
    MixedMachines when observations span machines.
    """
    if not observations:
        return {}
    machine = observations[0].machine
    delta = dt.timedelta(seconds=params.interval_s)
    gap_limit = dt.timedelta(seconds=params.gap_limit_s)

    last_ts: dt.datetime | None = None
    per_slot_last: dict[int, dt.datetime] = {}
    open_intervals: dict[int, _OpenInterval] = {}
    done: dict[int, list[JobInterval]] = {}

    for obs in observations:
        if obs.machine != machine:
            raise MixedMachines(f"{obs.machine!r} mixed with {machine!r}")
        if last_ts is not None and obs.timestamp < last_ts:
            raise UnsortedInput(f"timestamp regression at {obs.timestamp}")
        last_ts = obs.timestamp
        slot_last = per_slot_last.get(obs.slot)
        if slot_last is not None and obs.timestamp <= slot_last:
            raise UnsortedInput(f"slot {obs.slot} sampled twice at {obs.timestamp}")
        per_slot_last[obs.slot] = obs.timestamp

        current = open_intervals.get(obs.slot)
        if current is not None:
            gap = obs.timestamp - current.last_tick
            if obs.phase is not None and obs.job_id == current.job_id and gap <= gap_limit:
                current.extend(obs)
                continue
            # Contradiction or oversized gap: the open job ends.  The new
            # observation supersedes the previous cover's tail, so the end
            # never reaches past it.
            end = min(current.last_tick + delta, obs.timestamp)
            done.setdefault(obs.slot, []).append(current.close(machine, obs.slot, end))
            del open_intervals[obs.slot]
        if obs.phase is not None:
            open_intervals[obs.slot] = _OpenInterval(obs)

    for slot, current in open_intervals.items():
        done.setdefault(slot, []).append(
            current.close(machine, slot, current.last_tick + delta)
        )
    return {slot: done[slot] for slot in sorted(done)}


def _clip_interval(
    interval: JobInterval, lo: dt.datetime, hi: dt.datetime
) -> JobInterval | None:
    if interval.end <= lo or interval.start >= hi:
        return None
    if interval.start >= lo and interval.end <= hi:
        return interval
    segs = []
    for seg in interval.segments:
        s, e = max(seg.start, lo), min(seg.end, hi)
        if s < e:
            segs.append(Segment(phase=seg.phase, start=s, end=e))
    return JobInterval(
        machine=interval.machine,
        slot=interval.slot,
        job_id=interval.job_id,
        owner=interval.owner,
        start=segs[0].start,
        end=segs[-1].end,
        segments=tuple(segs),
    )


def clip_intervals_to_date(
    intervals: list[JobInterval], date: dt.date
) -> list[JobInterval]:
    """Clip to [00:00, 24:00) UTC of `date`, dropping what falls outside."""
    lo = dt.datetime.combine(date, dt.time(0), tzinfo=UTC)
    hi = lo + dt.timedelta(days=1)
    out = []
    for interval in intervals:
        clipped = _clip_interval(interval, lo, hi)
        if clipped is not None:
            out.append(clipped)
    return out


def day_summary(
    machine: str,
    date: dt.date,
    slot_count: int,
    intervals: list[JobInterval],
) -> DailySummary:
    """The daily accounting table from intervals already clipped to `date`."""
    lo = dt.datetime.combine(date, dt.time(0), tzinfo=UTC)
    hi = lo + dt.timedelta(days=1)
    running = suspended = 0
    for interval in intervals:
        if interval.slot > slot_count:
            raise SlotCountMismatch(
                f"interval on slot {interval.slot} but machine has {slot_count}"
            )
        if interval.start < lo or interval.end > hi:
            raise ValueError(f"interval not clipped to {date}")
        running += interval.phase_seconds(Phase.RUNNING)
        suspended += interval.phase_seconds(Phase.SUSPENDED)
    return DailySummary.build(machine, date, slot_count, running, suspended)


def intervals_for_range(
    root: DataRoot,
    machine: str,
    start_date: dt.date,
    span_days: int,
    params: ReconstructionParams,
    *,
    margin_days: int = 1,
) -> dict[int, list[JobInterval]]:
    """Reconstruct over [start - margin, start + span + margin) so intervals
    that straddle the requested boundaries come out whole.

    Reading one margin day each side is always enough: gap bridging never
    spans more than gap_limit_s, which is far below a day.
    """
    read_start = start_date - dt.timedelta(days=margin_days)
    observations: list[SlotObservation] = []
    for _, day_obs in read_range(
        root, machine, read_start, span_days + 2 * margin_days
    ):
        observations.extend(day_obs)
    return reconstruct_intervals(observations, params)


def period_summary(
    root: DataRoot,
    machine: str,
    start_date: dt.date,
    span: PeriodSpan,
    params: ReconstructionParams,
    *,
    slot_count: int | None = None,
) -> PeriodSummary:
    """Week/month accounting: per-day summaries plus exact totals and
    averages.  slot_count defaults to the machine's registry entry."""
    if slot_count is None:
        entry = load_registry(root).get(machine)
        if entry is None:
            raise KeyError(f"machine {machine!r} not in registry")
        slot_count = entry.slot_count
    days = span_days_for(span, start_date)
    by_slot = intervals_for_range(root, machine, start_date, days, params)
    flat = [interval for intervals in by_slot.values() for interval in intervals]
    per_day = []
    for i in range(days):
        date = start_date + dt.timedelta(days=i)
        clipped = clip_intervals_to_date(flat, date)
        per_day.append(day_summary(machine, date, slot_count, clipped))
    return PeriodSummary.build(machine, start_date, slot_count, per_day)


def concurrency_curve(
    intervals: list[JobInterval], date: dt.date
) -> list[tuple[dt.datetime, int, int]]:
    """Step function (t, running_count, suspended_count) over the day.

    Breakpoints sit at every segment boundary; counts are constant between
    breakpoints and each step runs to the next breakpoint (the last one to
    midnight).  Input intervals must be clipped to the date.
    """
    day_start = dt.datetime.combine(date, dt.time(0), tzinfo=UTC)
    day_end = day_start + dt.timedelta(days=1)
    deltas: dict[dt.datetime, list[int]] = {}
    for interval in intervals:
        for seg in interval.segments:
            idx = 0 if seg.phase is Phase.RUNNING else 1
            deltas.setdefault(seg.start, [0, 0])[idx] += 1
            deltas.setdefault(seg.end, [0, 0])[idx] -= 1
    times = sorted(set(deltas) | {day_start})
    steps = []
    running = suspended = 0
    for t in times:
        dr, ds = deltas.get(t, (0, 0))
        running += dr
        suspended += ds
        if t >= day_end:
            continue
        steps.append((t, running, suspended))
    return steps


def sample_coverage(
    observations: list[SlotObservation], date: dt.date, interval_s: int
) -> dict:
    """How much of the day the poll stream actually observed.

    Each distinct tick covers [t, t+interval) clipped to the day; the union
    of covers is reported so the dashboard can gray out blind stretches.
    """
    day_start = dt.datetime.combine(date, dt.time(0), tzinfo=UTC)
    day_end = day_start + dt.timedelta(days=1)
    ticks = sorted({o.timestamp for o in observations if day_start <= o.timestamp < day_end})
    covered = 0
    cursor = day_start
    for t in ticks:
        lo = max(t, cursor)
        hi = min(t + dt.timedelta(seconds=interval_s), day_end)
        if hi > lo:
            covered += int((hi - lo).total_seconds())
            cursor = hi
    expected = -(-SECONDS_PER_DAY // interval_s)
    return {
        "observed_ticks": len(ticks),
        "expected_ticks": expected,
        "covered_s": covered,
        "coverage_pct": round(covered * 100.0 / SECONDS_PER_DAY, 2),
    }
