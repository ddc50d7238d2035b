"""Domain types shared across the stack, plus the pure classification helpers.

Everything here is an immutable value: constructors validate, instances are
frozen dataclasses, and all timestamps are timezone-aware UTC with whole
seconds.  Day boundaries and accounting are UTC throughout; the only place a
different time zone enters is schedule-window evaluation, controlled by a
single process-wide setting (see :func:`set_pool_timezone`).
"""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, field
from zoneinfo import ZoneInfo

UTC = dt.timezone.utc

SECONDS_PER_DAY = 86400
MINUTES_PER_WEEK = 7 * 1440

# Process-wide zone used when evaluating schedule windows.  Accounting is
# always UTC; this only affects which local minute an instant maps to.
_pool_tz: dt.tzinfo = UTC


def set_pool_timezone(tz: str | dt.tzinfo | None) -> None:
    """Set the pool time zone for schedule evaluation (None resets to UTC)."""
    global _pool_tz
    if tz is None:
        _pool_tz = UTC
    elif isinstance(tz, str):
        _pool_tz = ZoneInfo(tz)
    else:
        _pool_tz = tz


def get_pool_timezone() -> dt.tzinfo:
    return _pool_tz


class SlotState(enum.Enum):
    OWNER = "Owner"
    CLAIMED = "Claimed"
    UNCLAIMED = "Unclaimed"
    MATCHED = "Matched"
    PREEMPTING = "Preempting"
    DRAINED = "Drained"


class SlotActivity(enum.Enum):
    BUSY = "Busy"
    SUSPENDED = "Suspended"
    IDLE = "Idle"
    BENCHMARKING = "Benchmarking"
    RETIRING = "Retiring"
    VACATING = "Vacating"


class DisplayClass(enum.Enum):
    """Panoramic-grid cell colors for a slot."""

    OWNER_BLUE = "OwnerBlue"
    RUNNING_RED = "RunningRed"
    IDLE_GREEN = "IdleGreen"
    SUSPENDED_AMBER = "SuspendedAmber"
    OTHER_GRAY = "OtherGray"


class Phase(enum.Enum):
    RUNNING = "Running"
    SUSPENDED = "Suspended"


def slot_display_class(state: SlotState, activity: SlotActivity) -> DisplayClass:
    """Map a (state, activity) pair to its grid color.

    Total function: Claimed+Busy is red, Claimed+Suspended amber, any Owner
    state blue, Unclaimed+Idle green, everything else gray.
    """
    if state is SlotState.CLAIMED:
        if activity is SlotActivity.BUSY:
            return DisplayClass.RUNNING_RED
        if activity is SlotActivity.SUSPENDED:
            return DisplayClass.SUSPENDED_AMBER
        return DisplayClass.OTHER_GRAY
    if state is SlotState.OWNER:
        return DisplayClass.OWNER_BLUE
    if state is SlotState.UNCLAIMED and activity is SlotActivity.IDLE:
        return DisplayClass.IDLE_GREEN
    return DisplayClass.OTHER_GRAY


def job_phase(state: SlotState, activity: SlotActivity) -> Phase | None:
    """Job phase carried by a slot sample, if any.

    Only Claimed+Busy (running) and Claimed+Suspended (suspended) denote a
    job execution; every other pair carries no job time.
    """
    if state is SlotState.CLAIMED:
        if activity is SlotActivity.BUSY:
            return Phase.RUNNING
        if activity is SlotActivity.SUSPENDED:
            return Phase.SUSPENDED
    return None


_FIELD_FORBIDDEN = ("|", "\n", "\r")


def _check_name(value: str, what: str) -> None:
    if not value:
        raise ValueError(f"{what} must be non-empty")
    for ch in _FIELD_FORBIDDEN:
        if ch in value:
            raise ValueError(f"{what} must not contain {ch!r}: {value!r}")


def _check_utc_instant(value: dt.datetime, what: str) -> None:
    if value.tzinfo is None or value.utcoffset() != dt.timedelta(0):
        raise ValueError(f"{what} must be timezone-aware UTC")
    if value.microsecond != 0:
        raise ValueError(f"{what} must have whole-second resolution")


def _quantize_load(value: float, what: str) -> float:
    if not (value >= 0):
        raise ValueError(f"{what} must be non-negative, got {value!r}")
    # Loads live at two-decimal resolution (the wire format's precision);
    # quantizing here is what makes parse∘render an exact identity.
    return round(float(value), 2)


@dataclass(frozen=True)
class ScheduleWindow:
    """One weekly execution window; end < start wraps into the next day.

    day_of_week uses 0=Monday .. 6=Sunday.  Times are minute-resolution
    "HH:MM" strings and the end minute is inclusive, so 00:00-23:59 covers a
    whole day.
    """

    day_of_week: int
    start: str
    end: str

    def __post_init__(self) -> None:
        if not 0 <= self.day_of_week <= 6:
            raise ValueError(f"day_of_week out of range: {self.day_of_week}")
        start_min = _parse_hhmm(self.start)
        end_min = _parse_hhmm(self.end)
        first = self.day_of_week * 1440 + start_min
        last = self.day_of_week * 1440 + end_min
        if end_min < start_min:
            last += 1440
        object.__setattr__(self, "_first_minute", first)
        object.__setattr__(self, "_last_minute", last)


def _parse_hhmm(text: str) -> int:
    parts = text.split(":")
    if len(parts) != 2 or len(parts[0]) != 2 or len(parts[1]) != 2:
        raise ValueError(f"bad HH:MM time: {text!r}")
    if not (parts[0].isdigit() and parts[1].isdigit()):
        raise ValueError(f"bad HH:MM time: {text!r}")
    hh, mm = int(parts[0]), int(parts[1])
    if hh > 23 or mm > 59:
        raise ValueError(f"bad HH:MM time: {text!r}")
    return hh * 60 + mm


@dataclass(frozen=True)
class ScheduleWindows:
    """Weekly windows during which a machine accepts jobs.

    An empty window list means "never allowed"; an unrestricted machine is
    modeled as having no ScheduleWindows at all (None).
    """

    windows: tuple[ScheduleWindow, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "windows", tuple(self.windows))


def schedule_allows(
    restriction: ScheduleWindows,
    t: dt.datetime,
    tz: dt.tzinfo | None = None,
) -> bool:
    """True iff t falls inside any window, honoring midnight wrap.

    The instant is converted to the pool time zone (default from
    :func:`set_pool_timezone`), truncated to its minute-of-week, and tested
    against each window's inclusive minute range.
    """
    if t.tzinfo is None:
        raise ValueError("schedule_allows requires an aware instant")
    local = t.astimezone(tz or _pool_tz)
    minute = local.weekday() * 1440 + local.hour * 60 + local.minute
    for w in restriction.windows:
        first, last = w._first_minute, w._last_minute
        if first <= minute <= last:
            return True
        # Window tail that wrapped past Sunday midnight.
        if last >= MINUTES_PER_WEEK and minute <= last - MINUTES_PER_WEEK:
            return True
    return False


@dataclass(frozen=True)
class SlotObservation:
    """One sampled fact: at `timestamp`, slot `slot` of `machine` was in
    (state, activity), optionally running job `job_id` for `owner`.

    job_id/owner are present iff state is Claimed.
    """

    timestamp: dt.datetime
    machine: str
    slot: int
    state: SlotState
    activity: SlotActivity
    load: float
    job_id: str | None = None
    owner: str | None = None

    def __post_init__(self) -> None:
        _check_utc_instant(self.timestamp, "timestamp")
        _check_name(self.machine, "machine")
        if self.slot < 1:
            raise ValueError(f"slot index must be >= 1, got {self.slot}")
        object.__setattr__(self, "load", _quantize_load(self.load, "load"))
        claimed = self.state is SlotState.CLAIMED
        if claimed:
            if self.job_id is None or self.owner is None:
                raise ValueError("Claimed slot requires job_id and owner")
            _check_name(self.job_id, "job_id")
            _check_name(self.owner, "owner")
        elif self.job_id is not None or self.owner is not None:
            raise ValueError("job_id/owner only allowed on Claimed slots")

    @property
    def phase(self) -> Phase | None:
        return job_phase(self.state, self.activity)

    @property
    def display_class(self) -> DisplayClass:
        return slot_display_class(self.state, self.activity)


@dataclass(frozen=True)
class MachineInfo:
    """Live attributes of one machine as shown in the panoramic view.

    Per-slot lists are parallel to slot indices 1..slot_count.  Totals are
    machine-level figures, not sums of the per-slot values.
    """

    machine: str
    slot_count: int
    os_name: str
    os_version: str
    memory_mb_total: int
    memory_mb_per_slot: tuple[int, ...]
    disk_mb_free_total: int
    disk_mb_free_per_slot: tuple[int, ...]
    load_avg_total: float
    load_avg_condor: float
    restriction: ScheduleWindows | None = None
    last_job_time: dt.datetime | None = None
    reachable: bool = True

    def __post_init__(self) -> None:
        _check_name(self.machine, "machine")
        if self.slot_count < 1:
            raise ValueError("slot_count must be >= 1")
        _check_name(self.os_name, "os_name")
        _check_name(self.os_version, "os_version")
        object.__setattr__(self, "memory_mb_per_slot", tuple(self.memory_mb_per_slot))
        object.__setattr__(
            self, "disk_mb_free_per_slot", tuple(self.disk_mb_free_per_slot)
        )
        for label, per_slot in (
            ("memory_mb_per_slot", self.memory_mb_per_slot),
            ("disk_mb_free_per_slot", self.disk_mb_free_per_slot),
        ):
            if len(per_slot) != self.slot_count:
                raise ValueError(f"{label} must have slot_count entries")
            if any(v < 0 for v in per_slot):
                raise ValueError(f"{label} entries must be non-negative")
        if self.memory_mb_total < 0 or self.disk_mb_free_total < 0:
            raise ValueError("machine totals must be non-negative")
        object.__setattr__(
            self, "load_avg_total", _quantize_load(self.load_avg_total, "load_avg_total")
        )
        object.__setattr__(
            self,
            "load_avg_condor",
            _quantize_load(self.load_avg_condor, "load_avg_condor"),
        )
        # 0.01 allowance: the two load figures come from separate probes.
        if self.load_avg_condor > self.load_avg_total + 0.01:
            raise ValueError("load_avg_condor exceeds load_avg_total")
        if self.last_job_time is not None:
            _check_utc_instant(self.last_job_time, "last_job_time")


@dataclass(frozen=True)
class Segment:
    """One phase stretch inside a JobInterval (half-open [start, end))."""

    phase: Phase
    start: dt.datetime
    end: dt.datetime

    def __post_init__(self) -> None:
        _check_utc_instant(self.start, "segment start")
        _check_utc_instant(self.end, "segment end")
        if self.start >= self.end:
            raise ValueError("segment start must precede end")

    @property
    def duration_s(self) -> int:
        return int((self.end - self.start).total_seconds())


@dataclass(frozen=True)
class JobInterval:
    """A reconstructed contiguous execution of one job on one slot.

    Segments tile [start, end) exactly, with no gaps or overlaps, and
    adjacent segments always differ in phase.
    """

    machine: str
    slot: int
    job_id: str
    owner: str
    start: dt.datetime
    end: dt.datetime
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        _check_name(self.machine, "machine")
        _check_name(self.job_id, "job_id")
        _check_name(self.owner, "owner")
        if self.slot < 1:
            raise ValueError("slot index must be >= 1")
        if self.start >= self.end:
            raise ValueError("interval start must precede end")
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("interval requires at least one segment")
        if segs[0].start != self.start or segs[-1].end != self.end:
            raise ValueError("segments must tile [start, end) exactly")
        for prev, cur in zip(segs, segs[1:]):
            if prev.end != cur.start:
                raise ValueError("segments must tile with no gaps or overlaps")
            if prev.phase is cur.phase:
                raise ValueError("adjacent segments must differ in phase")

    @property
    def duration_s(self) -> int:
        return int((self.end - self.start).total_seconds())

    def phase_seconds(self, phase: Phase) -> int:
        return sum(s.duration_s for s in self.segments if s.phase is phase)


@dataclass(frozen=True)
class DailySummary:
    """The daily accounting table for one machine.

    theoretical_s is slot_count x 86400; owner/idle is the residual after
    running and suspended time, so the three always sum to the theoretical
    maximum exactly.  Percentages are taken against theoretical_s.
    """

    machine: str
    date: dt.date
    slot_count: int
    theoretical_s: int
    owner_idle_s: int
    condor_total_s: int
    running_s: int
    suspended_s: int
    owner_idle_avg_slot_s: float
    owner_idle_pct: float
    condor_total_avg_slot_s: float
    condor_total_pct: float
    running_avg_slot_s: float
    running_pct: float
    suspended_avg_slot_s: float
    suspended_pct: float

    def __post_init__(self) -> None:
        if self.theoretical_s != self.slot_count * SECONDS_PER_DAY:
            raise ValueError("theoretical_s must be slot_count * 86400")
        if self.condor_total_s != self.running_s + self.suspended_s:
            raise ValueError("condor_total_s must equal running_s + suspended_s")
        if self.owner_idle_s != self.theoretical_s - self.condor_total_s:
            raise ValueError("owner_idle_s must be the residual")
        if min(self.running_s, self.suspended_s, self.owner_idle_s) < 0:
            raise ValueError("negative accounting figure")
        pct_sum = self.owner_idle_pct + self.running_pct + self.suspended_pct
        if abs(pct_sum - 100.0) > 0.01:
            raise ValueError(f"percentages must sum to 100, got {pct_sum}")

    @classmethod
    def build(
        cls,
        machine: str,
        date: dt.date,
        slot_count: int,
        running_s: int,
        suspended_s: int,
    ) -> "DailySummary":
        """Compute the full table from the two measured figures."""
        if slot_count < 1:
            raise ValueError("slot_count must be >= 1")
        theoretical = slot_count * SECONDS_PER_DAY
        condor = running_s + suspended_s
        if condor > theoretical:
            raise ValueError("condor time exceeds theoretical maximum")
        owner_idle = theoretical - condor

        def avg(v: int) -> float:
            return v / slot_count

        def pct(v: int) -> float:
            return v * 100.0 / theoretical

        return cls(
            machine=machine,
            date=date,
            slot_count=slot_count,
            theoretical_s=theoretical,
            owner_idle_s=owner_idle,
            condor_total_s=condor,
            running_s=running_s,
            suspended_s=suspended_s,
            owner_idle_avg_slot_s=avg(owner_idle),
            owner_idle_pct=pct(owner_idle),
            condor_total_avg_slot_s=avg(condor),
            condor_total_pct=pct(condor),
            running_avg_slot_s=avg(running_s),
            running_pct=pct(running_s),
            suspended_avg_slot_s=avg(suspended_s),
            suspended_pct=pct(suspended_s),
        )


_FIGURES = ("theoretical_s", "owner_idle_s", "condor_total_s", "running_s", "suspended_s")


@dataclass(frozen=True)
class PeriodSummary:
    """Week or month accounting: per-day tables plus totals and averages.

    totals are the field-wise sums of the per-day entries; averages divide by
    span_days and additionally by slot_count for the per-day/slot figures.
    """

    machine: str
    start_date: dt.date
    span_days: int
    slot_count: int
    per_day: tuple[DailySummary, ...]
    totals: dict[str, int]
    avg_per_day_s: dict[str, float]
    avg_per_day_slot_s: dict[str, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_day", tuple(self.per_day))
        if len(self.per_day) != self.span_days:
            raise ValueError("per_day must have span_days entries")
        for name in _FIGURES:
            total = sum(getattr(d, name) for d in self.per_day)
            if self.totals.get(name) != total:
                raise ValueError(f"totals[{name}] must equal sum over days")
            if self.avg_per_day_s.get(name) != total / self.span_days:
                raise ValueError(f"avg_per_day_s[{name}] inconsistent")
            expected = total / self.span_days / self.slot_count
            if self.avg_per_day_slot_s.get(name) != expected:
                raise ValueError(f"avg_per_day_slot_s[{name}] inconsistent")

    @classmethod
    def build(
        cls,
        machine: str,
        start_date: dt.date,
        slot_count: int,
        per_day: list[DailySummary],
    ) -> "PeriodSummary":
        span = len(per_day)
        totals = {n: sum(getattr(d, n) for d in per_day) for n in _FIGURES}
        return cls(
            machine=machine,
            start_date=start_date,
            span_days=span,
            slot_count=slot_count,
            per_day=tuple(per_day),
            totals=totals,
            avg_per_day_s={n: v / span for n, v in totals.items()},
            avg_per_day_slot_s={n: v / span / slot_count for n, v in totals.items()},
        )


@dataclass(frozen=True)
class QueueRow:
    user: str
    running: int
    idle: int
    held: int

    def __post_init__(self) -> None:
        _check_name(self.user, "user")
        if min(self.running, self.idle, self.held) < 0:
            raise ValueError("queue counts must be non-negative")


@dataclass(frozen=True)
class QueueSummary:
    """Live per-user job counts with a computed totals row."""

    rows: tuple[QueueRow, ...]
    total_running: int
    total_idle: int
    total_held: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))
        if self.total_running != sum(r.running for r in self.rows):
            raise ValueError("total_running must be the column sum")
        if self.total_idle != sum(r.idle for r in self.rows):
            raise ValueError("total_idle must be the column sum")
        if self.total_held != sum(r.held for r in self.rows):
            raise ValueError("total_held must be the column sum")

    @classmethod
    def build(cls, rows: list[QueueRow]) -> "QueueSummary":
        return cls(
            rows=tuple(rows),
            total_running=sum(r.running for r in rows),
            total_idle=sum(r.idle for r in rows),
            total_held=sum(r.held for r in rows),
        )


@dataclass(frozen=True)
class MachineSnapshot:
    """One machine inside a PoolSnapshot: live info plus per-slot samples.

    time_in_state_s is parallel to slots; zero when no history is available
    (the API service fills it in from storage).
    """

    info: MachineInfo
    slots: tuple[SlotObservation, ...]
    time_in_state_s: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "slots", tuple(self.slots))
        tis = tuple(self.time_in_state_s)
        if not tis:
            tis = (0,) * len(self.slots)
        if len(tis) != len(self.slots):
            raise ValueError("time_in_state_s must be parallel to slots")
        object.__setattr__(self, "time_in_state_s", tis)
        for obs in self.slots:
            if obs.machine != self.info.machine:
                raise ValueError("slot observation for a different machine")
            if obs.slot > self.info.slot_count:
                raise ValueError(
                    f"slot {obs.slot} exceeds declared count {self.info.slot_count}"
                )


@dataclass(frozen=True)
class PoolSnapshot:
    """Live view of the whole pool at one instant.

    Machine names are unique; registered-but-silent machines appear with
    reachable=False and no slot samples.  queue is None when the snapshot was
    taken without queue data.
    """

    taken_at: dt.datetime
    machines: tuple[MachineSnapshot, ...]
    queue: QueueSummary | None = None

    def __post_init__(self) -> None:
        _check_utc_instant(self.taken_at, "taken_at")
        object.__setattr__(self, "machines", tuple(self.machines))
        names = [m.info.machine for m in self.machines]
        if len(names) != len(set(names)):
            raise ValueError("machine names must be unique")

    def machine(self, name: str) -> MachineSnapshot | None:
        for m in self.machines:
            if m.info.machine == name:
                return m
        return None
