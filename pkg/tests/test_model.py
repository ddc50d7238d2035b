"""Domain model: classification helpers, schedule windows, summary
invariants."""

from __future__ import annotations

import datetime as dt
import random

import pytest

from poolgaze.model import (
    UTC,
    DailySummary,
    DisplayClass,
    JobInterval,
    MachineInfo,
    MINUTES_PER_WEEK,
    PeriodSummary,
    Phase,
    QueueRow,
    QueueSummary,
    ScheduleWindow,
    ScheduleWindows,
    Segment,
    SlotActivity,
    SlotObservation,
    SlotState,
    job_phase,
    schedule_allows,
    set_pool_timezone,
    slot_display_class,
)

from conftest import MONDAY, ts


# --- display classes and phases ---------------------------------------------

@pytest.mark.parametrize(
    "state,activity,expected",
    [
        (SlotState.CLAIMED, SlotActivity.BUSY, DisplayClass.RUNNING_RED),
        (SlotState.OWNER, SlotActivity.IDLE, DisplayClass.OWNER_BLUE),
        (SlotState.DRAINED, SlotActivity.RETIRING, DisplayClass.OTHER_GRAY),
        (SlotState.CLAIMED, SlotActivity.SUSPENDED, DisplayClass.SUSPENDED_AMBER),
        (SlotState.UNCLAIMED, SlotActivity.IDLE, DisplayClass.IDLE_GREEN),
        (SlotState.UNCLAIMED, SlotActivity.BUSY, DisplayClass.OTHER_GRAY),
        (SlotState.CLAIMED, SlotActivity.IDLE, DisplayClass.OTHER_GRAY),
        (SlotState.OWNER, SlotActivity.BUSY, DisplayClass.OWNER_BLUE),
        (SlotState.MATCHED, SlotActivity.IDLE, DisplayClass.OTHER_GRAY),
    ],
)
def test_slot_display_class(state, activity, expected):
    assert slot_display_class(state, activity) is expected


@pytest.mark.parametrize(
    "state,activity,expected",
    [
        (SlotState.CLAIMED, SlotActivity.BUSY, Phase.RUNNING),
        (SlotState.CLAIMED, SlotActivity.SUSPENDED, Phase.SUSPENDED),
        (SlotState.UNCLAIMED, SlotActivity.IDLE, None),
        (SlotState.CLAIMED, SlotActivity.IDLE, None),
        (SlotState.OWNER, SlotActivity.BUSY, None),
    ],
)
def test_job_phase(state, activity, expected):
    assert job_phase(state, activity) == expected


def test_display_and_phase_are_consistent():
    for state in SlotState:
        for activity in SlotActivity:
            phase = job_phase(state, activity)
            cls = slot_display_class(state, activity)
            assert (phase is Phase.RUNNING) == (cls is DisplayClass.RUNNING_RED)
            assert (phase is Phase.SUSPENDED) == (cls is DisplayClass.SUSPENDED_AMBER)


def test_display_class_matches_shared_fixture():
    # The same fixture pins the dashboard's color mapping; both sides must
    # agree with this file, never with each other directly.
    import json
    from pathlib import Path

    fixture = json.loads(
        (Path(__file__).parent / "fixtures" / "display_classes.json").read_text()
    )
    assert len(fixture) == len(SlotState) * len(SlotActivity)
    for entry in fixture:
        got = slot_display_class(
            SlotState(entry["state"]), SlotActivity(entry["activity"])
        )
        assert got.value == entry["display_class"], entry


# --- schedule windows --------------------------------------------------------

def covered_minutes(windows: list[tuple[int, str, str]]) -> set[int]:
    """Brute-force oracle: expand each window into its minute-of-week set by
    walking forward one minute at a time (end inclusive, wrap via modulo)."""

    def hhmm(text: str) -> int:
        h, m = text.split(":")
        return int(h) * 60 + int(m)

    covered: set[int] = set()
    for day, start, end in windows:
        cur = day * 1440 + hhmm(start)
        last = day * 1440 + hhmm(end)
        if hhmm(end) < hhmm(start):
            last += 1440
        while True:
            covered.add(cur % MINUTES_PER_WEEK)
            if cur == last:
                break
            cur += 1
    return covered


def week_instant(minute_of_week: int) -> dt.datetime:
    # MONDAY is a Monday, so minute-of-week 0 is its midnight.
    return ts(2014, 6, 2) + dt.timedelta(minutes=minute_of_week)


def make_windows(spec: list[tuple[int, str, str]]) -> ScheduleWindows:
    return ScheduleWindows(tuple(ScheduleWindow(*w) for w in spec))


def test_weekend_window_allows_saturday_morning():
    windows = make_windows([(5, "00:00", "23:59"), (6, "00:00", "23:59")])
    saturday_10 = ts(2014, 6, 7, 10, 0)
    assert schedule_allows(windows, saturday_10) is True
    assert schedule_allows(windows, ts(2014, 6, 4, 10, 0)) is False  # Wednesday


def test_midnight_wrap_covers_early_tuesday():
    # Expected value derived from the minute-set oracle.
    spec = [(0, "20:00", "08:00")]
    tuesday_2am = ts(2014, 6, 3, 2, 0)
    minute = 1 * 1440 + 2 * 60
    assert minute in covered_minutes(spec)
    assert schedule_allows(make_windows(spec), tuesday_2am) is True
    assert schedule_allows(make_windows(spec), ts(2014, 6, 3, 9, 0)) is False


def test_empty_schedule_never_allows():
    windows = ScheduleWindows(())
    for hour in (0, 6, 12, 23):
        assert schedule_allows(windows, ts(2014, 6, 7, hour, 30)) is False


def test_sunday_wrap_reaches_monday():
    spec = [(6, "22:00", "03:00")]
    oracle = covered_minutes(spec)
    assert 0 in oracle  # Monday 00:00 via wrap
    assert schedule_allows(make_windows(spec), week_instant(0)) is True
    assert schedule_allows(make_windows(spec), week_instant(3 * 60 + 1)) is False


def test_schedule_agrees_with_minute_oracle_over_random_schedules():
    rng = random.Random(4217)
    instants = [week_instant(m) for m in range(MINUTES_PER_WEEK)]
    for _ in range(1000):
        n_windows = rng.randint(0, 4)
        spec = []
        for _ in range(n_windows):
            day = rng.randrange(7)
            start = f"{rng.randrange(24):02d}:{rng.randrange(60):02d}"
            end = f"{rng.randrange(24):02d}:{rng.randrange(60):02d}"
            spec.append((day, start, end))
        oracle = covered_minutes(spec)
        windows = make_windows(spec)
        mismatches = [
            m
            for m in range(MINUTES_PER_WEEK)
            if schedule_allows(windows, instants[m]) != (m in oracle)
        ]
        assert mismatches == [], f"schedule {spec} disagrees at minutes {mismatches[:5]}"


def test_schedule_honors_pool_timezone():
    windows = make_windows([(0, "10:00", "11:00")])  # Monday 10:00-11:00 local
    instant = ts(2014, 6, 2, 9, 30)  # 09:30 UTC
    assert schedule_allows(windows, instant) is False
    set_pool_timezone("Europe/Madrid")  # UTC+2 in June: local 11:30... outside
    try:
        assert schedule_allows(windows, instant) is False
        assert schedule_allows(windows, ts(2014, 6, 2, 8, 30)) is True  # 10:30 local
    finally:
        set_pool_timezone(None)


def test_bad_window_times_rejected():
    with pytest.raises(ValueError):
        ScheduleWindow(0, "24:00", "08:00")
    with pytest.raises(ValueError):
        ScheduleWindow(7, "10:00", "11:00")
    with pytest.raises(ValueError):
        ScheduleWindow(0, "9:00", "11:00")  # must be zero-padded HH:MM


# --- observations and machine info -------------------------------------------

def test_claimed_requires_job_fields():
    with pytest.raises(ValueError):
        SlotObservation(
            timestamp=ts(2014, 6, 2, 10, 5),
            machine="epico",
            slot=1,
            state=SlotState.CLAIMED,
            activity=SlotActivity.BUSY,
            load=1.0,
        )


def test_unclaimed_forbids_job_fields():
    with pytest.raises(ValueError):
        SlotObservation(
            timestamp=ts(2014, 6, 2, 10, 5),
            machine="epico",
            slot=1,
            state=SlotState.UNCLAIMED,
            activity=SlotActivity.IDLE,
            load=0.0,
            job_id="1.0",
            owner="alice",
        )


def test_load_quantized_to_two_decimals():
    o = SlotObservation(
        timestamp=ts(2014, 6, 2, 10, 5),
        machine="epico",
        slot=1,
        state=SlotState.UNCLAIMED,
        activity=SlotActivity.IDLE,
        load=0.123,
    )
    assert o.load == 0.12


def test_machine_name_cannot_contain_delimiter():
    with pytest.raises(ValueError):
        SlotObservation(
            timestamp=ts(2014, 6, 2, 10, 5),
            machine="epi|co",
            slot=1,
            state=SlotState.UNCLAIMED,
            activity=SlotActivity.IDLE,
            load=0.0,
        )


def test_naive_timestamp_rejected():
    with pytest.raises(ValueError):
        SlotObservation(
            timestamp=dt.datetime(2014, 6, 2, 10, 5),
            machine="epico",
            slot=1,
            state=SlotState.UNCLAIMED,
            activity=SlotActivity.IDLE,
            load=0.0,
        )


def make_machine_info(**overrides) -> MachineInfo:
    base = dict(
        machine="epico",
        slot_count=2,
        os_name="Linux",
        os_version="fedora-20",
        memory_mb_total=8192,
        memory_mb_per_slot=(4096, 4096),
        disk_mb_free_total=50000,
        disk_mb_free_per_slot=(25000, 25000),
        load_avg_total=1.5,
        load_avg_condor=1.0,
    )
    base.update(overrides)
    return MachineInfo(**base)


def test_machine_info_per_slot_length_checked():
    with pytest.raises(ValueError):
        make_machine_info(memory_mb_per_slot=(8192,))


def test_condor_load_jitter_allowance():
    make_machine_info(load_avg_total=1.0, load_avg_condor=1.01)  # allowed
    with pytest.raises(ValueError):
        make_machine_info(load_avg_total=1.0, load_avg_condor=1.02)


# --- job intervals -----------------------------------------------------------

def seg(phase, t0, t1):
    return Segment(phase=phase, start=t0, end=t1)


def test_interval_segments_must_tile():
    t0 = ts(2014, 6, 2, 0, 0)
    good = JobInterval(
        machine="epico",
        slot=1,
        job_id="1.0",
        owner="alice",
        start=t0,
        end=t0 + dt.timedelta(seconds=900),
        segments=(
            seg(Phase.RUNNING, t0, t0 + dt.timedelta(seconds=600)),
            seg(Phase.SUSPENDED, t0 + dt.timedelta(seconds=600), t0 + dt.timedelta(seconds=900)),
        ),
    )
    assert good.duration_s == 900
    assert good.phase_seconds(Phase.RUNNING) == 600

    with pytest.raises(ValueError):  # gap between segments
        JobInterval(
            machine="epico",
            slot=1,
            job_id="1.0",
            owner="alice",
            start=t0,
            end=t0 + dt.timedelta(seconds=900),
            segments=(
                seg(Phase.RUNNING, t0, t0 + dt.timedelta(seconds=300)),
                seg(Phase.SUSPENDED, t0 + dt.timedelta(seconds=600), t0 + dt.timedelta(seconds=900)),
            ),
        )
    with pytest.raises(ValueError):  # adjacent same phase
        JobInterval(
            machine="epico",
            slot=1,
            job_id="1.0",
            owner="alice",
            start=t0,
            end=t0 + dt.timedelta(seconds=600),
            segments=(
                seg(Phase.RUNNING, t0, t0 + dt.timedelta(seconds=300)),
                seg(Phase.RUNNING, t0 + dt.timedelta(seconds=300), t0 + dt.timedelta(seconds=600)),
            ),
        )


# --- accounting summaries ------------------------------------------------------

def test_daily_summary_build_empty_day():
    s = DailySummary.build("epico", MONDAY, 8, running_s=0, suspended_s=0)
    assert s.theoretical_s == 691200
    assert s.owner_idle_s == 691200
    assert s.owner_idle_pct == 100.0
    assert s.condor_total_s == 0


def test_daily_summary_build_mixed_day():
    s = DailySummary.build("epico", MONDAY, 1, running_s=3600, suspended_s=600)
    assert s.owner_idle_s == 82200
    assert round(s.owner_idle_pct, 2) == 95.14
    assert round(s.running_pct, 2) == 4.17
    assert round(s.suspended_pct, 2) == 0.69
    assert s.running_avg_slot_s == 3600.0
    total_pct = s.owner_idle_pct + s.running_pct + s.suspended_pct
    assert abs(total_pct - 100.0) <= 0.01


def test_daily_summary_rejects_inconsistent_fields():
    good = DailySummary.build("epico", MONDAY, 1, 3600, 600)
    with pytest.raises(ValueError):
        DailySummary(
            **{
                **good.__dict__,
                "owner_idle_s": good.owner_idle_s - 1,
            }
        )


def test_daily_summary_rejects_overfull_day():
    with pytest.raises(ValueError):
        DailySummary.build("epico", MONDAY, 1, 86400, 1)


def test_period_summary_build_and_totals():
    days = [
        DailySummary.build("epico", MONDAY + dt.timedelta(days=i), 4, 3600, 0)
        for i in range(7)
    ]
    period = PeriodSummary.build("epico", MONDAY, 4, days)
    assert period.span_days == 7
    assert period.totals["running_s"] == 25200
    assert period.avg_per_day_s["running_s"] == 3600.0
    assert period.avg_per_day_slot_s["running_s"] == 900.0
    assert period.totals["theoretical_s"] == 7 * 4 * 86400


def test_period_summary_validates_totals():
    days = [DailySummary.build("epico", MONDAY, 1, 0, 0)]
    with pytest.raises(ValueError):
        PeriodSummary(
            machine="epico",
            start_date=MONDAY,
            span_days=1,
            slot_count=1,
            per_day=tuple(days),
            totals={
                "theoretical_s": 1,
                "owner_idle_s": 0,
                "condor_total_s": 0,
                "running_s": 0,
                "suspended_s": 0,
            },
            avg_per_day_s={},
            avg_per_day_slot_s={},
        )


# --- queue summary -------------------------------------------------------------

def test_queue_summary_totals_are_column_sums():
    q = QueueSummary.build(
        [QueueRow("alice", 5, 10, 0), QueueRow("bob", 2, 0, 1)]
    )
    assert (q.total_running, q.total_idle, q.total_held) == (7, 10, 1)


def test_queue_summary_rejects_bad_totals():
    with pytest.raises(ValueError):
        QueueSummary(
            rows=(QueueRow("alice", 1, 0, 0),),
            total_running=2,
            total_idle=0,
            total_held=0,
        )


def test_queue_row_rejects_negative_counts():
    with pytest.raises(ValueError):
        QueueRow("alice", -1, 0, 0)
