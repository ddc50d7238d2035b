"""Flat-file store: layout, append/read round-trips, registry, robustness."""

from __future__ import annotations

import datetime as dt
import os
import random

import pytest

from poolgaze.model import ScheduleWindow, ScheduleWindows
from poolgaze.records import FORMAT_HEADER, MalformedRecord, render_record_line
from poolgaze.store import (
    DataRoot,
    IoFailure,
    MachineRegistry,
    RegistryEntry,
    RoutingError,
    WriterLock,
    WriterLockHeld,
    append_observations,
    last_job_time,
    load_registry,
    parse_restriction,
    read_machine_day,
    read_range,
    render_restriction,
    save_registry,
)

from conftest import MONDAY, minfo, obs, running_obs, ts


def test_append_creates_date_tree_and_counts(root):
    t = ts(2014, 6, 2, 10, 5)
    records = [obs(t, slot=s) for s in (1, 2, 3)]
    assert append_observations(root, records) == 3
    path = root.path / "2014" / "06" / "02" / "epico.rec"
    assert path.is_file()
    lines = path.read_text().splitlines()
    assert lines[0] == FORMAT_HEADER
    assert len(lines) == 4


def test_append_routes_by_machine(root):
    t = ts(2014, 6, 2, 10, 5)
    append_observations(root, [obs(t, machine="epico"), obs(t, machine="renta")])
    assert (root.path / "2014" / "06" / "02" / "epico.rec").is_file()
    assert (root.path / "2014" / "06" / "02" / "renta.rec").is_file()


def test_append_routes_by_day(root):
    append_observations(
        root,
        [obs(ts(2014, 6, 2, 23, 55)), obs(ts(2014, 6, 3, 0, 0))],
    )
    assert (root.path / "2014" / "06" / "02" / "epico.rec").is_file()
    assert (root.path / "2014" / "06" / "03" / "epico.rec").is_file()


def test_append_keeps_single_header(root):
    append_observations(root, [obs(ts(2014, 6, 2, 10, 0))])
    append_observations(root, [obs(ts(2014, 6, 2, 10, 5))])
    text = (root.path / "2014" / "06" / "02" / "epico.rec").read_text()
    assert text.count(FORMAT_HEADER) == 1


def test_append_rejects_unroutable_values(root):
    with pytest.raises(RoutingError):
        append_observations(root, ["not a record"])


def test_append_unwritable_root_raises_io_failure(tmp_path):
    # A plain file squatting on the root path makes every mkdir/open fail.
    blocked = tmp_path / "data"
    blocked.write_text("in the way")
    root = DataRoot(blocked)
    with pytest.raises(IoFailure):
        append_observations(root, [obs(ts(2014, 6, 2, 10, 0))])


def test_read_missing_day_is_empty(root):
    assert read_machine_day(root, "epico", MONDAY) == []


def test_write_then_read_round_trip_sorted(root):
    records = [
        running_obs(ts(2014, 6, 2, 10, 10), slot=2),
        obs(ts(2014, 6, 2, 10, 5), slot=1),
        obs(ts(2014, 6, 2, 10, 5), slot=2),
        minfo(ts(2014, 6, 2, 10, 5)),
    ]
    append_observations(root, records)
    result = read_machine_day(root, "epico", MONDAY)
    # M records are kept in the file but not returned here.
    assert len(result) == 3
    assert [(o.timestamp, o.slot) for o in result] == sorted(
        (o.timestamp, o.slot) for o in records if hasattr(o, "state")
    )


def test_corrupt_middle_line_lenient_and_strict(root):
    good = [obs(ts(2014, 6, 2, 10, 0)), obs(ts(2014, 6, 2, 10, 5))]
    path = root.machine_day_file("epico", MONDAY)
    path.parent.mkdir(parents=True)
    path.write_text(
        FORMAT_HEADER + "\n"
        + render_record_line(good[0]) + "\n"
        + "S|garbage line\n"
        + render_record_line(good[1]) + "\n"
    )
    errors = []
    result = read_machine_day(root, "epico", MONDAY, errors=errors)
    assert len(result) == 2
    assert len(errors) == 1
    assert "epico.rec:3" in str(errors[0])
    with pytest.raises(MalformedRecord):
        read_machine_day(root, "epico", MONDAY, strict=True)


def test_trailing_partial_line_ignored(root):
    append_observations(root, [obs(ts(2014, 6, 2, 10, 0))])
    path = root.machine_day_file("epico", MONDAY)
    with path.open("a") as f:
        f.write("S|2014-06-02T10:05:00Z|epi")  # torn mid-append
    errors = []
    result = read_machine_day(root, "epico", MONDAY, errors=errors)
    assert len(result) == 1
    assert errors == []


def test_unknown_header_fails_even_lenient(root):
    path = root.machine_day_file("epico", MONDAY)
    path.parent.mkdir(parents=True)
    path.write_text("#congusto-format 9\n")
    with pytest.raises(MalformedRecord):
        read_machine_day(root, "epico", MONDAY)


def test_read_range_pads_missing_days(root):
    append_observations(root, [obs(ts(2014, 6, 2, 10, 0))])
    append_observations(root, [obs(ts(2014, 6, 4, 10, 0))])
    append_observations(root, [obs(ts(2014, 6, 5, 10, 0))])
    entries = read_range(root, "epico", MONDAY, 7)
    assert len(entries) == 7
    assert [d for d, _ in entries] == [MONDAY + dt.timedelta(days=i) for i in range(7)]
    assert [len(o) for _, o in entries] == [1, 0, 1, 1, 0, 0, 0]


def test_read_range_span_one_equals_day_read(root):
    append_observations(root, [obs(ts(2014, 6, 2, 10, 0))])
    [(date, observations)] = read_range(root, "epico", MONDAY, 1)
    assert date == MONDAY
    assert observations == read_machine_day(root, "epico", MONDAY)


def test_read_range_feb_2014(root):
    entries = read_range(root, "epico", dt.date(2014, 2, 1), 28)
    assert len(entries) == 28
    assert entries[-1][0] == dt.date(2014, 2, 28)


def test_read_range_rejects_bad_span(root):
    with pytest.raises(ValueError):
        read_range(root, "epico", MONDAY, 0)
    with pytest.raises(ValueError):
        read_range(root, "epico", MONDAY, 367)


def test_last_job_time_finds_newest_hit(root):
    yesterday_23 = ts(2014, 6, 1, 23, 0)
    append_observations(root, [running_obs(yesterday_23)])
    append_observations(root, [obs(ts(2014, 6, 2, 10, 0))])  # idle today
    now = ts(2014, 6, 2, 12, 0)
    assert last_job_time(root, "epico", 7, now=now) == yesterday_23


def test_last_job_time_ignores_jobless_records(root):
    append_observations(root, [obs(ts(2014, 6, 2, 10, 0))])
    assert last_job_time(root, "epico", 7, now=ts(2014, 6, 2, 12, 0)) is None


def test_last_job_time_empty_store(root):
    assert last_job_time(root, "epico", 7, now=ts(2014, 6, 2, 12, 0)) is None


def test_last_job_time_stops_at_first_populated_day(root):
    append_observations(root, [running_obs(ts(2014, 5, 20, 8, 0))])
    append_observations(root, [running_obs(ts(2014, 6, 1, 9, 0))])
    got = last_job_time(root, "epico", 30, now=ts(2014, 6, 2, 12, 0))
    assert got == ts(2014, 6, 1, 9, 0)


def test_random_batches_round_trip(root):
    rng = random.Random(99)
    expected = []
    for _ in range(200):
        t = ts(2014, 6, 2) + dt.timedelta(seconds=rng.randrange(0, 86400, 5))
        slot = rng.randint(1, 4)
        expected.append((t, slot))
    unique = sorted(set(expected))
    batch = [obs(t, slot=s, load=rng.random() * 3) for t, s in unique]
    rng.shuffle(batch)
    append_observations(root, batch)
    result = read_machine_day(root, "epico", MONDAY)
    assert [(o.timestamp, o.slot) for o in result] == unique


# --- registry ----------------------------------------------------------------

WEEKENDS = ScheduleWindows(
    (ScheduleWindow(5, "00:00", "23:59"), ScheduleWindow(6, "00:00", "23:59"))
)


def test_registry_round_trip(root):
    registry = MachineRegistry(
        (
            RegistryEntry("epico", 8),
            RegistryEntry("renta", 4, restriction=WEEKENDS),
        )
    )
    save_registry(root, registry)
    assert load_registry(root) == registry
    text = root.registry_file().read_text()
    assert "R|epico|8|" in text
    assert "R|renta|4|5:00:00-23:59;6:00:00-23:59" in text


def test_registry_restriction_specs():
    assert parse_restriction("") is None
    windows = parse_restriction("5:00:00-23:59;6:00:00-23:59")
    assert windows == WEEKENDS
    assert render_restriction(windows) == "5:00:00-23:59;6:00:00-23:59"
    with pytest.raises(MalformedRecord):
        parse_restriction("9:00:00-23:59")
    with pytest.raises(MalformedRecord):
        parse_restriction("monday")


def test_registry_duplicate_names_rejected(root):
    root.path.mkdir(parents=True)
    root.registry_file().write_text(
        FORMAT_HEADER + "\nR|epico|8|\nR|epico|4|\n"
    )
    with pytest.raises(MalformedRecord):
        load_registry(root)


def test_registry_missing_raises_io_failure(root):
    with pytest.raises(IoFailure):
        load_registry(root)


def test_never_allowed_restriction_not_persistable(root):
    registry = MachineRegistry(
        (RegistryEntry("epico", 1, restriction=ScheduleWindows(())),)
    )
    with pytest.raises(ValueError):
        save_registry(root, registry)


def test_writer_lock_is_exclusive(root):
    with WriterLock(root):
        second = WriterLock(root)
        with pytest.raises(WriterLockHeld):
            second.acquire()
    # Released: can be taken again.
    with WriterLock(root):
        pass
