"""Shared test fixtures and small builders."""

from __future__ import annotations

import datetime as dt

import pytest

from poolgaze.model import (
    UTC,
    SlotActivity,
    SlotObservation,
    SlotState,
)
from poolgaze.records import MachineInfoRecord
from poolgaze.store import DataRoot

MONDAY = dt.date(2014, 6, 2)  # canonical test Monday


def ts(*args, **kwargs) -> dt.datetime:
    """UTC datetime shorthand: ts(2014, 6, 2, 10, 5)."""
    return dt.datetime(*args, **kwargs, tzinfo=UTC)


def day_start(date: dt.date) -> dt.datetime:
    return dt.datetime.combine(date, dt.time(0), tzinfo=UTC)


def obs(
    t: dt.datetime,
    machine: str = "epico",
    slot: int = 1,
    state: SlotState = SlotState.UNCLAIMED,
    activity: SlotActivity = SlotActivity.IDLE,
    load: float = 0.02,
    job_id: str | None = None,
    owner: str | None = None,
) -> SlotObservation:
    return SlotObservation(
        timestamp=t,
        machine=machine,
        slot=slot,
        state=state,
        activity=activity,
        load=load,
        job_id=job_id,
        owner=owner,
    )


def running_obs(t, machine="epico", slot=1, job_id="1234.0", owner="alice"):
    return obs(
        t,
        machine=machine,
        slot=slot,
        state=SlotState.CLAIMED,
        activity=SlotActivity.BUSY,
        load=0.98,
        job_id=job_id,
        owner=owner,
    )


def suspended_obs(t, machine="epico", slot=1, job_id="1234.0", owner="alice"):
    return obs(
        t,
        machine=machine,
        slot=slot,
        state=SlotState.CLAIMED,
        activity=SlotActivity.SUSPENDED,
        load=0.01,
        job_id=job_id,
        owner=owner,
    )


def minfo(
    t: dt.datetime,
    machine: str = "epico",
    slot_count: int = 2,
) -> MachineInfoRecord:
    return MachineInfoRecord(
        timestamp=t,
        machine=machine,
        slot_count=slot_count,
        os_name="Linux",
        os_version="fedora-20",
        memory_mb_total=8192,
        memory_mb_per_slot=(4096,) * slot_count,
        disk_mb_free_total=50000,
        disk_mb_free_per_slot=(25000,) * slot_count,
        load_avg_total=1.25,
        load_avg_condor=0.98,
    )


@pytest.fixture
def root(tmp_path) -> DataRoot:
    return DataRoot(tmp_path / "data")
