"""Deterministic synthetic pool: generates machine/slot/job dynamics, acts as
a status source, and exposes its ground truth as the testing oracle.

Randomness comes from a single PCG64 stream (numpy) seeded with the scenario
seed; every variate is derived from `rng.random()` uniforms via inverse-CDF
transforms (exponential = -mean*ln(1-u), choice = floor(u*n), bernoulli =
u < p).  Draw order is fixed by construction, so a scenario replays to the
bit on any platform.  Language-default/global RNGs are never touched.

Per-slot behavior: a slot idles until a job arrival claims it (Claimed/Busy);
owner activity on the machine suspends running jobs with a configurable
probability (Claimed/Suspended) and resumes them when the owner leaves; the
job then completes and the slot returns to Unclaimed/Idle.  Owner sessions
force slot 1 into the Owner state: arrivals during a session are rejected
pool-wide on that machine and a job already on slot 1 ends when the owner
sits down.  Restricted machines accept jobs only inside their schedule
windows.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    UTC,
    Phase,
    QueueRow,
    QueueSummary,
    ScheduleWindow,
    ScheduleWindows,
    schedule_allows,
)
from .records import render_timestamp, parse_timestamp

DEFAULT_START = dt.datetime(2014, 6, 2, tzinfo=UTC)  # a Monday

# Nights (Mon-Fri 20:00 through 08:00 next day) plus whole weekends.
NIGHTS_AND_WEEKENDS = ScheduleWindows(
    tuple(ScheduleWindow(d, "20:00", "08:00") for d in range(5))
    + (ScheduleWindow(5, "00:00", "23:59"), ScheduleWindow(6, "00:00", "23:59"))
)

_OS_CHOICES = (
    ("Linux", "ubuntu-14.04"),
    ("Linux", "fedora-20"),
    ("Linux", "debian-7"),
    ("Windows", "7-sp1"),
)
_MEMORY_CHOICES = (4096, 8192, 16384, 32768)
_DISK_CHOICES = (20000, 50000, 100000, 240000)

# How long a rejected arrival lingers in the synthetic backlog, as a
# multiple of the mean job length.
_BACKLOG_WAIT_FACTOR = 2.0
_HELD_PROB = 0.05


class InvalidScenario(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    """Generator parameters for one synthetic pool."""

    seed: int = 1
    machines: int = 4
    slots_per_machine: int | tuple[int, ...] = 4
    duration_s: int = 86400
    job_rate_per_slot_hour: float = 0.5
    mean_job_s: float = 5400.0
    owner_rate_per_hour: float = 0.15
    mean_owner_s: float = 2700.0
    suspend_prob: float = 0.7
    restricted_fraction: float = 0.25
    users: tuple[str, ...] = ("alice", "bob", "carol", "dave")
    start: dt.datetime = DEFAULT_START

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise InvalidScenario("seed must fit in 64 bits")
        if self.machines < 1:
            raise InvalidScenario("machines must be >= 1")
        if self.duration_s < 1:
            raise InvalidScenario("duration_s must be >= 1")
        slots = self.slots_per_machine
        if isinstance(slots, int):
            if slots < 1:
                raise InvalidScenario("slots_per_machine must be >= 1")
        else:
            slots = tuple(slots)
            object.__setattr__(self, "slots_per_machine", slots)
            if len(slots) != self.machines:
                raise InvalidScenario("slots_per_machine list must match machines")
            if any(s < 1 for s in slots):
                raise InvalidScenario("slots_per_machine entries must be >= 1")
        for name in (
            "job_rate_per_slot_hour",
            "mean_job_s",
            "owner_rate_per_hour",
            "mean_owner_s",
        ):
            if getattr(self, name) < 0:
                raise InvalidScenario(f"{name} must be >= 0")
        for name in ("suspend_prob", "restricted_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidScenario(f"{name} must be in [0, 1]")
        if not self.users:
            raise InvalidScenario("users must be non-empty")
        object.__setattr__(self, "users", tuple(self.users))
        if self.start.tzinfo is None or self.start.utcoffset() != dt.timedelta(0):
            raise InvalidScenario("start must be a UTC instant")
        if self.start.microsecond != 0 or self.start.second or self.start.minute or self.start.hour:
            # Day-aligned start keeps accounting windows trivial.
            raise InvalidScenario("start must be at 00:00:00 UTC")

    def slot_count(self, machine_index: int) -> int:
        if isinstance(self.slots_per_machine, int):
            return self.slots_per_machine
        return self.slots_per_machine[machine_index]


@dataclass(frozen=True)
class TrueJob:
    """Ground-truth execution of one job on one slot (times are seconds from
    scenario start; segments are half-open and alternate phases)."""

    job_id: str
    owner: str
    segments: tuple[tuple[Phase, float, float], ...]

    @property
    def start(self) -> float:
        return self.segments[0][1]

    @property
    def end(self) -> float:
        return self.segments[-1][2]

    def phase_at(self, t: float) -> Phase | None:
        for phase, s, e in self.segments:
            if s <= t < e:
                return phase
        return None


@dataclass(frozen=True)
class SlotTruth:
    jobs: tuple[TrueJob, ...]
    owner_spans: tuple[tuple[float, float], ...] = ()

    def job_at(self, t: float) -> TrueJob | None:
        for job in self.jobs:
            if job.start <= t < job.end:
                return job
        return None

    def owner_at(self, t: float) -> bool:
        return any(s <= t < e for s, e in self.owner_spans)


@dataclass(frozen=True)
class MachineTruth:
    name: str
    slot_count: int
    os_name: str
    os_version: str
    memory_mb_total: int
    memory_mb_per_slot: tuple[int, ...]
    disk_mb_free_total: int
    disk_mb_free_per_slot: tuple[int, ...]
    restriction: ScheduleWindows | None
    slots: tuple[SlotTruth, ...]


@dataclass(frozen=True)
class QueuedJob:
    """A rejected arrival lingering in the synthetic backlog."""

    user: str
    start: float
    end: float
    held: bool


@dataclass(frozen=True)
class GroundTruth:
    scenario: Scenario
    machines: tuple[MachineTruth, ...]
    backlog: tuple[QueuedJob, ...] = field(default=())

    @property
    def duration_s(self) -> int:
        return self.scenario.duration_s


class _Rng:
    """Uniform-only draws on a PCG64 stream (see module docstring)."""

    def __init__(self, seed: int):
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(self) -> float:
        return float(self._gen.random())

    def exponential(self, mean: float) -> float:
        u = self.uniform()
        return -mean * math.log1p(-u)

    def choice(self, items):
        return items[min(int(self.uniform() * len(items)), len(items) - 1)]

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p


def _merge_spans(spans: list[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[tuple[float, float]] = []
    for s, e in sorted(spans):
        if merged and s <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], e))
        else:
            merged.append((s, e))
    return merged


def _poisson_arrivals(rng: _Rng, rate_per_hour: float, duration: float) -> list[float]:
    if rate_per_hour <= 0:
        return []
    mean_gap = 3600.0 / rate_per_hour
    arrivals = []
    t = rng.exponential(mean_gap)
    while t < duration:
        arrivals.append(t)
        t += rng.exponential(mean_gap)
    return arrivals


def simulate(scenario: Scenario) -> GroundTruth:
    """Generate the full ground truth for a scenario (pure, deterministic)."""
    rng = _Rng(scenario.seed)
    duration = float(scenario.duration_s)
    machines = []
    backlog: list[QueuedJob] = []
    job_seq = 0

    for mi in range(scenario.machines):
        name = f"node{mi:02d}"
        slot_count = scenario.slot_count(mi)
        os_name, os_version = rng.choice(_OS_CHOICES)
        memory = rng.choice(_MEMORY_CHOICES)
        disk = rng.choice(_DISK_CHOICES) + int(rng.uniform() * 5000)
        restricted = rng.bernoulli(scenario.restricted_fraction)
        restriction = NIGHTS_AND_WEEKENDS if restricted else None

        sessions = _merge_spans(
            [
                (a, min(a + rng.exponential(scenario.mean_owner_s), duration))
                for a in _poisson_arrivals(rng, scenario.owner_rate_per_hour, duration)
            ]
        )

        slots = []
        for si in range(1, slot_count + 1):
            jobs: list[TrueJob] = []
            busy_until = 0.0
            for arrival in _poisson_arrivals(
                rng, scenario.job_rate_per_slot_hour, duration
            ):
                user = rng.choice(scenario.users)
                service = max(rng.exponential(scenario.mean_job_s), 1.0)
                held = rng.bernoulli(_HELD_PROB)
                in_session = any(s <= arrival < e for s, e in sessions)
                allowed = restriction is None or schedule_allows(
                    restriction,
                    scenario.start + dt.timedelta(seconds=arrival),
                )
                if arrival < busy_until or in_session or not allowed:
                    wait = _BACKLOG_WAIT_FACTOR * max(scenario.mean_job_s, 1.0)
                    backlog.append(
                        QueuedJob(
                            user=user,
                            start=arrival,
                            end=min(arrival + wait, duration),
                            held=held,
                        )
                    )
                    continue
                job_seq += 1
                job = _execute_job(
                    rng,
                    f"{job_seq}.0",
                    user,
                    arrival,
                    service,
                    sessions,
                    on_owner_slot=(si == 1),
                    suspend_prob=scenario.suspend_prob,
                    duration=duration,
                )
                if job is not None:
                    jobs.append(job)
                    busy_until = job.end
            owner_spans = tuple(sessions) if si == 1 else ()
            slots.append(SlotTruth(jobs=tuple(jobs), owner_spans=owner_spans))

        machines.append(
            MachineTruth(
                name=name,
                slot_count=slot_count,
                os_name=os_name,
                os_version=os_version,
                memory_mb_total=memory,
                memory_mb_per_slot=_split_even(memory, slot_count),
                disk_mb_free_total=disk,
                disk_mb_free_per_slot=_split_even(disk, slot_count),
                restriction=restriction,
                slots=tuple(slots),
            )
        )
    return GroundTruth(
        scenario=scenario, machines=tuple(machines), backlog=tuple(backlog)
    )


def _split_even(total: int, parts: int) -> tuple[int, ...]:
    base = total // parts
    first = total - base * (parts - 1)
    return (first,) + (base,) * (parts - 1)


def _execute_job(
    rng: _Rng,
    job_id: str,
    user: str,
    start: float,
    service: float,
    sessions: list[tuple[float, float]],
    *,
    on_owner_slot: bool,
    suspend_prob: float,
    duration: float,
) -> TrueJob | None:
    """Walk a job through upcoming owner sessions, producing its segments.

    Suspension pauses progress, so each suspended session pushes completion
    out by its length.  On the owner's slot the job instead ends the moment a
    session starts.
    """
    segments: list[tuple[Phase, float, float]] = []
    cursor = start
    remaining = service
    for s, e in sessions:
        if s <= start:
            continue
        if s >= cursor + remaining:
            break
        if on_owner_slot:
            if s > cursor:
                segments.append((Phase.RUNNING, cursor, s))
            cursor = s
            remaining = 0.0
            break
        if not rng.bernoulli(suspend_prob):
            continue  # owner activity this session leaves the job running
        segments.append((Phase.RUNNING, cursor, s))
        remaining -= s - cursor
        segments.append((Phase.SUSPENDED, s, e))
        cursor = e
        if cursor >= duration:
            remaining = 0.0
            break
    if remaining > 0:
        segments.append((Phase.RUNNING, cursor, cursor + remaining))

    clipped: list[tuple[Phase, float, float]] = []
    for phase, s, e in segments:
        s, e = min(s, duration), min(e, duration)
        if e > s:
            clipped.append((phase, s, e))
    if not clipped:
        return None
    return TrueJob(job_id=job_id, owner=user, segments=tuple(clipped))


def _counts_at(machine: MachineTruth, t: float) -> tuple[int, int, bool]:
    running = suspended = 0
    for slot in machine.slots:
        job = slot.job_at(t)
        if job is not None:
            phase = job.phase_at(t)
            if phase is Phase.RUNNING:
                running += 1
            elif phase is Phase.SUSPENDED:
                suspended += 1
    owner_active = machine.slots[0].owner_at(t)
    return running, suspended, owner_active


def status_at(gt: GroundTruth, t: float) -> str:
    """Status text (M + S lines) exactly as a live source would emit at t.

    Loads are pure functions of the instantaneous state so repeated calls at
    the same t are byte-identical.
    """
    if not 0 <= t <= gt.duration_s:
        raise ValueError(f"t={t} outside scenario duration")
    stamp = render_timestamp(
        gt.scenario.start + dt.timedelta(seconds=math.floor(t))
    )
    lines = []
    for machine in gt.machines:
        running, suspended, owner_active = _counts_at(machine, t)
        load_condor = round(0.97 * running + 0.01 * suspended, 2)
        load_total = round(load_condor + (0.85 if owner_active else 0.05), 2)
        lines.append(
            "|".join(
                (
                    "M",
                    stamp,
                    machine.name,
                    str(machine.slot_count),
                    machine.os_name,
                    machine.os_version,
                    str(machine.memory_mb_total),
                    ",".join(str(v) for v in machine.memory_mb_per_slot),
                    str(machine.disk_mb_free_total),
                    ",".join(str(v) for v in machine.disk_mb_free_per_slot),
                    f"{load_total:.2f}",
                    f"{load_condor:.2f}",
                )
            )
        )
        for si, slot in enumerate(machine.slots, start=1):
            if si == 1 and slot.owner_at(t):
                state, activity, load, job_id, owner = "Owner", "Idle", 0.75, "", ""
            else:
                job = slot.job_at(t)
                if job is None:
                    state, activity, load, job_id, owner = (
                        "Unclaimed", "Idle", 0.02, "", "",
                    )
                elif job.phase_at(t) is Phase.RUNNING:
                    state, activity, load = "Claimed", "Busy", 0.98
                    job_id, owner = job.job_id, job.owner
                else:
                    state, activity, load = "Claimed", "Suspended", 0.01
                    job_id, owner = job.job_id, job.owner
            lines.append(
                f"S|{stamp}|{machine.name}|{si}|{state}|{activity}|{load:.2f}|{job_id}|{owner}"
            )
    return "".join(line + "\n" for line in lines)


def queue_at(gt: GroundTruth, t: float) -> str:
    """Queue text (Q lines): in-flight claimed jobs as running, backlog as
    idle or held, per user."""
    if not 0 <= t <= gt.duration_s:
        raise ValueError(f"t={t} outside scenario duration")
    counts: dict[str, list[int]] = {}

    def bucket(user: str) -> list[int]:
        return counts.setdefault(user, [0, 0, 0])

    for machine in gt.machines:
        for slot in machine.slots:
            job = slot.job_at(t)
            if job is not None and job.phase_at(t) is not None:
                bucket(job.owner)[0] += 1
    for queued in gt.backlog:
        if queued.start <= t < queued.end:
            bucket(queued.user)[2 if queued.held else 1] += 1
    lines = [
        f"Q|{user}|{c[0]}|{c[1]}|{c[2]}"
        for user, c in sorted(counts.items())
        if any(c)
    ]
    return "".join(line + "\n" for line in lines)


def queue_summary_at(gt: GroundTruth, t: float) -> QueueSummary:
    from .records import parse_queue_output

    return parse_queue_output(queue_at(gt, t))


# --- scenario files (flat key=value) ---------------------------------------

_SCENARIO_KEYS = {
    "seed": lambda v: int(v),
    "machines": lambda v: int(v),
    "slots_per_machine": lambda v: (
        tuple(int(p) for p in v.split(",")) if "," in v else int(v)
    ),
    "duration_s": lambda v: int(v),
    "job_rate_per_slot_hour": lambda v: float(v),
    "mean_job_s": lambda v: float(v),
    "owner_rate_per_hour": lambda v: float(v),
    "mean_owner_s": lambda v: float(v),
    "suspend_prob": lambda v: float(v),
    "restricted_fraction": lambda v: float(v),
    "users": lambda v: tuple(u.strip() for u in v.split(",") if u.strip()),
    "start": lambda v: parse_timestamp(v),
}


def parse_scenario_file(text: str, **overrides) -> Scenario:
    """Parse the flat key=value scenario format ('#' comments allowed);
    keyword overrides win over file values."""
    values: dict = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidScenario(f"line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _SCENARIO_KEYS:
            raise InvalidScenario(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _SCENARIO_KEYS[key](value)
        except (ValueError, TypeError) as exc:
            raise InvalidScenario(f"line {lineno}: bad value for {key}: {exc}") from exc
    values.update(overrides)
    return Scenario(**values)


def load_scenario(path, **overrides) -> Scenario:
    return parse_scenario_file(Path(path).read_text(encoding="utf-8"), **overrides)


def ground_truth_to_dict(gt: GroundTruth) -> dict:
    """JSON-friendly dump of the ground truth (the test-harness sidecar)."""
    return {
        "start": render_timestamp(gt.scenario.start),
        "duration_s": gt.scenario.duration_s,
        "seed": gt.scenario.seed,
        "machines": [
            {
                "name": m.name,
                "slot_count": m.slot_count,
                "restricted": m.restriction is not None,
                "slots": [
                    {
                        "owner_spans": [[s, e] for s, e in slot.owner_spans],
                        "jobs": [
                            {
                                "job_id": job.job_id,
                                "owner": job.owner,
                                "segments": [
                                    [phase.value, s, e]
                                    for phase, s, e in job.segments
                                ],
                            }
                            for job in slot.jobs
                        ],
                    }
                    for slot in m.slots
                ],
            }
            for m in gt.machines
        ],
        "backlog": [
            {"user": q.user, "start": q.start, "end": q.end, "held": q.held}
            for q in gt.backlog
        ],
    }


def write_ground_truth(gt: GroundTruth, path) -> None:
    Path(path).write_text(
        json.dumps(ground_truth_to_dict(gt), indent=1, sort_keys=True) + "\n",
        encoding="utf-8",
    )
