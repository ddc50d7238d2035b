"""The polling driver: samples a status source on aligned ticks and appends
records to the store.

Sources are pluggable (external command, snapshot file, or the built-in
simulator) and expose two independent fetches: full pool status and queue
status.  Queue output is displayed live only and never stored.  Records carry
the poll's nominal tick time (a whole multiple of the interval), not fetch
completion times, so one cycle reads as a single coherent snapshot.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import logging
import math
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .model import UTC
from .records import (
    DuplicateSlot,
    MachineInfoRecord,
    MalformedRecord,
    parse_status_output,
)
from .simulate import GroundTruth, Scenario, load_scenario, queue_at, simulate, status_at
from .store import (
    DataRoot,
    IoFailure,
    MachineRegistry,
    RegistryEntry,
    WriterLock,
    append_observations,
    save_registry,
    try_load_registry,
)

logger = logging.getLogger(__name__)

MIN_INTERVAL_S = 30
MAX_INTERVAL_S = 3600
COMMAND_TIMEOUT_S = 60


class SourceUnavailable(RuntimeError):
    pass


class InvalidConfig(ValueError):
    pass


class CommandSource:
    """Runs `<command> status` / `<command> queue` and returns stdout.

    The configured command line gets the request name appended as its last
    argument, which keeps the two fetches independent.
    """

    def __init__(self, command: str):
        if not command.strip():
            raise InvalidConfig("empty source command")
        self.argv = shlex.split(command)

    def _run(self, request: str) -> str:
        try:
            proc = subprocess.run(
                self.argv + [request],
                capture_output=True,
                timeout=COMMAND_TIMEOUT_S,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise SourceUnavailable(f"source command failed: {exc}") from exc
        if proc.returncode != 0:
            raise SourceUnavailable(
                f"source command exited {proc.returncode}: "
                f"{proc.stderr.decode('utf-8', 'replace').strip()[:200]}"
            )
        return proc.stdout.decode("utf-8", "replace")

    def fetch_status(self, now: dt.datetime | None = None) -> str:
        return self._run("status")

    def fetch_queue(self, now: dt.datetime | None = None) -> str:
        return self._run("queue")


class FileSource:
    """Reads a combined snapshot file; S/M lines are status, Q lines queue."""

    def __init__(self, path):
        self.path = Path(path)

    def _read(self) -> str:
        try:
            return self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise SourceUnavailable(f"cannot read {self.path}: {exc}") from exc

    def fetch_status(self, now: dt.datetime | None = None) -> str:
        lines = [l for l in self._read().split("\n") if l and not l.startswith("Q|")]
        return "".join(line + "\n" for line in lines)

    def fetch_queue(self, now: dt.datetime | None = None) -> str:
        lines = [l for l in self._read().split("\n") if l.startswith("Q|")]
        return "".join(line + "\n" for line in lines)


class SimulatorSource:
    """Serves a simulated pool; wall time maps onto the scenario modulo its
    duration, so the synthetic pool keeps moving forever."""

    def __init__(self, ground_truth: GroundTruth):
        self.gt = ground_truth

    def _t(self, now: dt.datetime | None) -> float:
        if now is None:
            now = dt.datetime.now(UTC)
        offset = (now - self.gt.scenario.start).total_seconds()
        return offset % self.gt.duration_s

    def fetch_status(self, now: dt.datetime | None = None) -> str:
        return status_at(self.gt, self._t(now))

    def fetch_queue(self, now: dt.datetime | None = None) -> str:
        return queue_at(self.gt, self._t(now))


def build_source(spec: str):
    """Parse a source spec: cmd:"...", file:PATH, or sim:SCENARIO_FILE
    (sim: alone runs the default scenario)."""
    kind, _, rest = spec.partition(":")
    if kind == "cmd":
        return CommandSource(rest.strip().strip('"'))
    if kind == "file":
        if not rest:
            raise InvalidConfig("file: source needs a path")
        return FileSource(rest)
    if kind == "sim":
        scenario = load_scenario(rest) if rest else Scenario()
        return SimulatorSource(simulate(scenario))
    raise InvalidConfig(f"unknown source spec: {spec!r}")


@dataclass(frozen=True)
class CollectorConfig:
    data_root: Path
    source: str
    interval_s: int = 300
    lookback_days: int = 30
    pool_tz: str = "UTC"

    def __post_init__(self) -> None:
        if not MIN_INTERVAL_S <= self.interval_s <= MAX_INTERVAL_S:
            raise InvalidConfig(
                f"interval_s must be in {MIN_INTERVAL_S}..{MAX_INTERVAL_S}"
            )
        if self.lookback_days < 1:
            raise InvalidConfig("lookback_days must be >= 1")
        object.__setattr__(self, "data_root", Path(self.data_root))


@dataclass(frozen=True)
class PollReport:
    when: dt.datetime
    machines_seen: int = 0
    slots_written: int = 0
    records_written: int = 0
    errors: tuple[str, ...] = ()


def poll_once(source, store: DataRoot, now: dt.datetime) -> PollReport:
    """One polling cycle: fetch, convert, append; never stores queue data.

    Source failures are reported, not raised; storage failures propagate
    (the cycle aborts).
    """
    now = now.astimezone(UTC).replace(microsecond=0)
    try:
        text = source.fetch_status(now)
    except SourceUnavailable as exc:
        return PollReport(when=now, errors=(str(exc),))
    try:
        snapshot = parse_status_output(text, now)
    except (MalformedRecord, DuplicateSlot) as exc:
        return PollReport(when=now, errors=(f"malformed source output: {exc}",))

    records: list = []
    slots = 0
    for machine in snapshot.machines:
        info = machine.info
        records.append(
            MachineInfoRecord(
                timestamp=now,
                machine=info.machine,
                slot_count=info.slot_count,
                os_name=info.os_name,
                os_version=info.os_version,
                memory_mb_total=info.memory_mb_total,
                memory_mb_per_slot=info.memory_mb_per_slot,
                disk_mb_free_total=info.disk_mb_free_total,
                disk_mb_free_per_slot=info.disk_mb_free_per_slot,
                load_avg_total=info.load_avg_total,
                load_avg_condor=info.load_avg_condor,
            )
        )
        for obs in machine.slots:
            records.append(dataclasses.replace(obs, timestamp=now))
            slots += 1
    written = append_observations(store, records) if records else 0
    return PollReport(
        when=now,
        machines_seen=len(snapshot.machines),
        slots_written=slots,
        records_written=written,
    )


def aligned_tick(epoch_s: float, interval_s: int) -> int:
    return int(math.floor(epoch_s / interval_s) * interval_s)


def run_loop(
    config: CollectorConfig,
    store: DataRoot,
    stop: threading.Event,
    *,
    clock=time.time,
    waiter=None,
    on_report=None,
) -> int:
    """Poll at wall-clock ticks aligned to interval_s until stopped.

    A cycle that overruns its interval skips the missed ticks rather than
    queueing them, and per-cycle failures are reported without killing the
    loop.  Returns the number of polls performed.
    """
    if waiter is None:
        waiter = stop.wait  # returns True when stop is set
    source = build_source(config.source)
    interval = config.interval_s
    polls = 0
    with WriterLock(store):
        tick = aligned_tick(clock(), interval)
        if tick < clock():
            tick += interval
        while not stop.is_set():
            remaining = tick - clock()
            while remaining > 0:
                if waiter(min(remaining, 1.0)):
                    return polls
                remaining = tick - clock()
            when = dt.datetime.fromtimestamp(tick, UTC)
            try:
                report = poll_once(source, store, when)
            except IoFailure as exc:
                report = PollReport(when=when, errors=(str(exc),))
            polls += 1
            for err in report.errors:
                logger.warning("poll at %s: %s", when.isoformat(), err)
            if on_report is not None:
                on_report(report)
            tick += interval
            behind = aligned_tick(clock(), interval)
            if behind >= tick:
                tick = behind + interval  # overran: skip missed ticks
    return polls


def build_machine_registry(source, store: DataRoot) -> MachineRegistry:
    """Derive the registry from current status output and save it.

    Restrictions configured in an existing registry survive the rebuild, and
    machines that are currently silent stay listed: the registry names the
    whole pool, not just the machines answering right now.
    """
    now = dt.datetime.now(UTC).replace(microsecond=0)
    try:
        text = source.fetch_status(now)
    except SourceUnavailable:
        raise
    snapshot = parse_status_output(text, now)
    previous = try_load_registry(store)
    old_entries = {e.machine: e for e in previous.entries} if previous else {}

    entries: dict[str, RegistryEntry] = {}
    for machine in snapshot.machines:
        old = old_entries.get(machine.info.machine)
        entries[machine.info.machine] = RegistryEntry(
            machine=machine.info.machine,
            slot_count=machine.info.slot_count,
            restriction=old.restriction if old else None,
        )
    for name, old in old_entries.items():
        entries.setdefault(name, old)
    registry = MachineRegistry(tuple(entries[n] for n in sorted(entries)))
    save_registry(store, registry)
    return registry
