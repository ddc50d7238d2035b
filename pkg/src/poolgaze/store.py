"""Append-only flat-file store: <root>/YYYY/MM/DD/<machine>.rec + machines.reg.

No database: history is plain record lines in a date tree, one file per
machine per day, each file starting with the format-version header.  The
store holds raw observations only; summaries are always recomputed from it.

One collector process writes a given root (advisory lock file), any number
of readers may read concurrently.  Appends are single write() calls so a
reader never observes a torn line; a trailing partial line is tolerated on
read.
"""

from __future__ import annotations

import datetime as dt
import fcntl
import os
from dataclasses import dataclass
from pathlib import Path

from .model import ScheduleWindow, ScheduleWindows, SlotObservation
from .records import (
    FORMAT_HEADER,
    MachineInfoRecord,
    MalformedRecord,
    parse_record_line,
    render_record_line,
)

REGISTRY_FILENAME = "machines.reg"
LOCK_FILENAME = ".writer.lock"


class IoFailure(OSError):
    def __init__(self, path, cause: BaseException | None = None):
        super().__init__(f"storage I/O failure at {path}: {cause}")
        self.path = str(path)


class RoutingError(ValueError):
    """A record cannot be routed to a (day, machine) file."""


class WriterLockHeld(RuntimeError):
    pass


@dataclass(frozen=True)
class DataRoot:
    """Root directory of the store."""

    path: Path

    def __init__(self, path):
        object.__setattr__(self, "path", Path(path))

    def day_dir(self, date: dt.date) -> Path:
        return self.path / f"{date.year:04d}" / f"{date.month:02d}" / f"{date.day:02d}"

    def machine_day_file(self, machine: str, date: dt.date) -> Path:
        return self.day_dir(date) / f"{machine}.rec"

    def registry_file(self) -> Path:
        return self.path / REGISTRY_FILENAME


@dataclass(frozen=True)
class RegistryEntry:
    machine: str
    slot_count: int
    restriction: ScheduleWindows | None = None

    def __post_init__(self) -> None:
        if not self.machine or "|" in self.machine or "\n" in self.machine:
            raise ValueError(f"bad machine name: {self.machine!r}")
        if self.slot_count < 1:
            raise ValueError("slot_count must be >= 1")


@dataclass(frozen=True)
class MachineRegistry:
    """All machines belonging to the pool, active or not."""

    entries: tuple[RegistryEntry, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        names = [e.machine for e in self.entries]
        if len(names) != len(set(names)):
            raise ValueError("registry machine names must be unique")

    def get(self, machine: str) -> RegistryEntry | None:
        for e in self.entries:
            if e.machine == machine:
                return e
        return None

    def names(self) -> list[str]:
        return sorted(e.machine for e in self.entries)


class WriterLock:
    """Advisory single-writer lock on a data root (flock on a lock file)."""

    def __init__(self, root: DataRoot):
        self.root = root
        self._fd: int | None = None

    def acquire(self) -> None:
        path = self.root.path / LOCK_FILENAME
        try:
            self.root.path.mkdir(parents=True, exist_ok=True)
            fd = os.open(path, os.O_WRONLY | os.O_CREAT, 0o644)
        except OSError as exc:
            raise IoFailure(path, exc) from exc
        try:
            fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            os.close(fd)
            raise WriterLockHeld(f"another writer holds {path}") from None
        self._fd = fd

    def release(self) -> None:
        if self._fd is not None:
            fcntl.flock(self._fd, fcntl.LOCK_UN)
            os.close(self._fd)
            self._fd = None

    def __enter__(self) -> "WriterLock":
        self.acquire()
        return self

    def __exit__(self, *exc) -> None:
        self.release()


def append_observations(
    root: DataRoot, records: list[SlotObservation | MachineInfoRecord]
) -> int:
    """Append records, routed by (UTC day, machine); returns the count written.

    Each target file receives its lines in one write() call, with the version
    header prepended when the file is created.
    """
    grouped: dict[tuple[dt.date, str], list[str]] = {}
    for record in records:
        if not isinstance(record, (SlotObservation, MachineInfoRecord)):
            raise RoutingError(f"record has no (day, machine) route: {record!r}")
        key = (record.timestamp.date(), record.machine)
        grouped.setdefault(key, []).append(render_record_line(record))

    for (date, machine), lines in grouped.items():
        path = root.machine_day_file(machine, date)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd = os.open(path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        except OSError as exc:
            raise IoFailure(path, exc) from exc
        try:
            payload = "".join(line + "\n" for line in lines)
            if os.fstat(fd).st_size == 0:
                payload = FORMAT_HEADER + "\n" + payload
            os.write(fd, payload.encode("utf-8"))
        except OSError as exc:
            raise IoFailure(path, exc) from exc
        finally:
            os.close(fd)
    return len(records)


def _read_day_lines(path: Path) -> list[tuple[int, str]]:
    """Complete record lines of one day file; a trailing partial line
    (concurrent append in progress) is dropped."""
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        return []
    except OSError as exc:
        raise IoFailure(path, exc) from exc
    text = raw.decode("utf-8", errors="replace")
    complete = text.endswith("\n")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    elif not complete and lines:
        lines.pop()  # torn tail from an in-flight append
    return list(enumerate(lines, start=1))


def read_machine_day(
    root: DataRoot,
    machine: str,
    date: dt.date,
    *,
    strict: bool = False,
    errors: list[MalformedRecord] | None = None,
) -> list[SlotObservation]:
    """Observations of one machine-day, sorted by (timestamp, slot).

    A missing file is an empty day (the machine may simply have been off).
    Corrupt lines raise in strict mode; in lenient mode (the default, used
    for serving) they are skipped and reported through `errors`.  An unknown
    format header is version skew and raises in either mode.
    """
    path = root.machine_day_file(machine, date)
    observations = []
    for lineno, line in _read_day_lines(path):
        if not line.strip():
            continue
        if line.startswith("#"):
            if line != FORMAT_HEADER:
                raise MalformedRecord(f"{path}:{lineno}: unsupported format header")
            continue
        try:
            value = parse_record_line(line)
        except MalformedRecord as exc:
            contextual = MalformedRecord(f"{path}:{lineno}: {exc.reason}", exc.offset)
            if strict:
                raise contextual from exc
            if errors is not None:
                errors.append(contextual)
            continue
        if isinstance(value, SlotObservation):
            observations.append(value)
    observations.sort(key=lambda o: (o.timestamp, o.slot))
    return observations


def read_range(
    root: DataRoot,
    machine: str,
    start_date: dt.date,
    span_days: int,
    *,
    strict: bool = False,
    errors: list[MalformedRecord] | None = None,
) -> list[tuple[dt.date, list[SlotObservation]]]:
    """Exactly span_days (date, observations) entries, empty lists for absent
    days."""
    if not 1 <= span_days <= 366:
        raise ValueError(f"span_days must be in 1..366, got {span_days}")
    out = []
    for i in range(span_days):
        date = start_date + dt.timedelta(days=i)
        out.append(
            (date, read_machine_day(root, machine, date, strict=strict, errors=errors))
        )
    return out


def last_job_time(
    root: DataRoot,
    machine: str,
    lookback_days: int,
    *,
    now: dt.datetime | None = None,
) -> dt.datetime | None:
    """Most recent stored observation carrying a job phase, scanning newest
    day first and stopping at the first populated day."""
    if lookback_days < 1:
        raise ValueError("lookback_days must be >= 1")
    if now is None:
        now = dt.datetime.now(dt.timezone.utc)
    today = now.date()
    for back in range(lookback_days):
        date = today - dt.timedelta(days=back)
        hits = [
            o.timestamp
            for o in read_machine_day(root, machine, date)
            if o.phase is not None
        ]
        if hits:
            return max(hits)
    return None


def render_restriction(restriction: ScheduleWindows | None) -> str:
    """Registry wire form: ';'-joined "d:HH:MM-HH:MM" windows, '' for none."""
    if restriction is None:
        return ""
    if not restriction.windows:
        raise ValueError(
            "empty window list (never-allowed) has no registry wire form"
        )
    return ";".join(
        f"{w.day_of_week}:{w.start}-{w.end}" for w in restriction.windows
    )


def parse_restriction(spec: str) -> ScheduleWindows | None:
    if spec == "":
        return None
    windows = []
    for part in spec.split(";"):
        try:
            day_text, times = part.split(":", 1)
            start, end = times.split("-")
            windows.append(ScheduleWindow(int(day_text), start, end))
        except (ValueError, IndexError) as exc:
            raise MalformedRecord(f"bad restriction spec: {part!r}") from exc
    return ScheduleWindows(tuple(windows))


def save_registry(root: DataRoot, registry: MachineRegistry) -> None:
    """Write machines.reg: header plus one R line per machine (atomic
    replace)."""
    lines = [FORMAT_HEADER]
    for entry in registry.entries:
        lines.append(
            f"R|{entry.machine}|{entry.slot_count}|{render_restriction(entry.restriction)}"
        )
    path = root.registry_file()
    tmp = path.with_suffix(".reg.tmp")
    try:
        root.path.mkdir(parents=True, exist_ok=True)
        tmp.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        tmp.replace(path)
    except OSError as exc:
        raise IoFailure(path, exc) from exc


def load_registry(root: DataRoot) -> MachineRegistry:
    """Read machines.reg; raises IoFailure when absent."""
    path = root.registry_file()
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(path, exc) from exc
    entries = []
    seen = set()
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if line.startswith("#"):
            if line != FORMAT_HEADER:
                raise MalformedRecord(f"{path}:{lineno}: unsupported format header")
            continue
        fields = line.split("|")
        if len(fields) != 4 or fields[0] != "R":
            raise MalformedRecord(f"{path}:{lineno}: bad registry line")
        name = fields[1]
        if name in seen:
            raise MalformedRecord(f"{path}:{lineno}: duplicate machine {name!r}")
        seen.add(name)
        if not fields[2].isdigit() or int(fields[2]) < 1:
            raise MalformedRecord(f"{path}:{lineno}: bad slot count {fields[2]!r}")
        entries.append(
            RegistryEntry(
                machine=name,
                slot_count=int(fields[2]),
                restriction=parse_restriction(fields[3]),
            )
        )
    return MachineRegistry(tuple(entries))


def try_load_registry(root: DataRoot) -> MachineRegistry | None:
    try:
        return load_registry(root)
    except IoFailure:
        return None
