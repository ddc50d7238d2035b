"""The record format: the wire and storage contract, bit-exact.

Every producer and consumer in the stack (collector, storage, simulator, any
external status source) speaks this pipe-delimited line format:

    S|<iso8601Z>|<machine>|<slot>|<state>|<activity>|<load>|<job_id>|<owner>
    M|<iso8601Z>|<machine>|<slot_count>|<os_name>|<os_version>|<mem_total>|
      <mem_per_slot ',' joined>|<disk_free_total>|<disk_free_per_slot ',' joined>|
      <load_total>|<load_condor>
    Q|<user>|<running>|<idle>|<held>

(M shown wrapped here; real lines never contain newlines.)  Absent optionals
are empty strings, timestamps are ISO-8601 UTC with a 'Z' suffix at second
resolution, and loads carry exactly two decimals.  Field values never contain
'|' or newlines; that is enforced at construction time, so no quoting layer
exists or is needed.

Stored files begin with the version header line ``#congusto-format 1``.
Parsers accept that exact header anywhere and reject any other '#' line, so
the same parsing code handles live source output and stored files.

Parsing is strict: wrong field counts, unknown enum tokens, bad numbers, or
malformed timestamps raise MalformedRecord and are never coerced.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass

from .model import (
    UTC,
    MachineInfo,
    MachineSnapshot,
    PoolSnapshot,
    QueueRow,
    QueueSummary,
    SlotActivity,
    SlotObservation,
    SlotState,
)

FORMAT_HEADER = "#congusto-format 1"

_TIMESTAMP_RE = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$")
_LOAD_RE = re.compile(r"^\d+\.\d{2}$")
_JOB_ID_RE = re.compile(r"^\d+\.\d+$")

S_FIELD_COUNT = 9
M_FIELD_COUNT = 12
Q_FIELD_COUNT = 5


class MalformedRecord(ValueError):
    """A record line violates the format; offset is the byte position of the
    offending field within the line (0 when the whole line is at fault)."""

    def __init__(self, reason: str, offset: int = 0):
        super().__init__(reason)
        self.reason = reason
        self.offset = offset


class DuplicateSlot(ValueError):
    def __init__(self, machine: str, slot: int):
        super().__init__(f"duplicate slot record for {machine} slot {slot}")
        self.machine = machine
        self.slot = slot


@dataclass(frozen=True)
class MachineInfoRecord:
    """A timestamped M record: the stored machine attributes.

    This is the wire-level shape; registry data (restrictions) and liveness
    are layered on top of it elsewhere to produce a full MachineInfo.
    """

    timestamp: dt.datetime
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

    def __post_init__(self) -> None:
        # Reuse MachineInfo's validation by constructing one transiently.
        info = MachineInfo(
            machine=self.machine,
            slot_count=self.slot_count,
            os_name=self.os_name,
            os_version=self.os_version,
            memory_mb_total=self.memory_mb_total,
            memory_mb_per_slot=self.memory_mb_per_slot,
            disk_mb_free_total=self.disk_mb_free_total,
            disk_mb_free_per_slot=self.disk_mb_free_per_slot,
            load_avg_total=self.load_avg_total,
            load_avg_condor=self.load_avg_condor,
        )
        if self.timestamp.tzinfo is None or self.timestamp.utcoffset() != dt.timedelta(0):
            raise ValueError("timestamp must be timezone-aware UTC")
        if self.timestamp.microsecond != 0:
            raise ValueError("timestamp must have whole-second resolution")
        object.__setattr__(self, "memory_mb_per_slot", info.memory_mb_per_slot)
        object.__setattr__(self, "disk_mb_free_per_slot", info.disk_mb_free_per_slot)
        object.__setattr__(self, "load_avg_total", info.load_avg_total)
        object.__setattr__(self, "load_avg_condor", info.load_avg_condor)

    def to_machine_info(
        self,
        restriction=None,
        last_job_time: dt.datetime | None = None,
        reachable: bool = True,
    ) -> MachineInfo:
        return MachineInfo(
            machine=self.machine,
            slot_count=self.slot_count,
            os_name=self.os_name,
            os_version=self.os_version,
            memory_mb_total=self.memory_mb_total,
            memory_mb_per_slot=self.memory_mb_per_slot,
            disk_mb_free_total=self.disk_mb_free_total,
            disk_mb_free_per_slot=self.disk_mb_free_per_slot,
            load_avg_total=self.load_avg_total,
            load_avg_condor=self.load_avg_condor,
            restriction=restriction,
            last_job_time=last_job_time,
            reachable=reachable,
        )


def parse_timestamp(text: str) -> dt.datetime:
    """Strict ISO-8601 'Z' timestamp at second resolution."""
    if not _TIMESTAMP_RE.match(text):
        raise MalformedRecord(f"bad timestamp: {text!r}")
    try:
        return dt.datetime(
            int(text[0:4]), int(text[5:7]), int(text[8:10]),
            int(text[11:13]), int(text[14:16]), int(text[17:19]),
            tzinfo=UTC,
        )
    except ValueError as exc:
        raise MalformedRecord(f"bad timestamp: {text!r} ({exc})") from exc


def render_timestamp(t: dt.datetime) -> str:
    return t.astimezone(UTC).strftime("%Y-%m-%dT%H:%M:%SZ")


def _field_offsets(line: str) -> list[int]:
    offsets = [0]
    for i, ch in enumerate(line):
        if ch == "|":
            offsets.append(i + 1)
    return offsets


def _parse_load(text: str, offset: int) -> float:
    if not _LOAD_RE.match(text):
        raise MalformedRecord(f"bad load value: {text!r}", offset)
    return float(text)


def _parse_nonneg_int(text: str, what: str, offset: int) -> int:
    if not text.isdigit():
        raise MalformedRecord(f"bad {what}: {text!r}", offset)
    return int(text)


def _parse_int_list(text: str, what: str, offset: int) -> tuple[int, ...]:
    if not text:
        raise MalformedRecord(f"empty {what}", offset)
    values = []
    for part in text.split(","):
        if not part.isdigit():
            raise MalformedRecord(f"bad {what} entry: {part!r}", offset)
        values.append(int(part))
    return tuple(values)


def parse_record_line(line: str) -> SlotObservation | MachineInfoRecord:
    """Parse one stored/wire line into its domain value.

    The line must be complete (no trailing newline).  Raises MalformedRecord
    on any deviation from the schema; the caller decides skip-vs-abort.
    """
    if "\n" in line or "\r" in line:
        raise MalformedRecord("record line contains a newline")
    fields = line.split("|")
    offsets = _field_offsets(line)
    kind = fields[0]
    if kind == "S":
        return _parse_s_record(fields, offsets)
    if kind == "M":
        return _parse_m_record(fields, offsets)
    raise MalformedRecord(f"unknown record kind: {kind!r}")


def _parse_s_record(fields: list[str], offsets: list[int]) -> SlotObservation:
    if len(fields) != S_FIELD_COUNT:
        raise MalformedRecord(
            f"S record needs {S_FIELD_COUNT} fields, got {len(fields)}"
        )
    timestamp = parse_timestamp(fields[1])
    machine = fields[2]
    slot = _parse_nonneg_int(fields[3], "slot index", offsets[3])
    try:
        state = SlotState(fields[4])
    except ValueError:
        raise MalformedRecord(f"unknown slot state: {fields[4]!r}", offsets[4]) from None
    try:
        activity = SlotActivity(fields[5])
    except ValueError:
        raise MalformedRecord(
            f"unknown slot activity: {fields[5]!r}", offsets[5]
        ) from None
    load = _parse_load(fields[6], offsets[6])
    job_id = fields[7] or None
    owner = fields[8] or None
    if job_id is not None and not _JOB_ID_RE.match(job_id):
        raise MalformedRecord(f"bad job_id: {job_id!r}", offsets[7])
    try:
        return SlotObservation(
            timestamp=timestamp,
            machine=machine,
            slot=slot,
            state=state,
            activity=activity,
            load=load,
            job_id=job_id,
            owner=owner,
        )
    except ValueError as exc:
        raise MalformedRecord(str(exc)) from exc


def _parse_m_record(fields: list[str], offsets: list[int]) -> MachineInfoRecord:
    if len(fields) != M_FIELD_COUNT:
        raise MalformedRecord(
            f"M record needs {M_FIELD_COUNT} fields, got {len(fields)}"
        )
    try:
        return MachineInfoRecord(
            timestamp=parse_timestamp(fields[1]),
            machine=fields[2],
            slot_count=_parse_nonneg_int(fields[3], "slot_count", offsets[3]),
            os_name=fields[4],
            os_version=fields[5],
            memory_mb_total=_parse_nonneg_int(fields[6], "memory total", offsets[6]),
            memory_mb_per_slot=_parse_int_list(fields[7], "memory per slot", offsets[7]),
            disk_mb_free_total=_parse_nonneg_int(fields[8], "disk total", offsets[8]),
            disk_mb_free_per_slot=_parse_int_list(
                fields[9], "disk per slot", offsets[9]
            ),
            load_avg_total=_parse_load(fields[10], offsets[10]),
            load_avg_condor=_parse_load(fields[11], offsets[11]),
        )
    except MalformedRecord:
        raise
    except ValueError as exc:
        raise MalformedRecord(str(exc)) from exc


def render_record_line(value: SlotObservation | MachineInfoRecord) -> str:
    """Render a domain value to its exact wire line (round-trip identity)."""
    if isinstance(value, SlotObservation):
        return "|".join(
            (
                "S",
                render_timestamp(value.timestamp),
                value.machine,
                str(value.slot),
                value.state.value,
                value.activity.value,
                f"{value.load:.2f}",
                value.job_id or "",
                value.owner or "",
            )
        )
    if isinstance(value, MachineInfoRecord):
        return "|".join(
            (
                "M",
                render_timestamp(value.timestamp),
                value.machine,
                str(value.slot_count),
                value.os_name,
                value.os_version,
                str(value.memory_mb_total),
                ",".join(str(v) for v in value.memory_mb_per_slot),
                str(value.disk_mb_free_total),
                ",".join(str(v) for v in value.disk_mb_free_per_slot),
                f"{value.load_avg_total:.2f}",
                f"{value.load_avg_condor:.2f}",
            )
        )
    raise TypeError(f"not a renderable record: {type(value).__name__}")


def iter_record_lines(text: str):
    """Yield (line_number, line) for record lines, skipping blanks and the
    version header; any other '#' line is a version-skew error."""
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if line.startswith("#"):
            if line != FORMAT_HEADER:
                raise MalformedRecord(f"unsupported format header: {line!r}")
            continue
        yield lineno, line


def parse_status_output(
    text: str,
    taken_at: dt.datetime,
    registry=None,
) -> PoolSnapshot:
    """Group full status-source output into a validated PoolSnapshot.

    Input carries one S line per slot and one M line per machine, in any
    order.  Machines listed in `registry` (a MachineRegistry) but absent from
    the text are included as unreachable with empty slot lists.  Queue data
    is not part of status output; the snapshot's queue is None.
    """
    infos: dict[str, MachineInfoRecord] = {}
    slots: dict[str, dict[int, SlotObservation]] = {}
    for lineno, line in iter_record_lines(text):
        try:
            value = parse_record_line(line)
        except MalformedRecord as exc:
            raise MalformedRecord(f"line {lineno}: {exc.reason}", exc.offset) from exc
        if isinstance(value, MachineInfoRecord):
            if value.machine in infos:
                raise MalformedRecord(
                    f"line {lineno}: duplicate machine record for {value.machine!r}"
                )
            infos[value.machine] = value
        else:
            per_machine = slots.setdefault(value.machine, {})
            if value.slot in per_machine:
                raise DuplicateSlot(value.machine, value.slot)
            per_machine[value.slot] = value

    for machine in slots:
        if machine not in infos:
            raise MalformedRecord(
                f"slot records for {machine!r} without a machine record"
            )

    restrictions = {}
    if registry is not None:
        restrictions = {e.machine: e.restriction for e in registry.entries}

    machines = []
    for name in sorted(infos):
        rec = infos[name]
        ordered = tuple(obs for _, obs in sorted(slots.get(name, {}).items()))
        for obs in ordered:
            if obs.slot > rec.slot_count:
                raise MalformedRecord(
                    f"slot {obs.slot} of {name!r} exceeds declared count"
                )
        machines.append(
            MachineSnapshot(
                info=rec.to_machine_info(restriction=restrictions.get(name)),
                slots=ordered,
            )
        )
    if registry is not None:
        for entry in registry.entries:
            if entry.machine in infos:
                continue
            machines.append(
                MachineSnapshot(
                    info=MachineInfo(
                        machine=entry.machine,
                        slot_count=entry.slot_count,
                        os_name="unknown",
                        os_version="unknown",
                        memory_mb_total=0,
                        memory_mb_per_slot=(0,) * entry.slot_count,
                        disk_mb_free_total=0,
                        disk_mb_free_per_slot=(0,) * entry.slot_count,
                        load_avg_total=0.0,
                        load_avg_condor=0.0,
                        restriction=entry.restriction,
                        reachable=False,
                    ),
                    slots=(),
                )
            )
        machines.sort(key=lambda m: m.info.machine)
    return PoolSnapshot(taken_at=taken_at, machines=tuple(machines))


def parse_queue_output(text: str) -> QueueSummary:
    """Parse Q lines into a QueueSummary with its computed totals row."""
    rows: list[QueueRow] = []
    seen: set[str] = set()
    for lineno, line in iter_record_lines(text):
        fields = line.split("|")
        offsets = _field_offsets(line)
        if fields[0] != "Q":
            raise MalformedRecord(f"line {lineno}: expected Q record, got {fields[0]!r}")
        if len(fields) != Q_FIELD_COUNT:
            raise MalformedRecord(
                f"line {lineno}: Q record needs {Q_FIELD_COUNT} fields, got {len(fields)}"
            )
        user = fields[1]
        if user in seen:
            raise MalformedRecord(f"line {lineno}: duplicate queue user {user!r}")
        seen.add(user)
        counts = [
            _parse_nonneg_int(fields[i], name, offsets[i])
            for i, name in ((2, "running count"), (3, "idle count"), (4, "held count"))
        ]
        try:
            rows.append(QueueRow(user, *counts))
        except ValueError as exc:
            raise MalformedRecord(f"line {lineno}: {exc}") from exc
    return QueueSummary.build(rows)
