"""HTTP service: stored history, computed summaries, and the live panoramic
view with its full filter battery.

The service computes, the dashboard renders: sorting, filtering, chart data,
alert flags, and all accounting figures are produced here and shipped as
JSON with unit-suffixed field names (_s, _mb, _pct).  Day and period
endpoints are pure functions of the data root plus the query; the panoramic
endpoints fetch live state from the status source (never from storage),
augmented with per-machine last-job times and per-slot time-in-state taken
from stored history.

Percentage figures use the theoretical maximum (slot_count x 24 h) as their
base everywhere.
"""

from __future__ import annotations

import datetime as dt
import re
import threading
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .aggregate import (
    PeriodSpan,
    ReconstructionParams,
    clip_intervals_to_date,
    concurrency_curve,
    day_summary,
    intervals_for_range,
    period_summary,
    sample_coverage,
)
from .collector import SourceUnavailable, build_source
from .model import (
    UTC,
    DailySummary,
    MachineSnapshot,
    PeriodSummary,
    QueueSummary,
    SlotState,
    SlotActivity,
)
from .records import (
    DuplicateSlot,
    MalformedRecord,
    parse_status_output,
    render_timestamp,
)
from .store import (
    DataRoot,
    IoFailure,
    load_registry,
    read_machine_day,
    render_restriction,
    last_job_time as store_last_job_time,
    try_load_registry,
)

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")

SHOW_GROUPS = ("machines", "queue", "charts")
MACHINE_FIELDS = (
    "name",
    "slots",
    "disk_total",
    "disk_per_slot",
    "memory_total",
    "memory_per_slot",
    "os",
    "load_total",
    "load_condor",
    "restrictions",
    "last_job_time",
)
SORT_KEYS = ("name", "load", "free_disk", "memory", "slot_count", "last_job_time")
RANGE_FILTERS = (
    "memory_mb",
    "disk_mb_free",
    "load_avg_total",
    "load_avg_condor",
    "slot_count",
    "time_in_state_s",
)

_QUERY_KEYS = (
    {"show", "fields", "sort", "dir", "reachable", "os_name", "os_version",
     "slot_state", "owner", "disk_alert_mb", "charts", "refresh_s"}
    | {f"{name}_min" for name in RANGE_FILTERS}
    | {f"{name}_max" for name in RANGE_FILTERS}
)


class BadQuery(ValueError):
    pass


@dataclass(frozen=True)
class RangeFilter:
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self) -> None:
        if self.lo is not None and self.hi is not None and self.lo > self.hi:
            raise BadQuery(f"range min {self.lo} exceeds max {self.hi}")

    @property
    def active(self) -> bool:
        return self.lo is not None or self.hi is not None

    def contains(self, value: float) -> bool:
        if self.lo is not None and value < self.lo:
            return False
        if self.hi is not None and value > self.hi:
            return False
        return True


@dataclass(frozen=True)
class PanoramicQuery:
    """Parsed and validated panoramic-view configuration."""

    show: tuple[str, ...] = SHOW_GROUPS
    fields: tuple[str, ...] = ("name", "slots")
    sort: str = "name"
    direction: str = "asc"
    reachable: str = "any"
    os_name: str | None = None
    os_version: str | None = None
    slot_states: tuple[SlotState, ...] = ()
    owner: str | None = None
    ranges: dict[str, RangeFilter] = field(default_factory=dict)
    disk_alert_mb: int | None = None
    charts: tuple[str, ...] | None = None
    refresh_s: int = 30

    def slot_level_active(self) -> bool:
        return bool(
            self.slot_states
            or self.owner is not None
            or self.ranges.get("time_in_state_s", RangeFilter()).active
        )


def parse_panoramic_query(params: dict[str, str]) -> PanoramicQuery:
    """Strictly parse query parameters; unknown names are rejected."""
    unknown = set(params) - _QUERY_KEYS
    if unknown:
        raise BadQuery(f"unknown filter names: {', '.join(sorted(unknown))}")

    def csv(key: str, allowed: tuple[str, ...]) -> tuple[str, ...] | None:
        if key not in params:
            return None
        items = tuple(p.strip() for p in params[key].split(",") if p.strip())
        for item in items:
            if item not in allowed:
                raise BadQuery(f"bad {key} value: {item!r}")
        return items

    def number(key: str) -> float | None:
        if key not in params:
            return None
        try:
            return float(params[key])
        except ValueError:
            raise BadQuery(f"bad numeric value for {key}: {params[key]!r}") from None

    show = csv("show", SHOW_GROUPS)
    fields = csv("fields", MACHINE_FIELDS)
    sort = params.get("sort", "name")
    if sort not in SORT_KEYS:
        raise BadQuery(f"bad sort key: {sort!r}")
    direction = params.get("dir", "asc")
    if direction not in ("asc", "desc"):
        raise BadQuery(f"bad sort direction: {direction!r}")
    reachable = params.get("reachable", "any")
    if reachable not in ("up", "down", "any"):
        raise BadQuery(f"bad reachable filter: {reachable!r}")

    slot_states: tuple[SlotState, ...] = ()
    if "slot_state" in params:
        try:
            slot_states = tuple(
                SlotState(tok.strip())
                for tok in params["slot_state"].split(",")
                if tok.strip()
            )
        except ValueError:
            raise BadQuery(f"bad slot_state: {params['slot_state']!r}") from None

    ranges = {}
    for name in RANGE_FILTERS:
        rf = RangeFilter(number(f"{name}_min"), number(f"{name}_max"))
        if rf.active:
            ranges[name] = rf

    disk_alert = None
    if "disk_alert_mb" in params:
        value = number("disk_alert_mb")
        if value is None or value < 0:
            raise BadQuery("disk_alert_mb must be >= 0")
        disk_alert = int(value)

    charts = None
    if "charts" in params:
        charts = tuple(
            p.strip() for p in params["charts"].split(",") if p.strip()
        )
        for chart_id in charts:
            if chart_id not in CHART_CATALOG:
                raise BadQuery(f"unknown chart: {chart_id!r}")

    refresh = params.get("refresh_s", "30")
    try:
        refresh_s = int(refresh)
    except ValueError:
        raise BadQuery(f"bad refresh_s: {refresh!r}") from None
    if refresh_s < 1:
        raise BadQuery("refresh_s must be >= 1")

    return PanoramicQuery(
        show=show if show is not None else SHOW_GROUPS,
        fields=fields if fields is not None else ("name", "slots"),
        sort=sort,
        direction=direction,
        reachable=reachable,
        os_name=params.get("os_name"),
        os_version=params.get("os_version"),
        slot_states=slot_states,
        owner=params.get("owner"),
        ranges=ranges,
        disk_alert_mb=disk_alert,
        charts=charts,
        refresh_s=refresh_s,
    )


@dataclass(frozen=True)
class AugmentedMachine:
    """Live machine snapshot enriched with storage-derived context."""

    snap: MachineSnapshot
    last_job_time: dt.datetime | None
    time_in_state_s: tuple[int, ...]


def slot_matches(query: PanoramicQuery, obs, time_in_state: int) -> bool:
    if query.slot_states and obs.state not in query.slot_states:
        return False
    if query.owner is not None and obs.owner != query.owner:
        return False
    tis = query.ranges.get("time_in_state_s")
    if tis is not None and not tis.contains(time_in_state):
        return False
    return True


def machine_matches(query: PanoramicQuery, machine: AugmentedMachine) -> bool:
    info = machine.snap.info
    if query.reachable == "up" and not info.reachable:
        return False
    if query.reachable == "down" and info.reachable:
        return False
    if query.os_name is not None and info.os_name != query.os_name:
        return False
    if query.os_version is not None and not info.os_version.startswith(query.os_version):
        return False
    machine_values = {
        "memory_mb": info.memory_mb_total,
        "disk_mb_free": info.disk_mb_free_total,
        "load_avg_total": info.load_avg_total,
        "load_avg_condor": info.load_avg_condor,
        "slot_count": info.slot_count,
    }
    for name, value in machine_values.items():
        rf = query.ranges.get(name)
        if rf is not None and not rf.contains(value):
            return False
    if query.slot_level_active():
        return any(
            slot_matches(query, obs, tis)
            for obs, tis in zip(machine.snap.slots, machine.time_in_state_s)
        )
    return True


def apply_panoramic_query(
    machines: list[AugmentedMachine], query: PanoramicQuery
) -> tuple[list[AugmentedMachine], dict[str, int]]:
    """Filter conjunctively, sort, and count shown/total machines and slots."""
    shown = [m for m in machines if machine_matches(query, m)]

    def sort_key(machine: AugmentedMachine):
        info = machine.snap.info
        name = info.machine
        if query.sort == "load":
            return (info.load_avg_total, name)
        if query.sort == "free_disk":
            return (info.disk_mb_free_total, name)
        if query.sort == "memory":
            return (info.memory_mb_total, name)
        if query.sort == "slot_count":
            return (info.slot_count, name)
        if query.sort == "last_job_time":
            epoch = (
                machine.last_job_time.timestamp() if machine.last_job_time else 0.0
            )
            return (epoch, name)
        return (name,)

    shown.sort(key=sort_key, reverse=(query.direction == "desc"))

    def shown_slots(machine: AugmentedMachine) -> int:
        if not query.slot_level_active():
            return len(machine.snap.slots)
        return sum(
            1
            for obs, tis in zip(machine.snap.slots, machine.time_in_state_s)
            if slot_matches(query, obs, tis)
        )

    counts = {
        "machines_shown": len(shown),
        "machines_total": len(machines),
        "slots_shown": sum(shown_slots(m) for m in shown),
        "slots_total": sum(len(m.snap.slots) for m in machines),
    }
    return shown, counts


# --- chart catalog ----------------------------------------------------------

def _histogram(values: list[float], unit: str, buckets: int = 8) -> list[dict]:
    if not values:
        return []
    lo, hi = min(values), max(values)
    if lo == hi:
        return [{"label": f"{lo:g}{unit}", "value": len(values)}]
    width = (hi - lo) / buckets
    series = []
    for i in range(buckets):
        b_lo, b_hi = lo + i * width, lo + (i + 1) * width
        count = sum(
            1
            for v in values
            if (b_lo <= v < b_hi) or (i == buckets - 1 and v == hi)
        )
        series.append({"label": f"{b_lo:g}-{b_hi:g}{unit}", "value": count})
    return series


def _count_series(counter: dict[str, int]) -> list[dict]:
    return [{"label": k, "value": v} for k, v in sorted(counter.items())]


def _chart_slots_by_state(machines, now):
    counts = {state.value: 0 for state in SlotState}
    for m in machines:
        for obs in m.snap.slots:
            counts[obs.state.value] += 1
    return [{"label": s.value, "value": counts[s.value]} for s in SlotState]


def _chart_machines_up_down(machines, now):
    up = sum(1 for m in machines if m.snap.info.reachable)
    return [
        {"label": "up", "value": up},
        {"label": "down", "value": len(machines) - up},
    ]


def _chart_jobs_by_owner(machines, now):
    counts: dict[str, int] = {}
    for m in machines:
        for obs in m.snap.slots:
            if obs.phase is not None:
                counts[obs.owner] = counts.get(obs.owner, 0) + 1
    return _count_series(counts)


def _chart_running_vs_suspended(machines, now):
    running = suspended = 0
    for m in machines:
        for obs in m.snap.slots:
            phase = obs.phase
            if phase is not None:
                if phase.value == "Running":
                    running += 1
                else:
                    suspended += 1
    return [
        {"label": "running", "value": running},
        {"label": "suspended", "value": suspended},
    ]


def _chart_free_disk(machines, now):
    return _histogram([m.snap.info.disk_mb_free_total for m in machines], " MB")


def _chart_memory(machines, now):
    return _histogram([m.snap.info.memory_mb_total for m in machines], " MB")


def _chart_load(machines, now):
    return _histogram([m.snap.info.load_avg_total for m in machines], "")


def _chart_condor_load(machines, now):
    return _histogram([m.snap.info.load_avg_condor for m in machines], "")


def _chart_slots_per_machine(machines, now):
    counts: dict[str, int] = {}
    for m in machines:
        key = str(m.snap.info.slot_count)
        counts[key] = counts.get(key, 0) + 1
    return [
        {"label": k, "value": v}
        for k, v in sorted(counts.items(), key=lambda kv: int(kv[0]))
    ]


def _chart_os_distribution(machines, now):
    counts: dict[str, int] = {}
    for m in machines:
        counts[m.snap.info.os_name] = counts.get(m.snap.info.os_name, 0) + 1
    return _count_series(counts)


def _chart_activity_distribution(machines, now):
    counts = {a.value: 0 for a in SlotActivity}
    for m in machines:
        for obs in m.snap.slots:
            counts[obs.activity.value] += 1
    return [{"label": a.value, "value": counts[a.value]} for a in SlotActivity]


def _chart_time_in_state(machines, now):
    values = [float(t) for m in machines for t in m.time_in_state_s]
    return _histogram(values, " s")


def _chart_suspended_owners(machines, now):
    counts: dict[str, int] = {}
    for m in machines:
        for obs in m.snap.slots:
            if obs.phase is not None and obs.phase.value == "Suspended":
                counts[obs.owner] = counts.get(obs.owner, 0) + 1
    return _count_series(counts)


def _chart_restricted(machines, now):
    restricted = sum(1 for m in machines if m.snap.info.restriction is not None)
    return [
        {"label": "restricted", "value": restricted},
        {"label": "unrestricted", "value": len(machines) - restricted},
    ]


def _chart_last_execution_age(machines, now):
    ages = []
    never = 0
    for m in machines:
        if m.last_job_time is None:
            never += 1
        else:
            ages.append((now - m.last_job_time).total_seconds())
    series = _histogram(ages, " s")
    if never:
        series.append({"label": "never", "value": never})
    return series


CHART_CATALOG: dict[str, tuple[str, object]] = {
    "slots-by-state": ("Slots by state", _chart_slots_by_state),
    "machines-up-down": ("Machines up vs down", _chart_machines_up_down),
    "jobs-by-owner": ("Jobs by owner", _chart_jobs_by_owner),
    "running-vs-suspended": ("Running vs suspended jobs", _chart_running_vs_suspended),
    "free-disk-histogram": ("Free disk per machine", _chart_free_disk),
    "memory-histogram": ("Memory per machine", _chart_memory),
    "load-histogram": ("Total load per machine", _chart_load),
    "condor-load-histogram": ("Pool load per machine", _chart_condor_load),
    "slots-per-machine": ("Slots per machine", _chart_slots_per_machine),
    "os-distribution": ("Operating systems", _chart_os_distribution),
    "activity-distribution": ("Slot activities", _chart_activity_distribution),
    "time-in-state-histogram": ("Time in current state", _chart_time_in_state),
    "owners-of-suspended-jobs": ("Owners of suspended jobs", _chart_suspended_owners),
    "restricted-vs-unrestricted": ("Schedule-restricted machines", _chart_restricted),
    "last-execution-age-histogram": ("Age of last job execution", _chart_last_execution_age),
}

assert len(CHART_CATALOG) == 15


def build_charts(
    machines: list[AugmentedMachine],
    selection: tuple[str, ...] | None,
    now: dt.datetime,
) -> list[dict]:
    ids = selection if selection is not None else tuple(CHART_CATALOG)
    out = []
    for chart_id in ids:
        title, builder = CHART_CATALOG[chart_id]
        out.append({"id": chart_id, "title": title, "series": builder(machines, now)})
    return out


# --- live view with short cache --------------------------------------------

def times_in_state(
    root: DataRoot,
    machine: MachineSnapshot,
    now: dt.datetime,
    lookback_days: int = 7,
) -> tuple[int, ...]:
    """Per-slot seconds spent continuously in the current (state, activity),
    judged from stored history (newest day first, stop once every slot has
    hit a state change)."""
    current = {o.slot: (o.state, o.activity) for o in machine.slots}
    candidate = {slot: now for slot in current}
    unresolved = set(current)
    today = now.date()
    for back in range(lookback_days):
        if not unresolved:
            break
        date = today - dt.timedelta(days=back)
        day = read_machine_day(root, machine.info.machine, date)
        for obs in reversed(day):
            if obs.slot not in unresolved or obs.timestamp > now:
                continue
            if (obs.state, obs.activity) == current[obs.slot]:
                candidate[obs.slot] = obs.timestamp
            else:
                unresolved.discard(obs.slot)
    return tuple(
        int((now - candidate[o.slot]).total_seconds()) for o in machine.slots
    )


class LiveView:
    """Single-flight cached access to the status source, augmented with
    storage context; cache_s=0 disables caching entirely."""

    def __init__(self, root: DataRoot, source, *, cache_s: float, lookback_days: int, clock):
        self.root = root
        self.source = source
        self.cache_s = cache_s
        self.lookback_days = lookback_days
        self.clock = clock
        self._lock = threading.Lock()
        self._cached: tuple[float, list[AugmentedMachine], dt.datetime] | None = None
        self._queue_cached: tuple[float, QueueSummary] | None = None

    def now(self) -> dt.datetime:
        return dt.datetime.fromtimestamp(int(self.clock()), UTC)

    def machines(self) -> tuple[list[AugmentedMachine], dt.datetime]:
        with self._lock:
            mono = time.monotonic()
            if self._cached and self.cache_s > 0:
                stamp, cached, taken = self._cached
                if mono - stamp < self.cache_s:
                    return cached, taken
            now = self.now()
            text = self.source.fetch_status(now)  # SourceUnavailable propagates
            registry = try_load_registry(self.root)
            snapshot = parse_status_output(text, now, registry)
            augmented = []
            for machine in snapshot.machines:
                last_job = store_last_job_time(
                    self.root,
                    machine.info.machine,
                    self.lookback_days,
                    now=now,
                )
                tis = times_in_state(self.root, machine, now)
                augmented.append(
                    AugmentedMachine(
                        snap=machine, last_job_time=last_job, time_in_state_s=tis
                    )
                )
            self._cached = (mono, augmented, now)
            return augmented, now

    def queue(self) -> QueueSummary:
        with self._lock:
            mono = time.monotonic()
            if self._queue_cached and self.cache_s > 0:
                stamp, cached = self._queue_cached
                if mono - stamp < self.cache_s:
                    return cached
            from .records import parse_queue_output

            summary = parse_queue_output(self.source.fetch_queue(self.now()))
            self._queue_cached = (mono, summary)
            return summary


# --- serializers ------------------------------------------------------------

def _iso(t: dt.datetime | None) -> str | None:
    return None if t is None else render_timestamp(t)


def daily_summary_payload(summary: DailySummary) -> dict:
    # Percentages and averages are rounded here, at the display boundary, so
    # the dashboard can show payload values verbatim; the model keeps full
    # precision for its invariants.
    rows = [
        ("theoretical", summary.theoretical_s, 86400.0, 100.0),
        (
            "owner_idle",
            summary.owner_idle_s,
            summary.owner_idle_avg_slot_s,
            summary.owner_idle_pct,
        ),
        (
            "condor_total",
            summary.condor_total_s,
            summary.condor_total_avg_slot_s,
            summary.condor_total_pct,
        ),
        ("running", summary.running_s, summary.running_avg_slot_s, summary.running_pct),
        (
            "suspended",
            summary.suspended_s,
            summary.suspended_avg_slot_s,
            summary.suspended_pct,
        ),
    ]
    return {
        "machine": summary.machine,
        "date": summary.date.isoformat(),
        "slot_count": summary.slot_count,
        "theoretical_s": summary.theoretical_s,
        "owner_idle_s": summary.owner_idle_s,
        "condor_total_s": summary.condor_total_s,
        "running_s": summary.running_s,
        "suspended_s": summary.suspended_s,
        "table": [
            {
                "row": name,
                "total_s": total,
                "avg_slot_s": round(avg, 2),
                "pct": round(pct, 2),
            }
            for name, total, avg, pct in rows
        ],
    }


def period_summary_payload(period: PeriodSummary) -> dict:
    return {
        "machine": period.machine,
        "start_date": period.start_date.isoformat(),
        "span_days": period.span_days,
        "slot_count": period.slot_count,
        "per_day": [daily_summary_payload(d) for d in period.per_day],
        "totals": dict(period.totals),
        "avg_per_day_s": {k: round(v, 2) for k, v in period.avg_per_day_s.items()},
        "avg_per_day_slot_s": {
            k: round(v, 2) for k, v in period.avg_per_day_slot_s.items()
        },
    }


def interval_payload(interval) -> dict:
    return {
        "slot": interval.slot,
        "job_id": interval.job_id,
        "owner": interval.owner,
        "start": _iso(interval.start),
        "end": _iso(interval.end),
        "duration_s": interval.duration_s,
        "segments": [
            {
                "phase": seg.phase.value,
                "start": _iso(seg.start),
                "end": _iso(seg.end),
                "duration_s": seg.duration_s,
            }
            for seg in interval.segments
        ],
    }


def queue_payload(queue: QueueSummary) -> dict:
    return {
        "rows": [
            {"user": r.user, "running": r.running, "idle": r.idle, "held": r.held}
            for r in queue.rows
        ],
        "totals": {
            "running": queue.total_running,
            "idle": queue.total_idle,
            "held": queue.total_held,
        },
    }


def query_payload(query: PanoramicQuery) -> dict:
    return {
        "show": list(query.show),
        "fields": list(query.fields),
        "sort": query.sort,
        "dir": query.direction,
        "reachable": query.reachable,
        "os_name": query.os_name,
        "os_version": query.os_version,
        "slot_state": [s.value for s in query.slot_states],
        "owner": query.owner,
        "ranges": {
            name: {"min": rf.lo, "max": rf.hi} for name, rf in sorted(query.ranges.items())
        },
        "disk_alert_mb": query.disk_alert_mb,
        "charts": list(query.charts) if query.charts is not None else None,
        "refresh_s": query.refresh_s,
    }


def machine_payload(
    machine: AugmentedMachine, query: PanoramicQuery, now: dt.datetime
) -> dict:
    info = machine.snap.info
    alert = (
        query.disk_alert_mb is not None
        and info.disk_mb_free_total < query.disk_alert_mb
    )
    entry: dict = {
        "name": info.machine,
        "reachable": info.reachable,
        "slot_count": info.slot_count,
        "disk_alert": bool(alert),
    }
    if "slots" in query.fields:
        entry["slots"] = [
            {
                "slot": obs.slot,
                "state": obs.state.value,
                "activity": obs.activity.value,
                "display_class": obs.display_class.value,
                "load": obs.load,
                "job_id": obs.job_id,
                "owner": obs.owner,
                "time_in_state_s": tis,
            }
            for obs, tis in zip(machine.snap.slots, machine.time_in_state_s)
        ]
    if "disk_total" in query.fields:
        entry["disk_mb_free_total"] = info.disk_mb_free_total
    if "disk_per_slot" in query.fields:
        entry["disk_mb_free_per_slot"] = list(info.disk_mb_free_per_slot)
    if "memory_total" in query.fields:
        entry["memory_mb_total"] = info.memory_mb_total
    if "memory_per_slot" in query.fields:
        entry["memory_mb_per_slot"] = list(info.memory_mb_per_slot)
    if "os" in query.fields:
        entry["os_name"] = info.os_name
        entry["os_version"] = info.os_version
    if "load_total" in query.fields:
        entry["load_avg_total"] = info.load_avg_total
    if "load_condor" in query.fields:
        entry["load_avg_condor"] = info.load_avg_condor
    if "restrictions" in query.fields:
        entry["restriction"] = (
            render_restriction(info.restriction) if info.restriction else None
        )
    if "last_job_time" in query.fields:
        entry["last_job_time"] = _iso(machine.last_job_time)
        entry["last_job_age_s"] = (
            None
            if machine.last_job_time is None
            else int((now - machine.last_job_time).total_seconds())
        )
    return entry


# --- app factory ------------------------------------------------------------

def _error(status: int, error: str, detail: str, **extra) -> JSONResponse:
    body = {"error": error, "detail": detail}
    body.update(extra)
    return JSONResponse(body, status_code=status)


def _parse_date(text: str) -> dt.date | None:
    if not _DATE_RE.match(text):
        return None
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        return None


def day_detail_payload(
    root: DataRoot,
    machine: str,
    date: dt.date,
    params: ReconstructionParams,
    slot_count: int,
) -> dict:
    """Detail view: unclipped intervals touching the day, the concurrency
    curve over the day, and sample coverage."""
    by_slot = intervals_for_range(root, machine, date, 1, params)
    lo = dt.datetime.combine(date, dt.time(0), tzinfo=UTC)
    hi = lo + dt.timedelta(days=1)
    slots_out = []
    flat_clipped = []
    for slot in sorted(by_slot):
        touching = [iv for iv in by_slot[slot] if iv.end > lo and iv.start < hi]
        if touching:
            slots_out.append(
                {"slot": slot, "intervals": [interval_payload(iv) for iv in touching]}
            )
        flat_clipped.extend(clip_intervals_to_date(touching, date))
    curve = concurrency_curve(flat_clipped, date)
    observations = read_machine_day(root, machine, date)
    return {
        "machine": machine,
        "date": date.isoformat(),
        "slot_count": slot_count,
        "interval_s": params.interval_s,
        "slots": slots_out,
        "concurrency_curve": [
            {"t": _iso(t), "running": r, "suspended": s} for t, r, s in curve
        ],
        "coverage": sample_coverage(observations, date, params.interval_s),
    }


def day_summary_payload(
    root: DataRoot,
    machine: str,
    date: dt.date,
    params: ReconstructionParams,
    slot_count: int,
) -> dict:
    by_slot = intervals_for_range(root, machine, date, 1, params)
    flat = [iv for ivs in by_slot.values() for iv in ivs]
    clipped = clip_intervals_to_date(flat, date)
    summary = day_summary(machine, date, slot_count, clipped)
    payload = daily_summary_payload(summary)
    observations = read_machine_day(root, machine, date)
    payload["coverage"] = sample_coverage(observations, date, params.interval_s)
    return payload


def create_app(
    data_root,
    source_spec: str,
    *,
    interval_s: int = 300,
    cache_s: float = 5.0,
    lookback_days: int = 30,
    cors_origins: tuple[str, ...] = ("*",),
    clock=time.time,
    source=None,
) -> FastAPI:
    """Build the service; `source` overrides `source_spec` for tests."""
    root = DataRoot(data_root)
    if source is None:
        source = build_source(source_spec)
    params = ReconstructionParams(interval_s=interval_s)
    live = LiveView(
        root, source, cache_s=cache_s, lookback_days=lookback_days, clock=clock
    )
    app = FastAPI(title="poolgaze", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["GET"],
        allow_headers=["*"],
    )
    app.state.live = live

    def registry_or_none():
        return try_load_registry(root)

    @app.get("/api/machines")
    def api_machines():
        try:
            registry = load_registry(root)
        except IoFailure:
            return _error(503, "registry_missing", "machine registry not found")
        except MalformedRecord as exc:
            return _error(503, "registry_corrupt", str(exc))
        return {
            "machines": [
                {
                    "name": e.machine,
                    "slot_count": e.slot_count,
                    "restriction": render_restriction(e.restriction)
                    if e.restriction
                    else None,
                }
                for e in sorted(registry.entries, key=lambda e: e.machine)
            ]
        }

    def _machine_slot_count(name: str) -> int | None:
        registry = registry_or_none()
        if registry is None:
            return None
        entry = registry.get(name)
        return entry.slot_count if entry else None

    @app.get("/api/machines/{name}/day/{date_text}")
    def api_machine_day(name: str, date_text: str, view: str = "summary"):
        date = _parse_date(date_text)
        if date is None:
            return _error(400, "bad_date", f"malformed date: {date_text!r}")
        if view not in ("summary", "detail"):
            return _error(400, "bad_view", "view must be summary or detail")
        slot_count = _machine_slot_count(name)
        if slot_count is None:
            return _error(404, "unknown_machine", f"machine {name!r} not in registry")
        if view == "summary":
            return day_summary_payload(root, name, date, params, slot_count)
        return day_detail_payload(root, name, date, params, slot_count)

    @app.get("/api/machines/{name}/period/{start_text}")
    def api_machine_period(name: str, start_text: str, span: str = "week"):
        start = _parse_date(start_text)
        if start is None:
            return _error(400, "bad_date", f"malformed date: {start_text!r}")
        try:
            period_span = PeriodSpan(span)
        except ValueError:
            return _error(400, "bad_span", "span must be week or month")
        slot_count = _machine_slot_count(name)
        if slot_count is None:
            return _error(404, "unknown_machine", f"machine {name!r} not in registry")
        period = period_summary(
            root, name, start, period_span, params, slot_count=slot_count
        )
        return period_summary_payload(period)

    @app.get("/api/pool/status")
    def api_pool_status(request: Request):
        try:
            query = parse_panoramic_query(dict(request.query_params))
        except BadQuery as exc:
            return _error(400, "bad_query", str(exc))
        try:
            machines, taken_at = live.machines()
        except SourceUnavailable as exc:
            registry = registry_or_none()
            return _error(
                502,
                "source_unavailable",
                str(exc),
                registry=registry.names() if registry else [],
            )
        except (MalformedRecord, DuplicateSlot) as exc:
            return _error(502, "source_malformed", str(exc))
        shown, counts = apply_panoramic_query(machines, query)
        body: dict = {
            "taken_at": _iso(taken_at),
            "counts": counts,
            "query": query_payload(query),
            "refresh_s": query.refresh_s,
        }
        if "machines" in query.show:
            body["machines"] = [machine_payload(m, query, taken_at) for m in shown]
        if "queue" in query.show:
            try:
                body["queue"] = queue_payload(live.queue())
            except (SourceUnavailable, MalformedRecord):
                body["queue"] = None
        if "charts" in query.show:
            body["charts"] = build_charts(shown, query.charts, taken_at)
        return body

    @app.get("/api/queue")
    def api_queue():
        try:
            return queue_payload(live.queue())
        except SourceUnavailable as exc:
            return _error(502, "source_unavailable", str(exc))
        except MalformedRecord as exc:
            return _error(502, "source_malformed", str(exc))

    @app.get("/api/health")
    def api_health():
        now = live.now()
        data_root_ok = root.path.is_dir()
        registry_ok = registry_or_none() is not None
        try:
            source.fetch_status(now)
            source_ok = True
        except SourceUnavailable:
            source_ok = False
        last_poll_age = _last_poll_age_s(root, now)
        stale = last_poll_age is None or last_poll_age > 3 * interval_s
        status = "ok" if (data_root_ok and source_ok and not stale) else "degraded"
        return {
            "status": status,
            "data_root_ok": data_root_ok,
            "registry_ok": registry_ok,
            "source_ok": source_ok,
            "last_poll_age_s": last_poll_age,
        }

    return app


def _last_poll_age_s(root: DataRoot, now: dt.datetime) -> float | None:
    """Age of the newest stored record, judged by file mtimes in the newest
    populated day directory (walking at most ~60 days back)."""
    for back in range(60):
        date = (now - dt.timedelta(days=back)).date()
        day_dir = root.day_dir(date)
        if not day_dir.is_dir():
            continue
        mtimes = [p.stat().st_mtime for p in day_dir.glob("*.rec")]
        if mtimes:
            return max(0.0, now.timestamp() - max(mtimes))
    return None
