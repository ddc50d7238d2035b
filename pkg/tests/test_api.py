"""HTTP API: endpoint contracts, strict query parsing, filter semantics."""

from __future__ import annotations

import datetime as dt
import json
import random

import pytest
from fastapi.testclient import TestClient

from poolgaze.aggregate import ReconstructionParams
from poolgaze.api import (
    AugmentedMachine,
    BadQuery,
    CHART_CATALOG,
    PanoramicQuery,
    RangeFilter,
    apply_panoramic_query,
    create_app,
    day_detail_payload,
    day_summary_payload,
    parse_panoramic_query,
)
from poolgaze.collector import SimulatorSource, SourceUnavailable, poll_once
from poolgaze.model import (
    UTC,
    MachineInfo,
    MachineSnapshot,
    SlotActivity,
    SlotObservation,
    SlotState,
)
from poolgaze.simulate import Scenario, simulate
from poolgaze.store import DataRoot, MachineRegistry, RegistryEntry, save_registry

from conftest import ts

SCENARIO = Scenario(
    seed=99,
    machines=3,
    slots_per_machine=2,
    duration_s=2 * 86400,
    job_rate_per_slot_hour=1.0,
    owner_rate_per_hour=0.3,
)
NOW = SCENARIO.start + dt.timedelta(days=1, hours=6)
PARAMS = ReconstructionParams(interval_s=300)


@pytest.fixture(scope="module")
def stack(tmp_path_factory):
    """Data root with one simulated day collected, plus an app over it."""
    root = DataRoot(tmp_path_factory.mktemp("api") / "data")
    gt = simulate(SCENARIO)
    source = SimulatorSource(gt)
    for k in range(0, 86400, 300):
        poll_once(source, root, SCENARIO.start + dt.timedelta(seconds=k))
    registry = MachineRegistry(
        tuple(RegistryEntry(m.name, m.slot_count) for m in gt.machines)
        + (RegistryEntry("ghost", 4),)
    )
    save_registry(root, registry)
    app = create_app(
        root.path,
        "sim:",
        source=source,
        cache_s=0.0,
        clock=lambda: NOW.timestamp(),
    )
    return root, TestClient(app), gt


def get(stack, path, expect=200):
    _, client, _ = stack
    response = client.get(path)
    assert response.status_code == expect, response.text
    return response.json()


# --- /api/machines ---------------------------------------------------------------

def test_machines_listing_sorted(stack):
    body = get(stack, "/api/machines")
    names = [m["name"] for m in body["machines"]]
    assert names == sorted(names)
    assert names == ["ghost", "node00", "node01", "node02"]
    assert body["machines"][1]["slot_count"] == 2


def test_machines_missing_registry_503(tmp_path):
    app = create_app(tmp_path / "empty", "sim:", cache_s=0.0)
    client = TestClient(app)
    response = client.get("/api/machines")
    assert response.status_code == 503
    assert response.json()["error"] == "registry_missing"


# --- day endpoints -----------------------------------------------------------------

def test_day_summary_empty_day(stack):
    body = get(stack, "/api/machines/node00/day/2013-01-01")
    assert body["owner_idle_s"] == body["theoretical_s"] == 2 * 86400
    assert body["table"][1]["pct"] == 100.0
    assert [row["row"] for row in body["table"]] == [
        "theoretical",
        "owner_idle",
        "condor_total",
        "running",
        "suspended",
    ]


def test_day_bad_date_400(stack):
    _, client, _ = stack
    assert client.get("/api/machines/node00/day/2014-13-01").status_code == 400
    assert client.get("/api/machines/node00/day/junk").status_code == 400
    assert client.get("/api/machines/node00/day/2014-6-2").status_code == 400


def test_day_unknown_machine_404(stack):
    _, client, _ = stack
    response = client.get("/api/machines/warp/day/2014-06-02")
    assert response.status_code == 404
    assert response.json()["error"] == "unknown_machine"


def test_day_bad_view_400(stack):
    _, client, _ = stack
    assert (
        client.get("/api/machines/node00/day/2014-06-02?view=x").status_code == 400
    )


def test_day_detail_matches_module_call_bytes(stack):
    root, client, _ = stack
    response = client.get("/api/machines/node00/day/2014-06-02?view=detail")
    assert response.status_code == 200
    direct = day_detail_payload(root, "node00", dt.date(2014, 6, 2), PARAMS, 2)
    expected = json.dumps(
        direct, ensure_ascii=False, allow_nan=False, indent=None, separators=(",", ":")
    ).encode()
    assert response.content == expected


def test_day_summary_matches_module_call(stack):
    root, client, _ = stack
    body = get(stack, "/api/machines/node00/day/2014-06-02")
    direct = day_summary_payload(root, "node00", dt.date(2014, 6, 2), PARAMS, 2)
    assert body == direct
    assert body["running_s"] + body["suspended_s"] + body["owner_idle_s"] == (
        body["theoretical_s"]
    )


def test_day_detail_has_interval_fields(stack):
    body = get(stack, "/api/machines/node00/day/2014-06-02?view=detail")
    assert body["coverage"]["coverage_pct"] == 100.0
    assert body["concurrency_curve"][0]["t"] == "2014-06-02T00:00:00Z"
    for slot_entry in body["slots"]:
        for interval in slot_entry["intervals"]:
            assert set(interval) == {
                "slot", "job_id", "owner", "start", "end", "duration_s", "segments",
            }
            for segment in interval["segments"]:
                assert segment["phase"] in ("Running", "Suspended")


# --- period endpoints ----------------------------------------------------------------

def test_period_week(stack):
    body = get(stack, "/api/machines/node00/period/2014-06-02?span=week")
    assert body["span_days"] == 7
    assert len(body["per_day"]) == 7
    for figure, total in body["totals"].items():
        assert total == sum(day[figure] for day in body["per_day"])


def test_period_month_span(stack):
    body = get(stack, "/api/machines/node00/period/2014-06-05?span=month")
    assert body["span_days"] == 30
    assert len(body["per_day"]) == 30


def test_period_bad_span(stack):
    _, client, _ = stack
    assert (
        client.get("/api/machines/node00/period/2014-06-02?span=year").status_code
        == 400
    )


# --- panoramic view -------------------------------------------------------------------

def test_pool_status_no_filters_shows_everything(stack):
    body = get(stack, "/api/pool/status")
    counts = body["counts"]
    assert counts["machines_shown"] == counts["machines_total"] == 4
    assert counts["slots_shown"] == counts["slots_total"] == 6
    names = [m["name"] for m in body["machines"]]
    assert names == sorted(names)
    ghost = next(m for m in body["machines"] if m["name"] == "ghost")
    assert ghost["reachable"] is False
    assert ghost["slots"] == []
    assert body["queue"] is not None
    assert body["charts"] is not None


def test_pool_status_reachability_filter(stack):
    body = get(stack, "/api/pool/status?reachable=down")
    assert [m["name"] for m in body["machines"]] == ["ghost"]
    body = get(stack, "/api/pool/status?reachable=up")
    assert body["counts"]["machines_shown"] == 3


def test_pool_status_unknown_filter_400(stack):
    _, client, _ = stack
    response = client.get("/api/pool/status?bogus=1")
    assert response.status_code == 400
    assert "bogus" in response.json()["detail"]


def test_pool_status_bad_range_400(stack):
    _, client, _ = stack
    response = client.get(
        "/api/pool/status?memory_mb_min=100&memory_mb_max=50"
    )
    assert response.status_code == 400


def test_pool_status_disk_alert_flag(stack):
    body = get(stack, "/api/pool/status?disk_alert_mb=999999999")
    reachable = [m for m in body["machines"] if m["reachable"]]
    assert all(m["disk_alert"] for m in reachable)
    body = get(stack, "/api/pool/status?disk_alert_mb=0")
    assert not any(m["disk_alert"] for m in body["machines"])


def test_pool_status_show_toggles(stack):
    body = get(stack, "/api/pool/status?show=machines")
    assert "queue" not in body
    assert "charts" not in body
    assert "machines" in body
    body = get(stack, "/api/pool/status?show=queue")
    assert "machines" not in body
    assert "queue" in body


def test_pool_status_field_selection(stack):
    body = get(stack, "/api/pool/status?fields=name,os,last_job_time")
    machine = next(m for m in body["machines"] if m["name"] == "node00")
    assert "os_name" in machine
    assert "last_job_time" in machine
    assert "slots" not in machine
    assert "memory_mb_total" not in machine


def test_pool_status_sorting(stack):
    body = get(stack, "/api/pool/status?sort=slot_count&dir=desc&fields=name,slots")
    counts = [m["slot_count"] for m in body["machines"]]
    assert counts == sorted(counts, reverse=True)


def test_pool_status_slot_state_filter_brute_force(stack):
    body = get(stack, "/api/pool/status?slot_state=Claimed")
    full = get(stack, "/api/pool/status")
    expected = [
        m["name"]
        for m in full["machines"]
        if any(s["state"] == "Claimed" for s in m["slots"])
    ]
    assert [m["name"] for m in body["machines"]] == expected


def test_pool_status_charts_all_and_selected(stack):
    body = get(stack, "/api/pool/status")
    assert [c["id"] for c in body["charts"]] == list(CHART_CATALOG)
    assert len(body["charts"]) == 15
    body = get(stack, "/api/pool/status?charts=slots-by-state")
    assert [c["id"] for c in body["charts"]] == ["slots-by-state"]
    _, client, _ = stack
    assert client.get("/api/pool/status?charts=nope").status_code == 400


def test_pool_status_time_in_state_present(stack):
    body = get(stack, "/api/pool/status")
    node = next(m for m in body["machines"] if m["name"] == "node00")
    assert all(s["time_in_state_s"] >= 0 for s in node["slots"])


def test_pool_status_source_down_502(stack):
    root, _, _ = stack

    class DownSource:
        def fetch_status(self, now=None):
            raise SourceUnavailable("switch fried")

        def fetch_queue(self, now=None):
            raise SourceUnavailable("switch fried")

    app = create_app(root.path, "sim:", source=DownSource(), cache_s=0.0)
    client = TestClient(app)
    response = client.get("/api/pool/status")
    assert response.status_code == 502
    body = response.json()
    assert body["error"] == "source_unavailable"
    assert body["registry"] == ["ghost", "node00", "node01", "node02"]
    assert client.get("/api/queue").status_code == 502


# --- queue and health ------------------------------------------------------------------

def test_queue_endpoint(stack):
    body = get(stack, "/api/queue")
    assert body["totals"]["running"] == sum(r["running"] for r in body["rows"])
    assert body["totals"]["idle"] == sum(r["idle"] for r in body["rows"])


def test_health_endpoint(stack):
    body = get(stack, "/api/health")
    assert body["data_root_ok"] is True
    assert body["source_ok"] is True
    assert body["registry_ok"] is True
    # Collected data ends a day before NOW, so the store reads as stale.
    assert body["last_poll_age_s"] is None or body["last_poll_age_s"] >= 0


def test_health_missing_root(tmp_path):
    app = create_app(tmp_path / "nope", "sim:", cache_s=0.0)
    client = TestClient(app)
    body = client.get("/api/health").json()
    assert body["data_root_ok"] is False
    assert body["status"] == "degraded"


# --- query parsing ------------------------------------------------------------------------

def test_parse_query_defaults():
    q = parse_panoramic_query({})
    assert q.show == ("machines", "queue", "charts")
    assert q.fields == ("name", "slots")
    assert q.sort == "name"
    assert q.refresh_s == 30


def test_parse_query_rejects_unknowns():
    with pytest.raises(BadQuery):
        parse_panoramic_query({"colour": "red"})
    with pytest.raises(BadQuery):
        parse_panoramic_query({"sort": "height"})
    with pytest.raises(BadQuery):
        parse_panoramic_query({"slot_state": "Sleeping"})
    with pytest.raises(BadQuery):
        parse_panoramic_query({"refresh_s": "0"})
    with pytest.raises(BadQuery):
        parse_panoramic_query({"memory_mb_min": "10", "memory_mb_max": "1"})


def test_parse_query_ranges_open_ended():
    q = parse_panoramic_query({"memory_mb_min": "1024"})
    rf = q.ranges["memory_mb"]
    assert rf.contains(1024) and rf.contains(10**9) and not rf.contains(1023)


# --- filter soundness vs brute force ----------------------------------------------------

def random_augmented(rng: random.Random, name: str) -> AugmentedMachine:
    slot_count = rng.randint(1, 4)
    reachable = rng.random() > 0.2
    states = list(SlotState)
    activities = list(SlotActivity)
    slots = []
    tis = []
    if reachable:
        for s in range(1, slot_count + 1):
            state = rng.choice(states)
            claimed = state is SlotState.CLAIMED
            slots.append(
                SlotObservation(
                    timestamp=NOW,
                    machine=name,
                    slot=s,
                    state=state,
                    activity=rng.choice(activities),
                    load=rng.random() * 3,
                    job_id=f"{rng.randint(1, 50)}.0" if claimed else None,
                    owner=rng.choice(["alice", "bob", "carol"]) if claimed else None,
                )
            )
            tis.append(rng.randrange(0, 100000))
    info = MachineInfo(
        machine=name,
        slot_count=slot_count,
        os_name=rng.choice(["Linux", "Windows", "unknown"]),
        os_version=rng.choice(["fedora-20", "ubuntu-14.04", "7-sp1", "unknown"]),
        memory_mb_total=rng.choice([2048, 4096, 8192, 16384]),
        memory_mb_per_slot=(1024,) * slot_count,
        disk_mb_free_total=rng.randrange(0, 200000),
        disk_mb_free_per_slot=(100,) * slot_count,
        load_avg_total=round(rng.random() * 4, 2),
        load_avg_condor=0.0,
        reachable=reachable,
    )
    return AugmentedMachine(
        snap=MachineSnapshot(info=info, slots=tuple(slots), time_in_state_s=tuple(tis)),
        last_job_time=None if rng.random() < 0.3 else NOW - dt.timedelta(
            seconds=rng.randrange(0, 10 * 86400)
        ),
        time_in_state_s=tuple(tis),
    )


def random_query(rng: random.Random) -> PanoramicQuery:
    ranges = {}
    for field_name in ("memory_mb", "disk_mb_free", "load_avg_total", "slot_count",
                       "time_in_state_s"):
        if rng.random() < 0.3:
            lo = rng.choice([None, rng.uniform(0, 50000)])
            hi = rng.choice([None, rng.uniform(0, 200000)])
            if lo is not None and hi is not None and lo > hi:
                lo, hi = hi, lo
            if lo is None and hi is None:
                continue
            ranges[field_name] = RangeFilter(lo, hi)
    return PanoramicQuery(
        reachable=rng.choice(["up", "down", "any"]),
        os_name=rng.choice([None, "Linux", "Windows"]),
        os_version=rng.choice([None, "fedora", "7-"]),
        slot_states=tuple(
            rng.sample(list(SlotState), k=rng.randint(1, 2))
        ) if rng.random() < 0.4 else (),
        owner=rng.choice([None, "alice", "bob"]),
        ranges=ranges,
        sort=rng.choice(["name", "load", "slot_count", "last_job_time"]),
        direction=rng.choice(["asc", "desc"]),
    )


def brute_force_filter(machines, query: PanoramicQuery) -> set[str]:
    """Independent re-evaluation of the filter semantics by plain loops."""
    result = set()
    for m in machines:
        info = m.snap.info
        if query.reachable == "up" and not info.reachable:
            continue
        if query.reachable == "down" and info.reachable:
            continue
        if query.os_name is not None and info.os_name != query.os_name:
            continue
        if query.os_version is not None and not info.os_version.startswith(
            query.os_version
        ):
            continue
        values = {
            "memory_mb": info.memory_mb_total,
            "disk_mb_free": info.disk_mb_free_total,
            "load_avg_total": info.load_avg_total,
            "load_avg_condor": info.load_avg_condor,
            "slot_count": info.slot_count,
        }
        bad = False
        for key, value in values.items():
            rf = query.ranges.get(key)
            if rf is None:
                continue
            if rf.lo is not None and value < rf.lo:
                bad = True
            if rf.hi is not None and value > rf.hi:
                bad = True
        if bad:
            continue
        slot_preds = bool(query.slot_states) or query.owner is not None or (
            "time_in_state_s" in query.ranges
        )
        if slot_preds:
            any_slot = False
            for obs, tis in zip(m.snap.slots, m.time_in_state_s):
                if query.slot_states and obs.state not in query.slot_states:
                    continue
                if query.owner is not None and obs.owner != query.owner:
                    continue
                rf = query.ranges.get("time_in_state_s")
                if rf is not None:
                    if rf.lo is not None and tis < rf.lo:
                        continue
                    if rf.hi is not None and tis > rf.hi:
                        continue
                any_slot = True
                break
            if not any_slot:
                continue
        result.add(info.machine)
    return result


def test_filter_soundness_and_completeness_random():
    rng = random.Random(2024)
    for _ in range(150):
        machines = [
            random_augmented(rng, f"m{idx:02d}") for idx in range(rng.randint(1, 12))
        ]
        query = random_query(rng)
        shown, counts = apply_panoramic_query(machines, query)
        assert {m.snap.info.machine for m in shown} == brute_force_filter(
            machines, query
        )
        assert counts["machines_shown"] == len(shown)
        assert counts["machines_total"] == len(machines)
        assert counts["slots_shown"] <= counts["slots_total"]
