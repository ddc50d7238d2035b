"""poolgaze: monitoring and usage accounting for opportunistic compute pools.

A polling collector samples pool status into a plain-text date-tree store;
the aggregator reconstructs per-slot job timelines and daily/weekly/monthly
usage tables from those samples; an HTTP API serves history, summaries, and
a live filterable panoramic view of every machine and slot.
"""

from .model import (
    DailySummary,
    DisplayClass,
    JobInterval,
    MachineInfo,
    MachineSnapshot,
    PeriodSummary,
    Phase,
    PoolSnapshot,
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
from .records import (
    FORMAT_HEADER,
    DuplicateSlot,
    MachineInfoRecord,
    MalformedRecord,
    parse_queue_output,
    parse_record_line,
    parse_status_output,
    render_record_line,
)
from .store import (
    DataRoot,
    IoFailure,
    MachineRegistry,
    RegistryEntry,
    RoutingError,
    WriterLock,
    append_observations,
    last_job_time,
    load_registry,
    read_machine_day,
    read_range,
    save_registry,
)
from .aggregate import (
    PeriodSpan,
    ReconstructionParams,
    clip_intervals_to_date,
    concurrency_curve,
    day_summary,
    period_summary,
    reconstruct_intervals,
    sample_coverage,
)
from .simulate import (
    GroundTruth,
    InvalidScenario,
    Scenario,
    queue_at,
    simulate,
    status_at,
)
from .collector import (
    CollectorConfig,
    CommandSource,
    FileSource,
    PollReport,
    SimulatorSource,
    SourceUnavailable,
    build_machine_registry,
    build_source,
    poll_once,
    run_loop,
)

__version__ = "0.1.0"
