#!/usr/bin/env python3
"""Build a synthetic pool and collect two days of history into ./demo-data.

Walks the same path a production deployment does: a status source is polled
on aligned ticks, each poll appends records to the date tree, and the machine
registry is saved alongside.  Run this first; the other demos read its
output.
"""

import datetime as dt
from pathlib import Path

from poolgaze import (
    DataRoot,
    MachineRegistry,
    RegistryEntry,
    Scenario,
    SimulatorSource,
    poll_once,
    save_registry,
    simulate,
)

DEMO_ROOT = Path(__file__).parent / "demo-data"
INTERVAL_S = 300

# Anchor the scenario two days back at UTC midnight: the two emitted days
# land entirely in the past, and the live demos (which map wall time onto
# the scenario) still fall inside its three-day duration.
today = dt.datetime.now(dt.timezone.utc).replace(
    hour=0, minute=0, second=0, microsecond=0
)
SCENARIO = Scenario(
    seed=1405,
    machines=8,
    slots_per_machine=(8, 4, 4, 4, 2, 2, 2, 1),
    duration_s=3 * 86400,
    job_rate_per_slot_hour=0.5,
    mean_job_s=5400,
    owner_rate_per_hour=0.25,
    mean_owner_s=2400,
    suspend_prob=0.75,
    restricted_fraction=0.25,
    users=("ana", "luis", "marta", "pedro"),
    start=today - dt.timedelta(days=2),
)


def main() -> None:
    print(f"simulating {SCENARIO.machines} machines, seed {SCENARIO.seed}")
    gt = simulate(SCENARIO)
    source = SimulatorSource(gt)
    root = DataRoot(DEMO_ROOT)

    total = 0
    for tick in range(0, 2 * 86400, INTERVAL_S):
        when = SCENARIO.start + dt.timedelta(seconds=tick)
        report = poll_once(source, root, when)
        total += report.records_written
    save_registry(
        root,
        MachineRegistry(
            tuple(
                RegistryEntry(m.name, m.slot_count, restriction=m.restriction)
                for m in gt.machines
            )
        ),
    )
    print(f"collected {total} records over 2 days into {root.path}")

    day_dir = root.day_dir(SCENARIO.start.date())
    print(f"\nlayout under {root.path}:")
    for child in sorted(day_dir.iterdir())[:4]:
        print(f"  {child.relative_to(root.path)}")
    sample = sorted(day_dir.glob("*.rec"))[0]
    print(f"\nfirst lines of {sample.name}:")
    for line in sample.read_text().splitlines()[:4]:
        print(f"  {line}")


if __name__ == "__main__":
    main()
