/** Color mapping for slot cells and time charts.
 *
 * The display-class table must stay identical to the server's mapping; both
 * sides are pinned by the shared fixture tests/fixtures/display_classes.json
 * in the repository root, never by comparing against each other.
 */

export const CELL_COLORS: Record<string, string> = {
  OwnerBlue: "#3b6fd4",
  RunningRed: "#d43b3b",
  IdleGreen: "#3bb273",
  SuspendedAmber: "#e0a020",
  OtherGray: "#9aa0a6",
};

// Time charts use the accounting palette: running blue, suspended red.
export const CHART_RUNNING = "#3b6fd4";
export const CHART_SUSPENDED = "#d43b3b";

export function displayClassFor(state: string, activity: string): string {
  if (state === "Claimed") {
    if (activity === "Busy") return "RunningRed";
    if (activity === "Suspended") return "SuspendedAmber";
    return "OtherGray";
  }
  if (state === "Owner") return "OwnerBlue";
  if (state === "Unclaimed" && activity === "Idle") return "IdleGreen";
  return "OtherGray";
}

export function cellColor(displayClass: string): string {
  return CELL_COLORS[displayClass] ?? CELL_COLORS.OtherGray;
}
