/** SVG chart builders: step charts for job concurrency, Gantt lanes for the
 * per-slot detail view, stacked day bars for periods, and plain bar charts
 * for the panoramic catalog.
 *
 * Coordinates are layout computation; every number a user reads still comes
 * from the payload via val()/svgVal(). Axis ticks are deliberately
 * non-numeric (except the slot-count maximum, itself a payload field).
 */

import { CurvePoint, IntervalPayload } from "./api.js";
import { CHART_RUNNING, CHART_SUSPENDED } from "./colors.js";
import { svg, svgVal } from "./dom.js";

const W = 720;

function sec(iso: string): number {
  return Date.parse(iso) / 1000;
}

interface Step {
  start: number;
  end: number;
  running: number;
  suspended: number;
}

/** Expand curve points into [start, end) steps over the chart window,
 * clipping a step that spans the window edge (so a segment across noon
 * shows in both the AM and the PM chart). */
function stepsInWindow(
  curve: CurvePoint[],
  windowStart: number,
  windowEnd: number,
): Step[] {
  const steps: Step[] = [];
  for (let i = 0; i < curve.length; i++) {
    const start = sec(curve[i].t);
    const end = i + 1 < curve.length ? sec(curve[i + 1].t) : windowEnd;
    const lo = Math.max(start, windowStart);
    const hi = Math.min(end, windowEnd);
    if (hi <= lo) continue;
    steps.push({
      start: lo,
      end: hi,
      running: curve[i].running,
      suspended: curve[i].suspended,
    });
  }
  return steps;
}

function stepPath(
  steps: Step[],
  pick: (s: Step) => number,
  x: (t: number) => number,
  y: (v: number) => number,
): string {
  if (!steps.length) return "";
  let d = `M ${x(steps[0].start)} ${y(pick(steps[0]))}`;
  for (let i = 0; i < steps.length; i++) {
    d += ` H ${x(steps[i].end)}`;
    if (i + 1 < steps.length) d += ` V ${y(pick(steps[i + 1]))}`;
  }
  return d;
}

/** One half-day step chart (AM or PM) with y spanning 0..slot_count. */
export function halfDayStepChart(
  curve: CurvePoint[],
  slotCount: number,
  windowStartIso: string,
  hours: number = 12,
): SVGElement {
  const H = 150;
  const top = 16;
  const windowStart = sec(windowStartIso);
  const windowEnd = windowStart + hours * 3600;
  const steps = stepsInWindow(curve, windowStart, windowEnd);
  const x = (t: number) => ((t - windowStart) / (windowEnd - windowStart)) * W;
  const y = (v: number) => H - ((H - top) * v) / Math.max(slotCount, 1);

  const root = svg("svg", {
    viewBox: `0 0 ${W} ${H}`,
    class: "step-chart",
    preserveAspectRatio: "none",
  });
  root.append(
    svg("line", {
      x1: "0", y1: String(y(slotCount)), x2: String(W), y2: String(y(slotCount)),
      class: "axis-max",
    }),
    svg("line", {
      x1: "0", y1: String(H), x2: String(W), y2: String(H), class: "axis",
    }),
  );
  const maxLabel = svg("text", { x: "4", y: String(y(slotCount) - 3), class: "axis-label" });
  maxLabel.append(svgVal(slotCount));
  root.append(maxLabel);
  if (steps.length) {
    root.append(
      svg("path", {
        d: stepPath(steps, (s) => s.suspended, x, y),
        class: "series suspended",
        fill: "none",
        stroke: CHART_SUSPENDED,
        "stroke-width": "2",
      }),
      svg("path", {
        d: stepPath(steps, (s) => s.running, x, y),
        class: "series running",
        fill: "none",
        stroke: CHART_RUNNING,
        "stroke-width": "2",
      }),
    );
  }
  return root;
}

export interface GanttHover {
  interval: IntervalPayload;
  clientX: number;
  clientY: number;
}

/** One slot lane of the detail Gantt. Bars get inline labels only when wide
 * enough; hover details always come from the tooltip callback. */
export function ganttLane(
  intervals: IntervalPayload[],
  dayStartIso: string,
  onHover: (hover: GanttHover | null) => void,
): SVGElement {
  const H = 26;
  const dayStart = sec(dayStartIso);
  const dayEnd = dayStart + 86400;
  const x = (t: number) =>
    ((Math.min(Math.max(t, dayStart), dayEnd) - dayStart) / 86400) * W;
  const root = svg("svg", {
    viewBox: `0 0 ${W} ${H}`,
    class: "gantt-lane",
    preserveAspectRatio: "none",
  });
  root.append(
    svg("line", { x1: "0", y1: String(H - 1), x2: String(W), y2: String(H - 1), class: "axis" }),
  );
  for (const interval of intervals) {
    const group = svg("g", { class: "job-bar" });
    for (const segment of interval.segments) {
      const x0 = x(sec(segment.start));
      const x1 = x(sec(segment.end));
      if (x1 <= x0) continue;
      group.append(
        svg("rect", {
          x: String(x0),
          y: "3",
          width: String(x1 - x0),
          height: String(H - 7),
          fill: segment.phase === "Running" ? CHART_RUNNING : CHART_SUSPENDED,
        }),
      );
    }
    const barStart = x(sec(interval.start));
    const barEnd = x(sec(interval.end));
    if (barEnd - barStart > 80) {
      const label = svg("text", {
        x: String(barStart + 4),
        y: String(H - 10),
        class: "bar-label",
      });
      label.append(svgVal(interval.job_id));
      label.append(" ");
      label.append(svgVal(interval.owner));
      group.append(label);
    }
    group.addEventListener("mouseenter", (event) =>
      onHover({
        interval,
        clientX: (event as MouseEvent).clientX,
        clientY: (event as MouseEvent).clientY,
      }),
    );
    group.addEventListener("mouseleave", () => onHover(null));
    root.append(group);
  }
  return root;
}

/** Stacked per-day bars for week/month views (blue running over red
 * suspended); heights are fractions of the day's theoretical maximum. */
export function periodBars(
  perDay: { date: string; running_s: number; suspended_s: number; theoretical_s: number }[],
): SVGElement {
  const H = 180;
  const root = svg("svg", {
    viewBox: `0 0 ${W} ${H}`,
    class: "period-bars",
    preserveAspectRatio: "none",
  });
  root.append(
    svg("line", { x1: "0", y1: String(H - 1), x2: String(W), y2: String(H - 1), class: "axis" }),
  );
  const n = perDay.length || 1;
  const slotWidth = W / n;
  const barWidth = Math.max(slotWidth * 0.7, 2);
  perDay.forEach((day, i) => {
    const x0 = i * slotWidth + (slotWidth - barWidth) / 2;
    const runningH = (H - 10) * (day.running_s / day.theoretical_s);
    const suspendedH = (H - 10) * (day.suspended_s / day.theoretical_s);
    const title = svg("title");
    title.append(svgVal(day.date));
    const group = svg("g", { class: "day-bar" }, [title]);
    if (suspendedH > 0) {
      group.append(
        svg("rect", {
          x: String(x0),
          y: String(H - 1 - suspendedH),
          width: String(barWidth),
          height: String(suspendedH),
          fill: CHART_SUSPENDED,
        }),
      );
    }
    if (runningH > 0) {
      group.append(
        svg("rect", {
          x: String(x0),
          y: String(H - 1 - suspendedH - runningH),
          width: String(barWidth),
          height: String(runningH),
          fill: CHART_RUNNING,
        }),
      );
    }
    root.append(group);
  });
  return root;
}

/** Horizontal bar chart for one panoramic catalog entry. */
export function barChart(series: { label: string; value: number }[]): HTMLElement {
  const container = document.createElement("div");
  container.className = "bar-chart";
  const max = Math.max(1, ...series.map((p) => p.value));
  for (const point of series) {
    const row = document.createElement("div");
    row.className = "bar-row";
    const label = document.createElement("span");
    label.className = "bar-key";
    label.append(svgValAsHtml(point.label));
    const bar = document.createElement("span");
    bar.className = "bar-fill";
    bar.style.width = `${(100 * point.value) / max}%`;
    const value = document.createElement("span");
    value.className = "bar-value";
    value.append(svgValAsHtml(point.value));
    row.append(label, bar, value);
    container.append(row);
  }
  return container;
}

function svgValAsHtml(value: string | number): HTMLSpanElement {
  const span = document.createElement("span");
  span.setAttribute("data-contract", "1");
  span.textContent = String(value);
  return span;
}
