/** Typed client for the monitoring API. The dashboard renders these payloads
 * verbatim; it never recomputes an accounting figure. */

export interface MachineEntry {
  name: string;
  slot_count: number;
  restriction: string | null;
}

export interface Coverage {
  observed_ticks: number;
  expected_ticks: number;
  covered_s: number;
  coverage_pct: number;
}

export interface TableRow {
  row: string;
  total_s: number;
  avg_slot_s: number;
  pct: number;
}

export interface DaySummaryPayload {
  machine: string;
  date: string;
  slot_count: number;
  theoretical_s: number;
  owner_idle_s: number;
  condor_total_s: number;
  running_s: number;
  suspended_s: number;
  table: TableRow[];
  coverage: Coverage;
}

export interface SegmentPayload {
  phase: string;
  start: string;
  end: string;
  duration_s: number;
}

export interface IntervalPayload {
  slot: number;
  job_id: string;
  owner: string;
  start: string;
  end: string;
  duration_s: number;
  segments: SegmentPayload[];
}

export interface CurvePoint {
  t: string;
  running: number;
  suspended: number;
}

export interface DayDetailPayload {
  machine: string;
  date: string;
  slot_count: number;
  interval_s: number;
  slots: { slot: number; intervals: IntervalPayload[] }[];
  concurrency_curve: CurvePoint[];
  coverage: Coverage;
}

export interface PeriodPayload {
  machine: string;
  start_date: string;
  span_days: number;
  slot_count: number;
  per_day: DaySummaryPayload[];
  totals: Record<string, number>;
  avg_per_day_s: Record<string, number>;
  avg_per_day_slot_s: Record<string, number>;
}

export interface SlotCell {
  slot: number;
  state: string;
  activity: string;
  display_class: string;
  load: number;
  job_id: string | null;
  owner: string | null;
  time_in_state_s: number;
}

export interface PoolMachine {
  name: string;
  reachable: boolean;
  slot_count: number;
  disk_alert: boolean;
  slots?: SlotCell[];
  disk_mb_free_total?: number;
  disk_mb_free_per_slot?: number[];
  memory_mb_total?: number;
  memory_mb_per_slot?: number[];
  os_name?: string;
  os_version?: string;
  load_avg_total?: number;
  load_avg_condor?: number;
  restriction?: string | null;
  last_job_time?: string | null;
  last_job_age_s?: number | null;
}

export interface QueuePayload {
  rows: { user: string; running: number; idle: number; held: number }[];
  totals: { running: number; idle: number; held: number };
}

export interface ChartPayload {
  id: string;
  title: string;
  series: { label: string; value: number }[];
}

export interface PoolStatusPayload {
  taken_at: string;
  counts: {
    machines_shown: number;
    machines_total: number;
    slots_shown: number;
    slots_total: number;
  };
  query: Record<string, unknown>;
  refresh_s: number;
  machines?: PoolMachine[];
  queue?: QueuePayload | null;
  charts?: ChartPayload[];
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`API ${status}: ${detail}`);
  }
}

async function getJson<T>(url: string): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url);
  } catch (err) {
    throw new ApiError(0, String(err));
  }
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && body.detail) detail = body.detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(readonly base: string) {}

  private url(path: string, params?: Record<string, string>): string {
    const u = new URL(path, this.base);
    if (params) {
      for (const key of Object.keys(params).sort()) {
        u.searchParams.set(key, params[key]);
      }
    }
    return u.toString();
  }

  machines(): Promise<{ machines: MachineEntry[] }> {
    return getJson(this.url("/api/machines"));
  }

  daySummary(machine: string, date: string): Promise<DaySummaryPayload> {
    return getJson(
      this.url(`/api/machines/${encodeURIComponent(machine)}/day/${date}`, {
        view: "summary",
      }),
    );
  }

  dayDetail(machine: string, date: string): Promise<DayDetailPayload> {
    return getJson(
      this.url(`/api/machines/${encodeURIComponent(machine)}/day/${date}`, {
        view: "detail",
      }),
    );
  }

  period(
    machine: string,
    start: string,
    span: "week" | "month",
  ): Promise<PeriodPayload> {
    return getJson(
      this.url(`/api/machines/${encodeURIComponent(machine)}/period/${start}`, {
        span,
      }),
    );
  }

  poolStatus(params: Record<string, string>): Promise<PoolStatusPayload> {
    return getJson(this.url("/api/pool/status", params));
  }

  queue(): Promise<QueuePayload> {
    return getJson(this.url("/api/queue"));
  }
}
