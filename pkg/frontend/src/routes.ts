/** View routes, serializable to/from the URL fragment so every view is a
 * shareable link. parse(serialize(route)) is an exact round-trip. */

export type ViewRoute =
  | { kind: "select" }
  | { kind: "day-summary"; machine: string; date: string }
  | { kind: "day-detail"; machine: string; date: string }
  | { kind: "week"; machine: string; start: string }
  | { kind: "month"; machine: string; start: string }
  | { kind: "panoramic"; query: Record<string, string> };

const DATE_RE = /^\d{4}-\d{2}-\d{2}$/;

export function serializeRoute(route: ViewRoute): string {
  switch (route.kind) {
    case "select":
      return "#/select";
    case "day-summary":
      return `#/machine/${encodeURIComponent(route.machine)}/day/${route.date}/summary`;
    case "day-detail":
      return `#/machine/${encodeURIComponent(route.machine)}/day/${route.date}/detail`;
    case "week":
      return `#/machine/${encodeURIComponent(route.machine)}/week/${route.start}`;
    case "month":
      return `#/machine/${encodeURIComponent(route.machine)}/month/${route.start}`;
    case "panoramic": {
      const params = new URLSearchParams();
      for (const key of Object.keys(route.query).sort()) {
        params.set(key, route.query[key]);
      }
      const text = params.toString();
      return text ? `#/panoramic?${text}` : "#/panoramic";
    }
  }
}

export function parseRoute(fragment: string): ViewRoute | null {
  let text = fragment.startsWith("#") ? fragment.slice(1) : fragment;
  if (text === "" || text === "/") return { kind: "select" };
  if (!text.startsWith("/")) return null;
  text = text.slice(1);

  if (text === "select") return { kind: "select" };

  if (text === "panoramic" || text.startsWith("panoramic?")) {
    const query: Record<string, string> = {};
    const qpos = text.indexOf("?");
    if (qpos >= 0) {
      for (const [key, value] of new URLSearchParams(text.slice(qpos + 1))) {
        query[key] = value;
      }
    }
    return { kind: "panoramic", query };
  }

  const parts = text.split("/");
  if (parts[0] !== "machine" || parts.length < 4) return null;
  const machine = decodeURIComponent(parts[1]);
  if (!machine) return null;
  if (parts[2] === "day" && parts.length === 5 && DATE_RE.test(parts[3])) {
    if (parts[4] === "summary") {
      return { kind: "day-summary", machine, date: parts[3] };
    }
    if (parts[4] === "detail") {
      return { kind: "day-detail", machine, date: parts[3] };
    }
    return null;
  }
  if (parts[2] === "week" && parts.length === 4 && DATE_RE.test(parts[3])) {
    return { kind: "week", machine, start: parts[3] };
  }
  if (parts[2] === "month" && parts.length === 4 && DATE_RE.test(parts[3])) {
    return { kind: "month", machine, start: parts[3] };
  }
  return null;
}
