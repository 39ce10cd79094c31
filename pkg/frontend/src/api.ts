/**
 * Thin client for the control-plane HTTP API.
 *
 * Uses fetch streaming (not EventSource) for the log stream so the same
 * code runs in the browser and under node-based tests.
 */

export interface RunSummary {
  run_id: string;
  role: string;
  state: string;
  started_at: number;
  finished_at: number | null;
  error: string | null;
}

export interface RunDetail extends RunSummary {
  params: Record<string, unknown>;
  result: Record<string, unknown> | null;
}

export type StartResult =
  | { ok: true; run: RunSummary }
  | { ok: false; status: number; detail: string };

export async function startRun(base: string, role: string,
                               params: Record<string, unknown>): Promise<StartResult> {
  const resp = await fetch(`${base}/api/runs`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ role, params }),
  });
  const body = await resp.json();
  if (!resp.ok) {
    return { ok: false, status: resp.status, detail: body.detail ?? "request failed" };
  }
  return { ok: true, run: body as RunSummary };
}

export async function getRun(base: string, id: string): Promise<RunDetail | null> {
  const resp = await fetch(`${base}/api/runs/${id}`);
  if (resp.status === 404) {
    return null;
  }
  return (await resp.json()) as RunDetail;
}

export async function listRuns(base: string): Promise<RunSummary[]> {
  const resp = await fetch(`${base}/api/runs`);
  return (await resp.json()) as RunSummary[];
}

export async function stopRun(base: string, id: string): Promise<boolean> {
  const resp = await fetch(`${base}/api/runs/${id}`, { method: "DELETE" });
  return resp.ok;
}

export async function fetchValidationRules(
    base: string): Promise<Record<string, unknown>> {
  const resp = await fetch(`${base}/api/validation-rules`);
  return (await resp.json()) as Record<string, unknown>;
}

/** One parsed event from a run's log stream. */
export type LogEvent =
  | { kind: "line"; text: string }
  | { kind: "gap"; dropped: number }
  | { kind: "end" }
  | { kind: "not_found" };

/**
 * Parser for server-sent-event frames, fed chunk by chunk.
 * Frames are `data: <text>` with optional `event: gap|end` markers.
 */
export class SseParser {
  private buffer = "";

  push(chunk: string): LogEvent[] {
    this.buffer += chunk;
    const events: LogEvent[] = [];
    let split: number;
    while ((split = this.buffer.indexOf("\n\n")) >= 0) {
      const frame = this.buffer.slice(0, split);
      this.buffer = this.buffer.slice(split + 2);
      const event = parseFrame(frame);
      if (event !== null) {
        events.push(event);
      }
    }
    return events;
  }
}

function parseFrame(frame: string): LogEvent | null {
  let eventType = "message";
  const data: string[] = [];
  for (const line of frame.split("\n")) {
    if (line.startsWith("event:")) {
      eventType = line.slice(6).trim();
    } else if (line.startsWith("data:")) {
      data.push(line.slice(5).replace(/^ /, ""));
    }
  }
  if (data.length === 0) {
    return null;
  }
  const text = data.join("\n");
  if (eventType === "gap") {
    return { kind: "gap", dropped: Number(text) || 0 };
  }
  if (eventType === "end") {
    return { kind: "end" };
  }
  return { kind: "line", text };
}

/** Follow a run's log stream, yielding events until the server closes it. */
export async function* streamLogs(base: string, id: string,
                                  signal?: AbortSignal): AsyncGenerator<LogEvent> {
  const resp = await fetch(`${base}/api/runs/${id}/logs`, { signal });
  if (resp.status === 404) {
    yield { kind: "not_found" };
    return;
  }
  if (!resp.body) {
    throw new Error("log stream has no body");
  }
  const reader = resp.body.getReader();
  const decoder = new TextDecoder();
  const parser = new SseParser();
  while (true) {
    const { done, value } = await reader.read();
    if (done) {
      return;
    }
    for (const event of parser.push(decoder.decode(value, { stream: true }))) {
      yield event;
      if (event.kind === "end") {
        await reader.cancel().catch(() => undefined);
        return;
      }
    }
  }
}
