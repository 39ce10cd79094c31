/**
 * Run-card and log-pane view models, kept free of DOM APIs so they can
 * be unit-tested. main.ts binds them to elements.
 */

import type { LogEvent, RunSummary } from "./api.js";

export interface CardModel {
  runId: string;
  role: string;
  state: string;
  error: string | null;
  terminal: boolean;
}

export function cardModel(run: RunSummary): CardModel {
  return {
    runId: run.run_id,
    role: run.role,
    state: run.state,
    error: run.error,
    terminal: run.state === "finished" || run.state === "failed",
  };
}

export function stateBadgeClass(state: string): string {
  switch (state) {
    case "running":
      return "badge badge-running";
    case "finished":
      return "badge badge-finished";
    case "failed":
      return "badge badge-failed";
    default:
      return "badge badge-starting";
  }
}

/** Scrollback model for one log pane: bounded lines plus stream status. */
export class LogPaneModel {
  lines: string[] = [];
  closed = false;
  notFound = false;
  paused = false; // pause-on-hover stops auto-scroll, not ingestion
  readonly maxLines: number;

  constructor(maxLines = 5000) {
    this.maxLines = maxLines;
  }

  apply(event: LogEvent): void {
    switch (event.kind) {
      case "line":
        this.lines.push(event.text);
        break;
      case "gap":
        this.lines.push(`--- ${event.dropped} lines dropped (reader fell behind) ---`);
        break;
      case "end":
        this.closed = true;
        break;
      case "not_found":
        this.notFound = true;
        this.closed = true;
        break;
    }
    if (this.lines.length > this.maxLines) {
      this.lines.splice(0, this.lines.length - this.maxLines);
    }
  }

  get shouldAutoScroll(): boolean {
    return !this.paused && !this.closed;
  }
}
