/**
 * DOM glue: launch forms, the run dashboard, and live log panes.
 *
 * The page is served by the control plane itself, so API calls go to
 * the same origin. All state beyond the browser session lives
 * server-side; reloading simply re-lists the runs.
 */

import { listRuns, startRun, stopRun, streamLogs } from "./api.js";
import { LogPaneModel, cardModel, stateBadgeClass } from "./dashboard.js";
import { VALIDATORS } from "./validate.js";

const BASE = "";
const POLL_MS = 1000;

const dashboard = document.getElementById("dashboard") as HTMLElement;
const banner = document.getElementById("banner") as HTMLElement;
const panes = document.getElementById("panes") as HTMLElement;

function showBanner(text: string): void {
  banner.textContent = text;
  banner.classList.remove("hidden");
  setTimeout(() => banner.classList.add("hidden"), 5000);
}

function readForm(form: HTMLFormElement): Record<string, string> {
  const out: Record<string, string> = {};
  for (const [key, value] of new FormData(form).entries()) {
    out[key] = String(value);
  }
  return out;
}

function clearFieldErrors(form: HTMLFormElement): void {
  for (const el of form.querySelectorAll(".field-error")) {
    el.textContent = "";
  }
}

function showFieldError(form: HTMLFormElement, field: string, message: string): void {
  const slot = form.querySelector(`[data-error-for="${field}"]`);
  if (slot) {
    slot.textContent = message;
  } else {
    showBanner(message);
  }
}

async function submitForm(role: keyof typeof VALIDATORS,
                          form: HTMLFormElement): Promise<void> {
  clearFieldErrors(form);
  const validated = VALIDATORS[role](readForm(form) as never);
  if (!validated.ok || validated.params === null) {
    for (const [field, message] of Object.entries(validated.errors)) {
      showFieldError(form, field, message);
    }
    return; // blocked client-side, no request leaves the browser
  }
  try {
    const result = await startRun(BASE, role, validated.params);
    if (!result.ok) {
      // server rejected: surface its message inline on the named field
      const field = Object.keys(validated.params).find(
        (name) => result.detail.includes(name));
      showFieldError(form, field ?? "", result.detail);
      return;
    }
    await refreshDashboard();
    attachLogPane(result.run.run_id);
  } catch {
    showBanner("control plane unreachable; check the service and retry");
  }
}

async function refreshDashboard(): Promise<void> {
  let runs;
  try {
    runs = await listRuns(BASE);
  } catch {
    showBanner("control plane unreachable; retrying");
    return;
  }
  dashboard.replaceChildren();
  for (const run of runs) {
    const card = cardModel(run);
    const el = document.createElement("div");
    el.className = "card";
    el.innerHTML = `
      <div class="card-head">
        <span class="mono">${card.runId}</span>
        <span class="${stateBadgeClass(card.state)}">${card.state}</span>
      </div>
      <div class="card-role">${card.role}</div>
      ${card.error ? `<div class="card-error">${card.error}</div>` : ""}
      <div class="card-actions">
        <button data-logs="${card.runId}">logs</button>
        ${card.terminal ? "" : `<button data-stop="${card.runId}">stop</button>`}
      </div>`;
    dashboard.appendChild(el);
  }
}

dashboard.addEventListener("click", async (event) => {
  const target = event.target as HTMLElement;
  const logsId = target.getAttribute("data-logs");
  const stopId = target.getAttribute("data-stop");
  if (logsId) {
    attachLogPane(logsId);
  }
  if (stopId) {
    await stopRun(BASE, stopId);
    await refreshDashboard();
  }
});

function attachLogPane(runId: string): void {
  const model = new LogPaneModel();
  const pane = document.createElement("section");
  pane.className = "pane";
  pane.innerHTML = `
    <header>
      <span class="mono">${runId}</span>
      <span class="pane-status">streaming</span>
      <button class="pane-close">close</button>
    </header>
    <pre class="pane-body"></pre>`;
  const body = pane.querySelector(".pane-body") as HTMLPreElement;
  const status = pane.querySelector(".pane-status") as HTMLElement;
  const controller = new AbortController();
  pane.addEventListener("mouseenter", () => { model.paused = true; });
  pane.addEventListener("mouseleave", () => { model.paused = false; });
  (pane.querySelector(".pane-close") as HTMLElement).addEventListener("click", () => {
    controller.abort();
    pane.remove();
  });
  panes.prepend(pane);

  void (async () => {
    try {
      for await (const event of streamLogs(BASE, runId, controller.signal)) {
        model.apply(event);
        if (event.kind === "not_found") {
          status.textContent = "run not found";
          body.textContent = "no such run on the control plane";
          return;
        }
        body.textContent = model.lines.join("\n");
        if (model.shouldAutoScroll) {
          body.scrollTop = body.scrollHeight;
        }
        if (event.kind === "end") {
          status.textContent = "stream closed";
        }
      }
      if (!model.closed) {
        status.textContent = "stream closed";
      }
    } catch {
      if (!controller.signal.aborted) {
        status.textContent = "stream lost";
      }
    }
    void refreshDashboard();
  })();
}

for (const role of ["core", "fleet", "client"] as const) {
  const form = document.getElementById(`${role}-form`) as HTMLFormElement;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void submitForm(role, form);
  });
}

void refreshDashboard();
setInterval(() => void refreshDashboard(), POLL_MS);
