/**
 * Client-side form validation mirroring the control plane's rules.
 *
 * RULES must stay identical to shared/validation-rules.json and to what
 * the server reports at GET /api/validation-rules; tests enforce both
 * directions. A form that passes here is never rejected by the server
 * for a range error.
 */

export const RULES = {
  port: { min: 1, max: 65535 },
  count: { min: 1 },
  rate_percent: { min: 1, max: 100 },
  sim_time: { exclusive_min: 0 },
  loss_prob: { min: 0.0, max: 1.0 },
  latency_ms: { min: 0.0 },
  camera_bytes: { min: 1, max: 59000 },
} as const;

export const SENSOR_TYPES = ["temp", "humidity", "gps", "camera", "switch"] as const;

export type FieldErrors = Record<string, string>;

export interface Validated<T> {
  ok: boolean;
  errors: FieldErrors;
  params: T | null;
}

export interface SensorSpecToken {
  type: string;
  count: number;
  rate: number;
}

function intIn(raw: string, name: string, min: number, max: number,
               errors: FieldErrors): number | null {
  const value = Number(raw);
  if (!Number.isInteger(value) || raw.trim() === "") {
    errors[name] = `${name} must be an integer`;
    return null;
  }
  if (value < min || value > max) {
    errors[name] = `${name} out of range ${min}-${max}: ${value}`;
    return null;
  }
  return value;
}

function positiveNumber(raw: string, name: string, errors: FieldErrors): number | null {
  const value = Number(raw);
  if (raw.trim() === "" || Number.isNaN(value)) {
    errors[name] = `${name} must be a number`;
    return null;
  }
  if (value <= RULES.sim_time.exclusive_min) {
    errors[name] = `${name} must be positive`;
    return null;
  }
  return value;
}

function nonEmpty(raw: string, name: string, errors: FieldErrors): string | null {
  if (!raw || raw.trim() === "") {
    errors[name] = `${name} is required`;
    return null;
  }
  return raw.trim();
}

/** Parse one `type:count[:rate]` token with the launcher's grammar. */
export function parseSpecToken(token: string): SensorSpecToken {
  const parts = token.split(":");
  if (parts.length < 2 || parts.length > 3) {
    throw new Error(`bad sensor spec ${token}: expected type:count[:rate]`);
  }
  const [type, countRaw, rateRaw] = parts;
  if (!SENSOR_TYPES.includes(type as (typeof SENSOR_TYPES)[number])) {
    throw new Error(`bad sensor spec ${token}: unknown sensor type "${type}"`);
  }
  const count = Number(countRaw);
  if (!Number.isInteger(count)) {
    throw new Error(`bad sensor spec ${token}: count is not an integer`);
  }
  if (count < RULES.count.min) {
    throw new Error(`bad sensor spec ${token}: count must be >= ${RULES.count.min}`);
  }
  let rate = 100;
  if (rateRaw !== undefined) {
    rate = Number(rateRaw);
    if (!Number.isInteger(rate)) {
      throw new Error(`bad sensor spec ${token}: rate is not an integer`);
    }
    if (rate < RULES.rate_percent.min || rate > RULES.rate_percent.max) {
      throw new Error(`bad sensor spec ${token}: rate_percent out of range`);
    }
  }
  return { type, count, rate };
}

export interface CoreForm {
  host: string;
  sensor_port: string;
  client_port: string;
  sim_time: string;
  archive_dir?: string;
}

export function validateCoreForm(form: CoreForm): Validated<Record<string, unknown>> {
  const errors: FieldErrors = {};
  const host = nonEmpty(form.host, "host", errors);
  const sensorPort = intIn(form.sensor_port, "sensor_port",
                           RULES.port.min, RULES.port.max, errors);
  const clientPort = intIn(form.client_port, "client_port",
                           RULES.port.min, RULES.port.max, errors);
  const simTime = positiveNumber(form.sim_time, "sim_time", errors);
  if (sensorPort !== null && clientPort !== null && sensorPort === clientPort) {
    errors.client_port = "sensor_port and client_port must differ";
  }
  if (Object.keys(errors).length > 0) {
    return { ok: false, errors, params: null };
  }
  const params: Record<string, unknown> = {
    host, sensor_port: sensorPort, client_port: clientPort, sim_time: simTime,
  };
  if (form.archive_dir && form.archive_dir.trim() !== "") {
    params.archive_dir = form.archive_dir.trim();
  }
  return { ok: true, errors, params };
}

export interface FleetForm {
  core_host: string;
  core_port: string;
  sim_time: string;
  specs: string; // whitespace-separated tokens, e.g. "temp:30:1 gps:10"
  seed?: string;
}

export function validateFleetForm(form: FleetForm): Validated<Record<string, unknown>> {
  const errors: FieldErrors = {};
  const coreHost = nonEmpty(form.core_host, "core_host", errors);
  const corePort = intIn(form.core_port, "core_port",
                         RULES.port.min, RULES.port.max, errors);
  const simTime = positiveNumber(form.sim_time, "sim_time", errors);
  const tokens = (form.specs || "").trim().split(/\s+/).filter((t) => t !== "");
  const parsed: SensorSpecToken[] = [];
  if (tokens.length === 0) {
    errors.specs = "at least one sensor spec is required";
  } else {
    for (const token of tokens) {
      try {
        parsed.push(parseSpecToken(token));
      } catch (e) {
        errors.specs = (e as Error).message;
        break;
      }
    }
  }
  let seed = 0;
  if (form.seed && form.seed.trim() !== "") {
    const parsedSeed = Number(form.seed);
    if (!Number.isInteger(parsedSeed) || parsedSeed < 0) {
      errors.seed = "seed must be a non-negative integer";
    } else {
      seed = parsedSeed;
    }
  }
  if (Object.keys(errors).length > 0) {
    return { ok: false, errors, params: null };
  }
  return {
    ok: true,
    errors,
    params: {
      core_host: coreHost, core_port: corePort, sim_time: simTime,
      specs: tokens, seed,
    },
  };
}

export interface ClientForm {
  log_dir: string;
  core_host: string;
  client_port: string;
  sensor_id: string;
  sim_time?: string;
}

export function validateClientForm(form: ClientForm): Validated<Record<string, unknown>> {
  const errors: FieldErrors = {};
  const logDir = nonEmpty(form.log_dir, "log_dir", errors);
  const coreHost = nonEmpty(form.core_host, "core_host", errors);
  const clientPort = intIn(form.client_port, "client_port",
                           RULES.port.min, RULES.port.max, errors);
  const sensorId = nonEmpty(form.sensor_id, "sensor_id", errors);
  let simTime: number | null = null;
  if (form.sim_time && form.sim_time.trim() !== "") {
    simTime = positiveNumber(form.sim_time, "sim_time", errors);
  }
  if (Object.keys(errors).length > 0) {
    return { ok: false, errors, params: null };
  }
  const params: Record<string, unknown> = {
    log_dir: logDir, core_host: coreHost, client_port: clientPort,
    sensor_id: sensorId,
  };
  if (simTime !== null) {
    params.sim_time = simTime;
  }
  return { ok: true, errors, params };
}

export const VALIDATORS = {
  core: validateCoreForm,
  fleet: validateFleetForm,
  client: validateClientForm,
} as const;
