/**
 * Message schema shared with the telemetry service (version 1).
 *
 * Every displayed number in the cockpit is traceable to a field of one of
 * these frames; the client performs no physics of its own.
 */

export const SCHEMA_VERSION = 1;

export interface Limits {
  tau_max: number;
  v_max: number;
  rate_hz: number;
  dt: number;
}

export interface CellRef {
  cell: [number, number];
  label: "left" | "right" | "straight";
  direction: number; // radians, map frame
}

export interface GridMeta {
  origin_x: number;
  origin_y: number;
  extent_x: number;
  extent_y: number;
  cell_size: number;
}

export interface HelloFrame {
  type: "hello";
  version: number;
  role: "driver" | "viewer";
  limits: Limits;
  mission: { p0: [number, number]; pf: [number, number]; path: [number, number][] };
  grid: GridMeta;
  cells: CellRef[];
  columns: string[];
}

/** One simulation step; telemetry columns flattened in, NaN sent as null. */
export interface StateFrame {
  type: "state";
  version: number;
  seq: number;
  clamped: boolean;
  done: boolean;
  time: number;
  x: number;
  y: number;
  theta: number;
  v: number;
  omega: number;
  eps_l: number | null;
  eps_r: number | null;
  eps_s: number | null;
  eps_hat: number | null;
  lambda: number | null;
  tau_r: number;
  tau_l: number;
  tau_alpha_r: number;
  tau_alpha_l: number;
  tau_beta_r: number;
  tau_beta_l: number;
  tau_h_r: number;
  tau_h_l: number;
  engaged: boolean | number;
  [column: string]: unknown;
}

export interface ErrorFrame {
  type: "error";
  version: number;
  error: string;
  detail: string;
}

export type ServerFrame = HelloFrame | StateFrame | ErrorFrame;

export interface CommandFrame {
  type: "command";
  v: number;
  tau: number;
  override?: boolean;
}

export class SchemaError extends Error {}

function isRecord(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null;
}

/** Parse one server message, rejecting unknown shapes and bad versions. */
export function parseServerFrame(raw: unknown): ServerFrame {
  let msg: unknown;
  if (typeof raw === "string") {
    try {
      msg = JSON.parse(raw);
    } catch {
      throw new SchemaError("frame is not valid JSON");
    }
  } else {
    msg = raw;
  }
  if (!isRecord(msg) || typeof msg.type !== "string") {
    throw new SchemaError("not a server frame");
  }
  if (msg.version !== SCHEMA_VERSION) {
    throw new SchemaError(
      `schema version mismatch: server speaks ${String(msg.version)}, ` +
        `client speaks ${SCHEMA_VERSION}`,
    );
  }
  if (msg.type === "hello") {
    if (!isRecord(msg.limits) || !isRecord(msg.grid) || !Array.isArray(msg.cells)) {
      throw new SchemaError("malformed hello frame");
    }
    return msg as unknown as HelloFrame;
  }
  if (msg.type === "state") {
    if (typeof msg.seq !== "number" || typeof msg.time !== "number") {
      throw new SchemaError("malformed state frame");
    }
    return msg as unknown as StateFrame;
  }
  if (msg.type === "error") {
    return msg as unknown as ErrorFrame;
  }
  throw new SchemaError(`unknown frame type ${msg.type}`);
}
