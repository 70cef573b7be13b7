/**
 * Client-side view of one simulation session: the static metadata from the
 * hello frame plus a ring buffer of recent state frames for the strip
 * charts.  Pure data holder — all values come verbatim from frames.
 */

import { HelloFrame, StateFrame } from "./schema.js";

/** 30 s at 50 Hz. */
export const RING_CAPACITY = 1500;

/** Frames older than this with nothing newer mean the feed went stale. */
export const STALE_AFTER_MS = 500;

export class SessionView {
  hello: HelloFrame | null = null;
  latest: StateFrame | null = null;
  private ring: StateFrame[] = [];
  private head = 0; // insertion index once the ring is full
  private lastArrivalMs = -Infinity;

  readonly capacity: number;

  constructor(capacity: number = RING_CAPACITY) {
    this.capacity = capacity;
  }

  start(hello: HelloFrame): void {
    this.hello = hello;
  }

  /**
   * Accept a state frame.  Out-of-order frames (stale seq) are dropped so a
   * reconnect never rewinds the charts; returns whether the frame was kept.
   */
  push(frame: StateFrame, nowMs: number): boolean {
    if (this.latest !== null && frame.seq <= this.latest.seq) {
      return false;
    }
    this.latest = frame;
    this.lastArrivalMs = nowMs;
    if (this.ring.length < this.capacity) {
      this.ring.push(frame);
    } else {
      this.ring[this.head] = frame;
      this.head = (this.head + 1) % this.capacity;
    }
    return true;
  }

  /** Frames oldest-first; length ≤ capacity. */
  history(): StateFrame[] {
    if (this.ring.length < this.capacity) {
      return this.ring.slice();
    }
    return this.ring.slice(this.head).concat(this.ring.slice(0, this.head));
  }

  /** One column of the history, for strip charts (null where the frame had null). */
  series(column: keyof StateFrame & string): (number | null)[] {
    return this.history().map((f) => {
      const v = f[column];
      return typeof v === "number" ? v : null;
    });
  }

  isStale(nowMs: number): boolean {
    return this.latest !== null && nowMs - this.lastArrivalMs > STALE_AFTER_MS;
  }

  /** Forget live data but keep static metadata (reconnect: no fabricated history). */
  dropLive(): void {
    this.ring = [];
    this.head = 0;
    this.latest = null;
    this.lastArrivalMs = -Infinity;
  }
}

/**
 * Integer percentages for the three confidence gauges, summing to exactly
 * 100 (largest-remainder rounding).  Null confidences render as 0/0/0.
 */
export function gaugePercents(
  frame: Pick<StateFrame, "eps_l" | "eps_r" | "eps_s"> | null,
): [number, number, number] {
  if (!frame || frame.eps_l === null || frame.eps_r === null || frame.eps_s === null) {
    return [0, 0, 0];
  }
  const raw = [frame.eps_l * 100, frame.eps_r * 100, frame.eps_s * 100];
  const floors = raw.map(Math.floor);
  let rest = 100 - floors.reduce((a, b) => a + b, 0);
  const order = raw
    .map((v, i) => [v - floors[i], i] as const)
    .sort((a, b) => b[0] - a[0]);
  const out: [number, number, number] = [floors[0], floors[1], floors[2]];
  for (const [, i] of order) {
    if (rest <= 0) break;
    out[i] += 1;
    rest -= 1;
  }
  return out;
}
