import { describe, expect, it } from "vitest";

import { StateFrame } from "../src/schema.js";
import { gaugePercents, SessionView, STALE_AFTER_MS } from "../src/session.js";

function frame(seq: number, extra: Partial<StateFrame> = {}): StateFrame {
  return {
    type: "state",
    version: 1,
    seq,
    clamped: false,
    done: false,
    time: seq * 0.02,
    x: seq,
    y: 0,
    theta: 0,
    v: 0.8,
    omega: 0,
    eps_l: 0.2,
    eps_r: 0.3,
    eps_s: 0.5,
    eps_hat: 0.5,
    lambda: 0.1,
    tau_r: 0,
    tau_l: 0,
    tau_alpha_r: 0,
    tau_alpha_l: 0,
    tau_beta_r: 0,
    tau_beta_l: 0,
    tau_h_r: 0,
    tau_h_l: 0,
    engaged: 1,
    ...extra,
  };
}

describe("SessionView ring buffer", () => {
  it("keeps at most capacity frames, oldest first", () => {
    const view = new SessionView(4);
    for (let i = 0; i < 7; i++) view.push(frame(i), i);
    const seqs = view.history().map((f) => f.seq);
    expect(seqs).toEqual([3, 4, 5, 6]);
    expect(view.latest?.seq).toBe(6);
  });

  it("drops out-of-order frames so a reconnect never rewinds", () => {
    const view = new SessionView(4);
    expect(view.push(frame(5), 0)).toBe(true);
    expect(view.push(frame(4), 1)).toBe(false);
    expect(view.push(frame(5), 2)).toBe(false);
    expect(view.history().map((f) => f.seq)).toEqual([5]);
  });

  it("frame times are monotone in history", () => {
    const view = new SessionView(8);
    for (let i = 0; i < 20; i++) view.push(frame(i), i);
    const times = view.history().map((f) => f.time);
    for (let i = 1; i < times.length; i++) expect(times[i]).toBeGreaterThan(times[i - 1]);
  });

  it("series extracts one column with nulls preserved", () => {
    const view = new SessionView(4);
    view.push(frame(0, { eps_l: null }), 0);
    view.push(frame(1, { eps_l: 0.7 }), 1);
    expect(view.series("eps_l")).toEqual([null, 0.7]);
    expect(view.series("x")).toEqual([0, 1]);
  });

  it("flags a stale feed after the timeout and recovers on new frames", () => {
    const view = new SessionView(4);
    expect(view.isStale(1000)).toBe(false); // nothing yet: connecting, not stale
    view.push(frame(0), 1000);
    expect(view.isStale(1000 + STALE_AFTER_MS - 1)).toBe(false);
    expect(view.isStale(1001 + STALE_AFTER_MS)).toBe(true);
    view.push(frame(1), 2000);
    expect(view.isStale(2100)).toBe(false);
  });

  it("dropLive clears frames but keeps nothing fabricated", () => {
    const view = new SessionView(4);
    view.push(frame(0), 0);
    view.dropLive();
    expect(view.history()).toEqual([]);
    expect(view.latest).toBeNull();
    // after a reconnect the old seq guard must not block the new stream
    expect(view.push(frame(0), 10)).toBe(true);
  });
});

describe("gaugePercents", () => {
  it("always sums to exactly 100", () => {
    for (let k = 0; k < 500; k++) {
      const a = Math.abs(Math.sin(k * 12.9898));
      const b = Math.abs(Math.sin(k * 78.233)) * (1 - a);
      const f = frame(k, { eps_l: a, eps_r: b, eps_s: 1 - a - b });
      const pct = gaugePercents(f);
      expect(pct[0] + pct[1] + pct[2]).toBe(100);
    }
  });

  it("uses largest-remainder rounding", () => {
    const f = frame(0, { eps_l: 1 / 3, eps_r: 1 / 3, eps_s: 1 / 3 });
    const pct = gaugePercents(f);
    expect(pct[0] + pct[1] + pct[2]).toBe(100);
    expect(Math.max(...pct) - Math.min(...pct)).toBeLessThanOrEqual(1);
  });

  it("renders null confidences as empty gauges", () => {
    expect(gaugePercents(null)).toEqual([0, 0, 0]);
    expect(gaugePercents(frame(0, { eps_l: null }))).toEqual([0, 0, 0]);
  });
});
