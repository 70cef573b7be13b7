import { describe, expect, it } from "vitest";

import { CommandThrottle, DriveInput } from "../src/input.js";
import { Limits } from "../src/schema.js";

const limits: Limits = { tau_max: 30, v_max: 1.2, rate_hz: 50, dt: 0.02 };

describe("DriveInput", () => {
  it("holding left-arrow produces sustained negative steering torque", () => {
    const input = new DriveInput();
    input.keyDown("ArrowLeft");
    for (let i = 0; i < 5; i++) {
      expect(input.command(limits).tau).toBe(-limits.tau_max);
    }
    input.keyUp("ArrowLeft");
    expect(input.command(limits).tau).toBe(0);
  });

  it("no input means zero-torque, zero-speed frames", () => {
    const cmd = new DriveInput().command(limits);
    expect(cmd).toEqual({ type: "command", v: 0, tau: 0 });
  });

  it("opposing arrows cancel", () => {
    const input = new DriveInput();
    input.keyDown("ArrowLeft");
    input.keyDown("ArrowRight");
    expect(input.command(limits).tau).toBe(0);
  });

  it("speed steps accumulate and clamp to [0, v_max]", () => {
    const input = new DriveInput();
    for (let i = 0; i < 20; i++) {
      input.keyDown("w");
      input.keyUp("w");
    }
    expect(input.command(limits).v).toBe(limits.v_max);
    for (let i = 0; i < 40; i++) {
      input.keyDown("s");
      input.keyUp("s");
    }
    expect(input.command(limits).v).toBe(0);
  });

  it("releaseAll returns torque to zero but keeps nothing held", () => {
    const input = new DriveInput();
    input.keyDown("ArrowRight");
    input.keyDown("w");
    input.releaseAll();
    const cmd = input.command(limits);
    expect(cmd.tau).toBe(0);
    expect(cmd.override).toBeUndefined();
  });

  it("space sets the override flag", () => {
    const input = new DriveInput();
    input.keyDown(" ");
    expect(input.command(limits).override).toBe(true);
  });
});

describe("CommandThrottle", () => {
  it("allows at most one frame per service period", () => {
    const throttle = new CommandThrottle(50); // 20 ms period
    const cmd = { type: "command" as const, v: 0, tau: 0 };
    let sent = 0;
    for (let t = 0; t < 1000; t += 5) {
      if (throttle.offer(cmd, t)) sent++;
    }
    expect(sent).toBe(50);
  });
});
