/**
 * Keyboard driving: arrows steer, W/S set speed, space releases.
 *
 * Produces clamped command frames at no more than the service rate; all
 * clamping happens client-side before anything is sent.
 */

import { CommandFrame, Limits } from "./schema.js";

export interface DriveState {
  steer: number; // normalised [-1, 1]
  speed: number; // normalised [0, 1]
  override: boolean;
}

const clamp = (v: number, lo: number, hi: number) => Math.min(Math.max(v, lo), hi);

export class DriveInput {
  private state: DriveState = { steer: 0, speed: 0, override: false };
  private held = new Set<string>();

  keyDown(key: string): void {
    this.held.add(key);
    this.apply();
  }

  keyUp(key: string): void {
    this.held.delete(key);
    this.apply();
  }

  /** All keys released (window blur): torque back to zero. */
  releaseAll(): void {
    this.held.clear();
    this.apply();
  }

  private apply(): void {
    let steer = 0;
    if (this.held.has("ArrowLeft")) steer -= 1;
    if (this.held.has("ArrowRight")) steer += 1;
    if (this.held.has("w") || this.held.has("W") || this.held.has("ArrowUp")) {
      this.state.speed = clamp(this.state.speed + 0.1, 0, 1);
    }
    if (this.held.has("s") || this.held.has("S") || this.held.has("ArrowDown")) {
      this.state.speed = clamp(this.state.speed - 0.1, 0, 1);
    }
    this.state.steer = clamp(steer, -1, 1);
    this.state.override = this.held.has(" ");
  }

  snapshot(): DriveState {
    return { ...this.state };
  }

  /** Scale the normalised state into a clamped command frame. */
  command(limits: Limits): CommandFrame {
    const frame: CommandFrame = {
      type: "command",
      v: clamp(this.state.speed, 0, 1) * limits.v_max,
      tau: clamp(this.state.steer, -1, 1) * limits.tau_max,
    };
    if (this.state.override) {
      frame.override = true;
    }
    return frame;
  }
}

/**
 * Rate limiter for outbound commands: at most one per service period.
 * Returns the frame to send, or null while inside the dead time.
 */
export class CommandThrottle {
  private lastSentMs = -Infinity;
  private readonly periodMs: number;

  constructor(rateHz: number) {
    this.periodMs = 1000 / rateHz;
  }

  offer(frame: CommandFrame, nowMs: number): CommandFrame | null {
    if (nowMs - this.lastSentMs < this.periodMs) {
      return null;
    }
    this.lastSentMs = nowMs;
    return frame;
  }
}
