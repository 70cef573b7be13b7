/**
 * Websocket lifecycle: connect, validate the handshake, reconnect with
 * exponential backoff, and surface errors without partial renders.
 */

import { CommandFrame, parseServerFrame, SchemaError, ServerFrame } from "./schema.js";

/** The subset of WebSocket the client uses; injectable in tests. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  // handler params are never inspected, so any event type is acceptable
  onopen: ((ev?: any) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev?: any) => void) | null;
  onerror: ((ev?: any) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ConnectionHandlers {
  onFrame(frame: ServerFrame): void;
  onStatus(status: ConnectionStatus, detail?: string): void;
}

export type ConnectionStatus =
  | "connecting"
  | "open"
  | "closed"
  | "schema-mismatch"
  | "retrying";

export const BACKOFF_INITIAL_MS = 500;
export const BACKOFF_MAX_MS = 8000;

export function nextBackoff(previousMs: number | null): number {
  if (previousMs === null) return BACKOFF_INITIAL_MS;
  return Math.min(previousMs * 2, BACKOFF_MAX_MS);
}

export class Connection {
  private socket: SocketLike | null = null;
  private backoffMs: number | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(
    private readonly url: string,
    private readonly handlers: ConnectionHandlers,
    private readonly factory: SocketFactory,
  ) {}

  start(): void {
    this.stopped = false;
    this.open();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.socket?.close();
  }

  send(frame: CommandFrame): void {
    this.socket?.send(JSON.stringify(frame));
  }

  private open(): void {
    this.handlers.onStatus("connecting");
    const ws = this.factory(this.url);
    this.socket = ws;
    ws.onopen = () => {
      this.backoffMs = null;
      this.handlers.onStatus("open");
    };
    ws.onmessage = (ev) => {
      let frame: ServerFrame;
      try {
        frame = parseServerFrame(ev.data);
      } catch (err) {
        if (err instanceof SchemaError) {
          // a wrong-version server will never become right: stop for good
          this.handlers.onStatus("schema-mismatch", err.message);
          this.stop();
          return;
        }
        throw err;
      }
      this.handlers.onFrame(frame);
    };
    ws.onclose = () => {
      this.socket = null;
      if (this.stopped) {
        this.handlers.onStatus("closed");
        return;
      }
      this.backoffMs = nextBackoff(this.backoffMs);
      this.handlers.onStatus("retrying", `${this.backoffMs} ms`);
      this.timer = setTimeout(() => this.open(), this.backoffMs);
    };
    ws.onerror = () => {
      /* onclose always follows */
    };
  }
}
