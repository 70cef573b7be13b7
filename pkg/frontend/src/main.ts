/**
 * Cockpit entry point: wires the websocket connection, session state,
 * keyboard driving, and the render loop together.
 *
 * Rendering runs on requestAnimationFrame, decoupled from frame arrival:
 * message handling only updates SessionView (latest-frame-wins) and the
 * next animation tick draws whatever is newest.
 */

import { drawGauges, drawStripChart, drawTorqueBars } from "./charts.js";
import { Connection, ConnectionStatus } from "./connection.js";
import { CommandThrottle, DriveInput } from "./input.js";
import { drawScene, fitViewport, OverlayToggles } from "./render.js";
import { HelloFrame, StateFrame } from "./schema.js";
import { SessionView } from "./session.js";

const params = new URLSearchParams(window.location.search);
const role = params.get("role") === "viewer" ? "viewer" : "driver";
const wsUrl = `ws://${window.location.host}/ws?role=${role}`;

const scene = document.getElementById("scene") as HTMLCanvasElement;
const panel = document.getElementById("panel") as HTMLCanvasElement;
const banner = document.getElementById("banner") as HTMLDivElement;

const view = new SessionView();
const input = new DriveInput();
const throttle = { current: null as CommandThrottle | null };
let status: ConnectionStatus = "connecting";
let statusDetail = "";

const toggles: OverlayToggles = { left: true, right: true, straight: true };
for (const label of ["left", "right", "straight"] as const) {
  const box = document.getElementById(`toggle-${label}`) as HTMLInputElement;
  box.checked = true;
  box.addEventListener("change", () => (toggles[label] = box.checked));
}

const connection = new Connection(
  wsUrl,
  {
    onFrame(frame) {
      if (frame.type === "hello") {
        view.start(frame as HelloFrame);
        throttle.current = new CommandThrottle(frame.limits.rate_hz);
      } else if (frame.type === "state") {
        view.push(frame as StateFrame, performance.now());
      } else {
        statusDetail = `${frame.error}: ${frame.detail}`;
      }
    },
    onStatus(s, detail) {
      status = s;
      statusDetail = detail ?? "";
      if (s === "retrying") view.dropLive(); // no fabricated history on reconnect
    },
  },
  // a real WebSocket satisfies SocketLike structurally (MessageEvent carries
  // .data), but its handler signatures are declared wider than we need
  (url) => new WebSocket(url) as unknown as import("./connection.js").SocketLike,
);
connection.start();

if (role === "driver") {
  window.addEventListener("keydown", (ev) => {
    if (ev.repeat) return;
    input.keyDown(ev.key);
    ev.preventDefault();
  });
  window.addEventListener("keyup", (ev) => input.keyUp(ev.key));
  window.addEventListener("blur", () => input.releaseAll());
}

function sendCommand(nowMs: number): void {
  if (role !== "driver" || status !== "open") return;
  const hello = view.hello;
  const gate = throttle.current;
  if (!hello || !gate) return;
  const frame = gate.offer(input.command(hello.limits), nowMs);
  if (frame) connection.send(frame);
}

function bannerText(nowMs: number): string {
  if (status === "schema-mismatch") return `schema mismatch — ${statusDetail}`;
  if (status === "retrying") return `connection lost, retrying in ${statusDetail}`;
  if (status === "connecting") return "connecting…";
  if (view.isStale(nowMs)) return "stale: no telemetry for > 0.5 s";
  const f = view.latest;
  if (f && !(typeof f.engaged === "number" ? f.engaged !== 0 : f.engaged)) {
    return "DISENGAGED — robot torques released (space to re-engage)";
  }
  return "";
}

function tick(nowMs: number): void {
  sendCommand(nowMs);
  const text = bannerText(nowMs);
  banner.textContent = text;
  banner.style.display = text ? "block" : "none";

  const hello = view.hello;
  if (hello) {
    const ctx = scene.getContext("2d")!;
    const vp = fitViewport(hello.grid, scene.width, scene.height);
    drawScene(ctx, hello, view.latest, view.history(), vp, toggles);

    const pctx = panel.getContext("2d")!;
    pctx.clearRect(0, 0, panel.width, panel.height);
    const w = panel.width;
    drawGauges(pctx, view.latest, { x: 0, y: 0, width: w, height: 70 });
    drawTorqueBars(
      pctx,
      view.latest,
      { x: 0, y: 80, width: w, height: 150 },
      hello.limits.tau_max,
    );
    drawStripChart(
      pctx,
      view,
      [
        { column: "eps_l", colour: "#e4572e" },
        { column: "eps_r", colour: "#2e86ab" },
        { column: "eps_s", colour: "#7cb518" },
      ],
      { x: 0, y: 240, width: w, height: 120 },
      "confidence",
    );
    drawStripChart(
      pctx,
      view,
      [
        { column: "tau_r", colour: "#2e86ab" },
        { column: "tau_l", colour: "#e4572e" },
      ],
      { x: 0, y: 370, width: w, height: 120 },
      "wheel torque",
    );
  }
  requestAnimationFrame(tick);
}
requestAnimationFrame(tick);
