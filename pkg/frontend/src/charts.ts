/**
 * Strip charts and gauges.  The data→pixel mapping is pure so the binding
 * from telemetry columns to drawn values is testable without a canvas.
 */

import { StateFrame } from "./schema.js";
import { gaugePercents, SessionView } from "./session.js";

export interface PlotRect {
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface SeriesSpec {
  column: keyof StateFrame & string;
  colour: string;
}

/** y-range covering all finite values, padded; falls back to [-1, 1]. */
export function autoRange(series: (number | null)[][]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of series) {
    for (const v of s) {
      if (v === null || !Number.isFinite(v)) continue;
      lo = Math.min(lo, v);
      hi = Math.max(hi, v);
    }
  }
  if (lo > hi) return [-1, 1];
  if (lo === hi) return [lo - 0.5, hi + 0.5];
  const pad = 0.05 * (hi - lo);
  return [lo - pad, hi + pad];
}

/**
 * Map one series into polyline segments in plot coordinates.  Null values
 * break the line (no interpolation across gaps); x spreads the ring buffer
 * across the full plot width.
 */
export function seriesToSegments(
  values: (number | null)[],
  rect: PlotRect,
  yMin: number,
  yMax: number,
  capacity: number,
): [number, number][][] {
  const segments: [number, number][][] = [];
  let current: [number, number][] = [];
  const span = Math.max(capacity - 1, 1);
  const offset = capacity - values.length; // right-align a partial buffer
  values.forEach((v, i) => {
    if (v === null || !Number.isFinite(v)) {
      if (current.length > 1) segments.push(current);
      current = [];
      return;
    }
    const fx = (offset + i) / span;
    const fy = (v - yMin) / (yMax - yMin);
    current.push([rect.x + fx * rect.width, rect.y + (1 - fy) * rect.height]);
  });
  if (current.length > 1) segments.push(current);
  return segments;
}

export function drawStripChart(
  ctx: CanvasRenderingContext2D,
  view: SessionView,
  specs: SeriesSpec[],
  rect: PlotRect,
  title: string,
): void {
  ctx.fillStyle = "#fff";
  ctx.fillRect(rect.x, rect.y, rect.width, rect.height);
  ctx.strokeStyle = "#bbb";
  ctx.strokeRect(rect.x, rect.y, rect.width, rect.height);
  const series = specs.map((s) => view.series(s.column));
  const [lo, hi] = autoRange(series);
  // zero line when visible
  if (lo < 0 && hi > 0) {
    const y0 = rect.y + (1 - (0 - lo) / (hi - lo)) * rect.height;
    ctx.strokeStyle = "#e0e0e0";
    ctx.beginPath();
    ctx.moveTo(rect.x, y0);
    ctx.lineTo(rect.x + rect.width, y0);
    ctx.stroke();
  }
  specs.forEach((spec, k) => {
    ctx.strokeStyle = spec.colour;
    for (const seg of seriesToSegments(series[k], rect, lo, hi, view.capacity)) {
      ctx.beginPath();
      seg.forEach(([px, py], i) => (i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py)));
      ctx.stroke();
    }
  });
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  ctx.fillText(`${title}  [${lo.toFixed(2)}, ${hi.toFixed(2)}]`, rect.x + 4, rect.y + 14);
}

const GAUGE_LABELS = ["ε_L", "ε_R", "ε_S"] as const;
const GAUGE_COLOURS = ["#e4572e", "#2e86ab", "#7cb518"] as const;

export function drawGauges(
  ctx: CanvasRenderingContext2D,
  frame: StateFrame | null,
  rect: PlotRect,
): void {
  const pct = gaugePercents(frame);
  const rowH = rect.height / 3;
  ctx.font = "12px sans-serif";
  pct.forEach((p, i) => {
    const y = rect.y + i * rowH;
    ctx.fillStyle = "#eee";
    ctx.fillRect(rect.x + 40, y + 4, rect.width - 80, rowH - 8);
    ctx.fillStyle = GAUGE_COLOURS[i];
    ctx.fillRect(rect.x + 40, y + 4, ((rect.width - 80) * p) / 100, rowH - 8);
    ctx.fillStyle = "#333";
    ctx.fillText(GAUGE_LABELS[i], rect.x + 4, y + rowH / 2 + 4);
    ctx.fillText(`${p}%`, rect.x + rect.width - 34, y + rowH / 2 + 4);
  });
}

const BAR_COLUMNS: (keyof StateFrame & string)[] = [
  "lambda",
  "tau_alpha_r",
  "tau_alpha_l",
  "tau_beta_r",
  "tau_beta_l",
  "tau_r",
  "tau_l",
];

/** Signed horizontal bars for the gain and torque columns of one frame. */
export function barValues(frame: StateFrame | null): { column: string; value: number | null }[] {
  return BAR_COLUMNS.map((column) => {
    const v = frame ? frame[column] : null;
    return { column, value: typeof v === "number" && Number.isFinite(v) ? v : null };
  });
}

export function drawTorqueBars(
  ctx: CanvasRenderingContext2D,
  frame: StateFrame | null,
  rect: PlotRect,
  tauMax: number,
): void {
  const rows = barValues(frame);
  const rowH = rect.height / rows.length;
  const mid = rect.x + 70 + (rect.width - 110) / 2;
  ctx.font = "11px sans-serif";
  rows.forEach(({ column, value }, i) => {
    const y = rect.y + i * rowH;
    ctx.fillStyle = "#333";
    ctx.fillText(column, rect.x + 4, y + rowH / 2 + 4);
    ctx.fillStyle = "#eee";
    ctx.fillRect(rect.x + 70, y + 3, rect.width - 110, rowH - 6);
    if (value === null) return;
    // lambda lives in [0, 1]; torques in [-tau_max, tau_max]
    const scale = column === "lambda" ? 1.0 : tauMax;
    const frac = Math.max(-1, Math.min(1, value / scale));
    const w = (Math.abs(frac) * (rect.width - 110)) / 2;
    ctx.fillStyle = frac >= 0 ? "#2e86ab" : "#e4572e";
    ctx.fillRect(frac >= 0 ? mid : mid - w, y + 3, w, rowH - 6);
    ctx.fillStyle = "#333";
    ctx.fillText(value.toFixed(2), rect.x + rect.width - 38, y + rowH / 2 + 4);
  });
}
