/**
 * Canvas rendering: map extent, behavioural-cell overlay (class colours +
 * direction arrows), mission path, walker pose + trail, and the cell under
 * the walker highlighted with its reference class.
 *
 * The world→screen transform is a pure function so the data binding is
 * testable without a DOM.
 */

import { CellRef, GridMeta, HelloFrame, StateFrame } from "./schema.js";

export const CLASS_COLOURS: Record<CellRef["label"], string> = {
  left: "#e4572e", // warm red
  right: "#2e86ab", // blue
  straight: "#7cb518", // green
};

export interface Viewport {
  scale: number; // px per metre
  offsetX: number; // px
  offsetY: number; // px
  height: number; // px, for y-flip
}

/** Fit the grid extent into a canvas with a margin. */
export function fitViewport(
  grid: GridMeta,
  widthPx: number,
  heightPx: number,
  marginPx = 20,
): Viewport {
  const scale = Math.min(
    (widthPx - 2 * marginPx) / grid.extent_x,
    (heightPx - 2 * marginPx) / grid.extent_y,
  );
  return {
    scale,
    offsetX: marginPx - grid.origin_x * scale,
    offsetY: marginPx - grid.origin_y * scale,
    height: heightPx,
  };
}

/** World metres -> canvas pixels (y up in world, down on canvas). */
export function toScreen(vp: Viewport, x: number, y: number): [number, number] {
  return [x * vp.scale + vp.offsetX, vp.height - (y * vp.scale + vp.offsetY)];
}

export function cellUnderWalker(
  grid: GridMeta,
  frame: Pick<StateFrame, "x" | "y">,
): [number, number] {
  return [
    Math.floor((frame.x - grid.origin_x) / grid.cell_size),
    Math.floor((frame.y - grid.origin_y) / grid.cell_size),
  ];
}

export interface OverlayToggles {
  left: boolean;
  right: boolean;
  straight: boolean;
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  hello: HelloFrame,
  frame: StateFrame | null,
  trail: StateFrame[],
  vp: Viewport,
  toggles: OverlayToggles,
): void {
  const { grid, cells, mission } = hello;
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);

  // map extent
  const [x0, y0] = toScreen(vp, grid.origin_x, grid.origin_y + grid.extent_y);
  ctx.fillStyle = "#f5f5f0";
  ctx.fillRect(x0, y0, grid.extent_x * vp.scale, grid.extent_y * vp.scale);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(x0, y0, grid.extent_x * vp.scale, grid.extent_y * vp.scale);

  // behavioural overlay
  const current = frame ? cellUnderWalker(grid, frame) : null;
  for (const ref of cells) {
    if (!toggles[ref.label]) continue;
    const [cx, cy] = ref.cell;
    const wx = grid.origin_x + cx * grid.cell_size;
    const wy = grid.origin_y + cy * grid.cell_size;
    const [px, py] = toScreen(vp, wx, wy + grid.cell_size);
    const side = grid.cell_size * vp.scale;
    const isCurrent = current !== null && current[0] === cx && current[1] === cy;
    ctx.globalAlpha = isCurrent ? 0.75 : 0.3;
    ctx.fillStyle = CLASS_COLOURS[ref.label];
    ctx.fillRect(px, py, side, side);
    ctx.globalAlpha = 1.0;
    // direction arrow from the cell centre
    const cxw = wx + grid.cell_size / 2;
    const cyw = wy + grid.cell_size / 2;
    const len = grid.cell_size * 0.35;
    drawArrow(ctx, vp, cxw, cyw, ref.direction, len, "#333");
  }

  // mission reference path
  ctx.strokeStyle = "#555";
  ctx.setLineDash([6, 4]);
  ctx.beginPath();
  mission.path.forEach(([wx, wy], i) => {
    const [px, py] = toScreen(vp, wx, wy);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.stroke();
  ctx.setLineDash([]);

  // trail then walker
  if (trail.length > 1) {
    ctx.strokeStyle = "#9040a0";
    ctx.lineWidth = 2;
    ctx.beginPath();
    trail.forEach((f, i) => {
      const [px, py] = toScreen(vp, f.x, f.y);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
    ctx.lineWidth = 1;
  }
  if (frame) {
    const [px, py] = toScreen(vp, frame.x, frame.y);
    ctx.fillStyle = frame.engaged ? "#222" : "#c02020";
    ctx.beginPath();
    ctx.arc(px, py, 6, 0, 2 * Math.PI);
    ctx.fill();
    drawArrow(ctx, vp, frame.x, frame.y, frame.theta, 0.5, "#222");
  }
}

function drawArrow(
  ctx: CanvasRenderingContext2D,
  vp: Viewport,
  x: number,
  y: number,
  angle: number,
  lengthM: number,
  colour: string,
): void {
  const [x1, y1] = toScreen(vp, x, y);
  const [x2, y2] = toScreen(vp, x + lengthM * Math.cos(angle), y + lengthM * Math.sin(angle));
  ctx.strokeStyle = colour;
  ctx.beginPath();
  ctx.moveTo(x1, y1);
  ctx.lineTo(x2, y2);
  const head = Math.atan2(y2 - y1, x2 - x1);
  for (const side of [-1, 1]) {
    ctx.moveTo(x2, y2);
    ctx.lineTo(
      x2 - 6 * Math.cos(head + (side * Math.PI) / 7),
      y2 - 6 * Math.sin(head + (side * Math.PI) / 7),
    );
  }
  ctx.stroke();
}
