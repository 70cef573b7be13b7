import { describe, expect, it } from "vitest";

import { cellUnderWalker, fitViewport, toScreen } from "../src/render.js";
import { GridMeta } from "../src/schema.js";

const grid: GridMeta = {
  origin_x: -1,
  origin_y: -2,
  extent_x: 12,
  extent_y: 12,
  cell_size: 1,
};

describe("world to screen transform", () => {
  it("fits the grid extent inside the canvas with a margin", () => {
    const vp = fitViewport(grid, 620, 620, 10);
    expect(vp.scale).toBe(50);
    const [x0, y0] = toScreen(vp, grid.origin_x, grid.origin_y);
    const [x1, y1] = toScreen(vp, grid.origin_x + grid.extent_x, grid.origin_y + grid.extent_y);
    expect(x0).toBe(10);
    expect(y0).toBe(610);
    expect(x1).toBe(610);
    expect(y1).toBe(10);
  });

  it("flips y so world up is screen up", () => {
    const vp = fitViewport(grid, 620, 620, 10);
    const [, yLow] = toScreen(vp, 0, -2);
    const [, yHigh] = toScreen(vp, 0, 10);
    expect(yHigh).toBeLessThan(yLow);
  });
});

describe("cellUnderWalker", () => {
  it("maps a pose to the behavioural cell containing it", () => {
    expect(cellUnderWalker(grid, { x: -0.5, y: -1.5 })).toEqual([0, 0]);
    expect(cellUnderWalker(grid, { x: 2.99, y: 0.01 })).toEqual([3, 2]);
    expect(cellUnderWalker(grid, { x: 3.0, y: 0.01 })).toEqual([4, 2]);
  });
});
