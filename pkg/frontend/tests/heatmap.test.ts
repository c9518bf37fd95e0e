import { describe, expect, it } from "vitest";

import {
  attentionIntensities,
  f0Polyline,
  heatmapColors,
  spanToPixels,
} from "../src/heatmap.js";

describe("heatmapColors", () => {
  it("normalizes the full range to the color ramp", () => {
    const colors = heatmapColors([
      [0, 10],
      [5, 10],
    ]);
    expect(colors[0][0]).toEqual({ r: 0, g: 51, b: 255 }); // coldest
    expect(colors[0][1]).toEqual({ r: 255, g: 255, b: 0 }); // hottest
  });

  it("handles constant matrices without dividing by zero", () => {
    const colors = heatmapColors([[3, 3, 3]]);
    for (const c of colors[0]) {
      expect(Number.isFinite(c.r)).toBe(true);
    }
  });

  it("handles empty input", () => {
    expect(heatmapColors([])).toEqual([]);
  });
});

describe("attentionIntensities", () => {
  it("scales by the peak weight", () => {
    const grid = attentionIntensities([
      [0.5, 0.5],
      [0.25, 0.75],
    ]);
    expect(grid[1][1]).toBeCloseTo(1.0);
    expect(grid[1][0]).toBeCloseTo(1 / 3);
  });
});

describe("f0Polyline", () => {
  it("maps frames across the width and values across the height", () => {
    const pts = f0Polyline([100, 200, 150], [true, true, true], 100, 50);
    expect(pts).toHaveLength(3);
    expect(pts[0].x).toBe(0);
    expect(pts[2].x).toBe(100);
    expect(pts[0].y).toBe(50); // lowest pitch at the bottom
    expect(pts[1].y).toBe(0); // highest at the top
  });

  it("marks unvoiced frames", () => {
    const pts = f0Polyline([100, 120], [true, false], 10, 10);
    expect(pts[0].voiced).toBe(true);
    expect(pts[1].voiced).toBe(false);
  });

  it("handles empty contours", () => {
    expect(f0Polyline([], [], 10, 10)).toEqual([]);
  });
});

describe("spanToPixels", () => {
  it("scales frame ranges linearly", () => {
    expect(spanToPixels([5, 10], 20, 200)).toEqual([50, 100]);
  });
});
