// Pure pixel-model helpers for the feature heatmap, F0 contour, and
// attention panel. Rendering code draws exactly what these return, which
// keeps the visual mapping unit-testable without a canvas.

export interface CellColor {
  r: number;
  g: number;
  b: number;
}

/** Map a matrix to per-cell colors, normalizing into [lo, hi] quantiles. */
export function heatmapColors(matrix: number[][]): CellColor[][] {
  const flat = matrix.flat();
  if (flat.length === 0) return [];
  const lo = Math.min(...flat);
  const hi = Math.max(...flat);
  const range = hi - lo || 1;
  return matrix.map((row) =>
    row.map((v) => {
      const t = (v - lo) / range;
      // blue (cold) to yellow (hot)
      return {
        r: Math.round(255 * t),
        g: Math.round(255 * (0.2 + 0.8 * t)),
        b: Math.round(255 * (1 - t)),
      };
    }),
  );
}

/** Attention weights (rows already sum to 1) to grayscale intensities. */
export function attentionIntensities(attention: number[][]): number[][] {
  let peak = 0;
  for (const row of attention) for (const v of row) peak = Math.max(peak, v);
  const scale = peak || 1;
  return attention.map((row) => row.map((v) => v / scale));
}

export interface PolylinePoint {
  x: number;
  y: number;
  voiced: boolean;
}

/** F0 contour as plot points; unvoiced frames are marked, not dropped. */
export function f0Polyline(
  f0: number[],
  voicing: boolean[],
  width: number,
  height: number,
): PolylinePoint[] {
  if (f0.length === 0) return [];
  const voicedValues = f0.filter((_, i) => voicing[i]);
  const lo = voicedValues.length ? Math.min(...voicedValues) : Math.min(...f0);
  const hi = voicedValues.length ? Math.max(...voicedValues) : Math.max(...f0);
  const range = hi - lo || 1;
  const dx = f0.length > 1 ? width / (f0.length - 1) : 0;
  return f0.map((v, i) => ({
    x: i * dx,
    y: height - ((v - lo) / range) * height,
    voiced: Boolean(voicing[i]),
  }));
}

/** Frame index ranges to pixel ranges for span overlays. */
export function spanToPixels(
  span: [number, number],
  frames: number,
  width: number,
): [number, number] {
  const perFrame = width / Math.max(frames, 1);
  return [span[0] * perFrame, span[1] * perFrame];
}
