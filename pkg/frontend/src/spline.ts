import type { Point } from "./types.js";

// These mirror the server's rasterization rule exactly: a closed periodic
// cardinal spline with tension 0.9, each segment pre-sampled at 17 points
// to estimate its arc length and then resampled at a step of <= 0.4 px.
// Keeping the preview identical to the server means what the user sees is
// what gets rasterized.
export const TENSION = 0.9;
export const SAMPLE_STEP = 0.4;
const COARSE_SAMPLES = 17;

function hermite(p0: Point, p1: Point, p2: Point, p3: Point, t: number): Point {
  const s = (1 - TENSION) / 2;
  const m1x = s * (p2.x - p0.x);
  const m1y = s * (p2.y - p0.y);
  const m2x = s * (p3.x - p1.x);
  const m2y = s * (p3.y - p1.y);
  const t2 = t * t;
  const t3 = t2 * t;
  const h00 = 2 * t3 - 3 * t2 + 1;
  const h10 = t3 - 2 * t2 + t;
  const h01 = -2 * t3 + 3 * t2;
  const h11 = t3 - t2;
  return {
    x: h00 * p1.x + h10 * m1x + h01 * p2.x + h11 * m2x,
    y: h00 * p1.y + h10 * m1y + h01 * p2.y + h11 * m2y,
  };
}

/** Sample the closed spline through the control points, matching the server. */
export function sampleClosedSpline(points: Point[], step: number = SAMPLE_STEP): Point[] {
  const k = points.length;
  if (k < 3) {
    return [];
  }
  const samples: Point[] = [];
  for (let seg = 0; seg < k; seg++) {
    const p0 = points[(seg - 1 + k) % k];
    const p1 = points[seg];
    const p2 = points[(seg + 1) % k];
    const p3 = points[(seg + 2) % k];
    let length = 0;
    let prev = hermite(p0, p1, p2, p3, 0);
    for (let i = 1; i < COARSE_SAMPLES; i++) {
      const t = i / (COARSE_SAMPLES - 1);
      const pt = hermite(p0, p1, p2, p3, t);
      length += Math.hypot(pt.x - prev.x, pt.y - prev.y);
      prev = pt;
    }
    const n = Math.max(2, Math.ceil(length / step));
    for (let i = 0; i < n; i++) {
      samples.push(hermite(p0, p1, p2, p3, i / n)); // t=1 is the next segment's t=0
    }
  }
  return samples;
}
