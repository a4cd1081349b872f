import type { Session } from "./session.js";
import type { Point } from "./types.js";

/** The slice of CanvasRenderingContext2D the overlay needs; tests pass a
 *  recording fake. */
export interface Draw2D {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  setLineDash(segments: number[]): void;
}

// Overlay palette: result red, manual/truth yellow, init preview green.
export const RESULT_COLOR = "#e53935";
export const TRUTH_COLOR = "#fdd835";
export const INIT_COLOR = "#43a047";
export const GHOST_COLOR = "rgba(229, 57, 53, 0.45)";
export const POINT_COLOR = "#2e7d32";
export const REJECT_COLOR = "#ff1744";

function tracePath(ctx: Draw2D, pts: Iterable<[number, number]>, close: boolean): boolean {
  let first = true;
  for (const [x, y] of pts) {
    if (first) {
      ctx.moveTo(x, y);
      first = false;
    } else {
      ctx.lineTo(x, y);
    }
  }
  if (first) {
    return false;
  }
  if (close) {
    ctx.closePath();
  }
  return true;
}

function strokeContour(ctx: Draw2D, pts: [number, number][], color: string, dash: number[]): void {
  ctx.beginPath();
  if (!tracePath(ctx, pts, true)) {
    return;
  }
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.setLineDash(dash);
  ctx.stroke();
  ctx.setLineDash([]);
}

/** Draw every enabled overlay layer for the session. The raster image and
 *  mask layers are drawn by the caller (they need DOM image objects); this
 *  renders the vector layers. */
export function renderOverlay(ctx: Draw2D, session: Session,
                              truthContour: [number, number][] | null = null): void {
  const layers = session.layers;
  if (layers.truth && truthContour && truthContour.length) {
    strokeContour(ctx, truthContour, TRUTH_COLOR, []);
  }
  if (layers.ghostContour && session.ghostContour && session.ghostContour.length) {
    strokeContour(ctx, session.ghostContour, GHOST_COLOR, [4, 3]);
  }
  if (layers.resultContour && session.result && session.result.contour.length) {
    strokeContour(ctx, session.result.contour, RESULT_COLOR, []);
  }
  if (layers.initSpline) {
    const preview = session.previewSpline();
    if (preview.length) {
      strokeContour(ctx, preview.map((p): [number, number] => [p.x, p.y]), INIT_COLOR, []);
    }
    for (const p of session.points) {
      drawHandle(ctx, p);
    }
  }
  if (session.rejectedClick) {
    drawRejectCue(ctx, session.rejectedClick);
  }
}

function drawHandle(ctx: Draw2D, p: Point): void {
  ctx.beginPath();
  ctx.arc(p.x, p.y, 3, 0, Math.PI * 2);
  ctx.fillStyle = POINT_COLOR;
  ctx.fill();
}

function drawRejectCue(ctx: Draw2D, p: Point): void {
  ctx.beginPath();
  ctx.moveTo(p.x - 5, p.y - 5);
  ctx.lineTo(p.x + 5, p.y + 5);
  ctx.moveTo(p.x + 5, p.y - 5);
  ctx.lineTo(p.x - 5, p.y + 5);
  ctx.strokeStyle = REJECT_COLOR;
  ctx.lineWidth = 2;
  ctx.setLineDash([]);
  ctx.stroke();
}
