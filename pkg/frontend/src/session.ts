import { ServiceClient, ServiceError } from "./api.js";
import { sampleClosedSpline } from "./spline.js";
import type { ConfigOverrides, JobDoc, JobStatus, Point } from "./types.js";

export interface Layers {
  image: boolean;
  initSpline: boolean;
  resultContour: boolean;
  ghostContour: boolean;
  truth: boolean;
}

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/** One annotation session: an image, the click list, overrides, and the
 *  latest job. All segmentation numbers come from service responses. */
export class Session {
  imageId: string | null = null;
  imageWidth = 0;
  imageHeight = 0;
  truthImageId: string | null = null;
  points: Point[] = [];
  config: ConfigOverrides = {};
  layers: Layers = {
    image: true,
    initSpline: true,
    resultContour: true,
    ghostContour: true,
    truth: true,
  };
  latestJobId: string | null = null;
  jobStatus: JobStatus | null = null;
  result: JobDoc["result"] | null = null;
  ghostContour: [number, number][] | null = null;
  lastError: { code: string; message: string; fieldPath?: string } | null = null;
  rejectedClick: Point | null = null;

  private runToken = 0;

  constructor(
    private client: ServiceClient,
    public pollIntervalMs = 250,
  ) {}

  setImage(imageId: string, width: number, height: number): void {
    this.imageId = imageId;
    this.imageWidth = width;
    this.imageHeight = height;
    this.points = [];
    this.result = null;
    this.ghostContour = null;
    this.latestJobId = null;
    this.jobStatus = null;
    this.lastError = null;
  }

  attachTruth(imageId: string | null): void {
    this.truthImageId = imageId;
  }

  private inBounds(x: number, y: number): boolean {
    return x >= 0 && y >= 0 && x <= this.imageWidth - 1 && y <= this.imageHeight - 1;
  }

  /** Append a click; out-of-bounds clicks are ignored with a visual cue. */
  placePoint(x: number, y: number): boolean {
    if (!this.inBounds(x, y)) {
      this.rejectedClick = { x, y };
      return false;
    }
    this.rejectedClick = null;
    this.points.push({ x, y });
    return true;
  }

  movePoint(index: number, x: number, y: number): boolean {
    if (index < 0 || index >= this.points.length || !this.inBounds(x, y)) {
      if (!this.inBounds(x, y)) {
        this.rejectedClick = { x, y };
      }
      return false;
    }
    this.rejectedClick = null;
    this.points[index] = { x, y };
    return true;
  }

  removePoint(index: number): void {
    if (index >= 0 && index < this.points.length) {
      this.points.splice(index, 1);
    }
  }

  /** Index of the point within `radius` of (x, y), or -1. */
  hitTest(x: number, y: number, radius = 6): number {
    let best = -1;
    let bestDist = radius;
    this.points.forEach((p, i) => {
      const d = Math.hypot(p.x - x, p.y - y);
      if (d <= bestDist) {
        best = i;
        bestDist = d;
      }
    });
    return best;
  }

  /** Closed-spline preview; empty until there are 3 points. */
  previewSpline(): Point[] {
    return sampleClosedSpline(this.points);
  }

  /** Exactly the init-points JSON the service consumes: [[x,y],...]. */
  serializePoints(): string {
    return JSON.stringify(this.points.map((p) => [p.x, p.y]));
  }

  canRun(): boolean {
    return this.imageId !== null && this.points.length >= 3;
  }

  /** Submit the current points/config, poll to a terminal state, and swap
   *  the previous result contour into the ghost layer. A newer run cancels
   *  the polling of a superseded one. */
  async run(): Promise<JobDoc | null> {
    if (!this.canRun() || this.imageId === null) {
      throw new Error("need an image and at least 3 points");
    }
    const token = ++this.runToken;
    this.lastError = null;
    let jobId: string;
    try {
      const submitted = await this.client.submitJob({
        image_id: this.imageId,
        points: JSON.parse(this.serializePoints()) as [number, number][],
        config: Object.keys(this.config).length ? this.config : undefined,
        truth_image_id: this.truthImageId ?? undefined,
      });
      jobId = submitted.job_id;
    } catch (err) {
      if (err instanceof ServiceError) {
        this.lastError = { code: err.code, message: err.message, fieldPath: err.fieldPath };
        return null;
      }
      throw err;
    }
    this.latestJobId = jobId;
    this.jobStatus = "queued";
    for (;;) {
      if (token !== this.runToken) {
        return null; // superseded by a newer run; stop polling this job
      }
      const doc = await this.client.getJob(jobId);
      if (token !== this.runToken) {
        return null;
      }
      this.jobStatus = doc.status;
      if (doc.status === "done") {
        this.ghostContour = this.result ? this.result.contour : null;
        this.result = doc.result ?? null;
        return doc;
      }
      if (doc.status === "failed") {
        this.lastError = doc.error ?? { code: "unknown", message: "job failed" };
        return doc;
      }
      await sleep(this.pollIntervalMs);
    }
  }

  toggleLayer(name: keyof Layers): void {
    this.layers[name] = !this.layers[name];
  }
}

/** View model for the metrics / diagnostics panel. */
export interface MetricsPanel {
  iterations: number | null;
  converged: boolean | null;
  dice: string;
  jaccard: string;
  meanDistance: string;
  hasMetrics: boolean;
}

export function buildMetricsPanel(result: JobDoc["result"] | null): MetricsPanel {
  if (!result) {
    return {
      iterations: null,
      converged: null,
      dice: "-",
      jaccard: "-",
      meanDistance: "-",
      hasMetrics: false,
    };
  }
  const metrics = result.metrics;
  return {
    iterations: result.iterations,
    converged: result.converged,
    dice: metrics ? metrics.dice.toFixed(4) : "-",
    jaccard: metrics ? metrics.jaccard.toFixed(4) : "-",
    meanDistance: metrics ? metrics.mean_distance.toFixed(3) : "-",
    hasMetrics: Boolean(metrics),
  };
}
