export interface Point {
  x: number;
  y: number;
}

export interface MetricReport {
  dice: number;
  jaccard: number;
  mean_distance: number;
}

export interface ConfigOverrides {
  feature_set?: "intensity" | "gabor" | "both";
  weights?: {
    sigma?: number;
    weight_mode?: "pixel" | "regional" | "both";
    band_inflate?: number;
    band_shrink?: number;
    neighborhood_radius?: number;
  };
  gabor?: {
    num_scales?: number;
    num_directions?: number;
  };
  max_iterations?: number;
}

export interface JobResult {
  width: number;
  height: number;
  mask_rle: number[][][];
  mask_png_url: string;
  contour: [number, number][];
  iterations: number;
  converged: boolean;
  diagnostics: Record<string, unknown>;
  metrics?: MetricReport;
  manifest: {
    image_id: string;
    init_points: [number, number][];
    config: Record<string, unknown>;
    toolkit_version: string;
  };
}

export type JobStatus = "queued" | "running" | "done" | "failed";

export interface JobDoc {
  id: string;
  status: JobStatus;
  image_id: string;
  result?: JobResult;
  error?: { code: string; message: string };
}

export interface UploadedImage {
  image_id: string;
  width: number;
  height: number;
}

export interface ServiceErrorBody {
  code: string;
  message: string;
  field_path?: string;
}
