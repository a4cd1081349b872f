import type { ConfigOverrides, JobDoc, ServiceErrorBody, UploadedImage } from "./types.js";

export class ServiceError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public fieldPath?: string,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function parseError(response: Response): Promise<ServiceError> {
  let body: ServiceErrorBody = { code: "http_error", message: response.statusText };
  try {
    body = (await response.json()) as ServiceErrorBody;
  } catch {
    /* non-JSON error body */
  }
  return new ServiceError(response.status, body.code, body.message, body.field_path);
}

/** Thin typed client for the segmentation service; all numbers the UI shows
 *  come from these responses. */
export class ServiceClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  uploadImage(data: ArrayBuffer | Blob, contentType: string): Promise<UploadedImage> {
    return this.request<UploadedImage>("/images", {
      method: "POST",
      headers: { "content-type": contentType },
      body: data,
    });
  }

  submitJob(body: {
    image_id: string;
    points: [number, number][];
    config?: ConfigOverrides;
    truth_image_id?: string;
  }): Promise<{ job_id: string }> {
    return this.request<{ job_id: string }>("/jobs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  getJob(jobId: string): Promise<JobDoc> {
    return this.request<JobDoc>(`/jobs/${jobId}`);
  }

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/images/${imageId}`;
  }

  maskUrl(jobId: string): string {
    return `${this.baseUrl}/jobs/${jobId}/mask.png`;
  }

  gaborUrl(imageId: string): string {
    return `${this.baseUrl}/images/${imageId}/features/gabor.png`;
  }

  health(): Promise<{ status: string }> {
    return this.request<{ status: string }>("/healthz");
  }
}
