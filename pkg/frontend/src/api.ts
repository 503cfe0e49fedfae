// Typed client for the inference service. fetchFn is injectable so tests
// can script the server.

export interface GenerateRequest {
  s_sketch: number;
  s_stroke: number;
  realism: number;
  seed?: number;
  steps?: number;
  sketch_png?: string;
  stroke_png?: string;
  reference_png?: string;
}

export interface JobInfo {
  job_id: string;
  status: "queued" | "running" | "done" | "failed";
  progress: number;
  result_png: string | null;
  error: string | null;
}

export interface ModelInfo {
  id: string;
  height: number;
  width: number;
  steps: number;
}

export class ApiError extends Error {
  status: number;
  fieldName: string | null;

  constructor(message: string, status: number, fieldName: string | null = null) {
    super(message);
    this.status = status;
    this.fieldName = fieldName;
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function errorFrom(res: Response): Promise<ApiError> {
  let message = `request failed with status ${res.status}`;
  let field: string | null = null;
  try {
    const body = await res.json();
    if (body && typeof body.error === "string") message = body.error;
    if (body && typeof body.field === "string") field = body.field;
  } catch {
    // non-JSON error body, keep the status message
  }
  return new ApiError(message, res.status, field);
}

export class ApiClient {
  private baseUrl: string;
  private fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn: FetchLike = (url, init) => fetch(url, init)) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  async models(): Promise<ModelInfo[]> {
    const res = await this.fetchFn(`${this.baseUrl}/api/v1/models`);
    if (!res.ok) throw await errorFrom(res);
    const body = await res.json();
    return body.models as ModelInfo[];
  }

  /** Submit a generation job; resolves to the job id. */
  async generate(req: GenerateRequest): Promise<string> {
    const res = await this.fetchFn(`${this.baseUrl}/api/v1/generate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
    if (!res.ok) throw await errorFrom(res);
    const body = await res.json();
    return body.job_id as string;
  }

  async job(id: string): Promise<JobInfo> {
    const res = await this.fetchFn(`${this.baseUrl}/api/v1/jobs/${id}`);
    if (!res.ok) throw await errorFrom(res);
    return (await res.json()) as JobInfo;
  }
}
