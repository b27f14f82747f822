/** Typed client for the /v1 annotation API. All GP math stays on the server. */

import { AnnotationPayload } from "./ellipse.js";

export interface SessionCreateBody {
  kernel: unknown;
  candidates: number[][];
  strategy?: string;
  seed?: number;
}

export interface Suggestion {
  x: [number, number];
  iteration: number;
  delta_h: number;
}

export interface AnnotationReceipt {
  n_annotations: number;
  entropy_summary: number;
  sigma: number[][];
}

export interface ApiErrorBody {
  code: string;
  message?: string;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message?: string,
  ) {
    super(message ?? `${status}: ${code}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return;
  let code = "unknown";
  let message: string | undefined;
  try {
    const body = (await resp.json()) as { detail?: ApiErrorBody };
    code = body.detail?.code ?? code;
    message = body.detail?.message;
  } catch {
    // non-JSON error body: keep the generic code
  }
  throw new ApiError(resp.status, code, message);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.url(path), init);
    await raiseForStatus(resp);
    return (await resp.json()) as T;
  }

  createSession(body: SessionCreateBody): Promise<{ id: string }> {
    return this.json("/v1/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  suggestion(sessionId: string): Promise<Suggestion> {
    return this.json(`/v1/sessions/${sessionId}/suggestion`);
  }

  annotate(sessionId: string, payload: AnnotationPayload): Promise<AnnotationReceipt> {
    return this.json(`/v1/sessions/${sessionId}/annotations`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  skip(sessionId: string): Promise<{ skipped: boolean }> {
    return this.json(`/v1/sessions/${sessionId}/skip`, { method: "POST" });
  }

  async traceCsv(sessionId: string): Promise<string> {
    const resp = await this.fetchImpl(this.url(`/v1/sessions/${sessionId}/trace`));
    await raiseForStatus(resp);
    return resp.text();
  }

  mapUrl(sessionId: string, kind: "error" | "entropy" | "blended", transform: string): string {
    return this.url(
      `/v1/sessions/${sessionId}/maps/${kind}?transform=${encodeURIComponent(transform)}`,
    );
  }

  tileUrl(imageId: string, x0: number, y0: number, w: number, h: number): string {
    return this.url(
      `/v1/images/${encodeURIComponent(imageId)}/tile?x0=${x0}&y0=${y0}&w=${w}&h=${h}`,
    );
  }
}
