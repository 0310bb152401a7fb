/** Thin typed client for the annotation service /v1 API.
 *
 * The UI talks to nothing else; every network interaction goes through
 * this module so tests can inject a fetch implementation.
 */

import type {
  Assignment,
  LabelExport,
  Removal,
  SubmitOutcome,
  WorkerInfo,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly errorType: string,
    message: string,
    /** Token ids outside the HIT span, on a 422 span rejection. */
    public readonly diff?: string[],
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ status: number; json(): Promise<unknown> }>;

export class AnnotationApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (cause) {
      throw new ApiError(0, "NetworkError", `service unreachable: ${String(cause)}`);
    }
    const payload = (await response.json()) as Record<string, unknown>;
    if (response.status >= 400) {
      throw new ApiError(
        response.status,
        String(payload.error ?? "ServiceError"),
        String(payload.detail ?? "request failed"),
        payload.diff as string[] | undefined,
      );
    }
    return payload as T;
  }

  /** Ask for this worker's next HIT; `hit` is null when no work remains. */
  nextHit(workerId: string): Promise<Assignment> {
    return this.request<Assignment>(
      "GET",
      `/v1/hits/next?worker=${encodeURIComponent(workerId)}`,
    );
  }

  submit(
    hitId: string,
    workerId: string,
    removals: Removal[],
    elapsedSeconds: number,
  ): Promise<SubmitOutcome> {
    return this.request<SubmitOutcome>(
      "POST",
      `/v1/hits/${encodeURIComponent(hitId)}/submit`,
      { worker_id: workerId, removals, elapsed_seconds: elapsedSeconds },
    );
  }

  workerInfo(workerId: string): Promise<WorkerInfo> {
    return this.request<WorkerInfo>(
      "GET",
      `/v1/workers/${encodeURIComponent(workerId)}`,
    );
  }

  exportLabels(): Promise<LabelExport> {
    return this.request<LabelExport>("GET", "/v1/exports/labels");
  }
}
