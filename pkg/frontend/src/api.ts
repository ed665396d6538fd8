/**
 * Fetch client for the label service.
 *
 * Every /api call carries the opaque X-Auth-Token header; the service maps
 * the token to a user and role. Non-2xx responses raise ApiError carrying
 * the HTTP status and the service's detail string, so flows can branch on
 * status (409 means a stale submission and calls for a re-fetch).
 */

import type {
  ConflictsResponse,
  Label,
  NextBatchResponse,
  Stats,
  SubmitAck,
} from "./types.js";

export type FetchLike = (path: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(`${status}: ${detail}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

export class LabelServiceClient {
  private readonly token: string;
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(token: string, base = "", fetchFn?: FetchLike) {
    this.token = token;
    this.base = base.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((path, init) => fetch(path, init));
  }

  nextBatch(): Promise<NextBatchResponse> {
    return this.request("GET", "/api/batches/next");
  }

  submitLabels(batchId: string, labels: Label[]): Promise<SubmitAck> {
    const path = `/api/batches/${encodeURIComponent(batchId)}/labels`;
    return this.request("POST", path, { labels });
  }

  conflicts(): Promise<ConflictsResponse> {
    return this.request("GET", "/api/conflicts");
  }

  resolveConflict(
    batchId: string,
    decisions: Record<string, Label>,
  ): Promise<SubmitAck> {
    const path = `/api/conflicts/${encodeURIComponent(batchId)}/resolution`;
    return this.request("POST", path, { decisions });
  }

  stats(): Promise<Stats> {
    return this.request("GET", "/api/stats");
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const headers: Record<string, string> = { "X-Auth-Token": this.token };
    const init: RequestInit = { method, headers };
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.base + path, init);
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return response.json() as Promise<T>;
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const doc: unknown = await response.json();
    if (doc && typeof doc === "object" && "detail" in doc) {
      const detail = (doc as { detail: unknown }).detail;
      if (typeof detail === "string") return detail;
      return JSON.stringify(detail);
    }
  } catch {
    // non-JSON error body; fall through to the status text
  }
  return response.statusText || `http ${response.status}`;
}
