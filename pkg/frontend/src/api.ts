/** Thin HTTP client for the engine service.
 *
 * Every request stamps the wire version and every error is classified so
 * the UI can distinguish "retry later" (network, busy engine) from
 * programming or protocol errors.
 */

import {
  BuffersPayload,
  KbStats,
  MetricsPayload,
  QueryInput,
  SessionDetail,
  SessionPayload,
  WIRE_VERSION,
  WireTriple,
} from "./wire.js";

export interface HttpResponse {
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<HttpResponse>;

export class NetworkError extends Error {
  readonly retryable = true;
}

export class BusyError extends Error {
  readonly retryable = true;
}

export class ApiError extends Error {
  readonly retryable = false;
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

function errorDetail(body: unknown): string {
  if (body && typeof body === "object") {
    const detail = (body as { detail?: unknown }).detail;
    if (detail && typeof detail === "object") {
      const msg = (detail as { error?: unknown }).error;
      if (typeof msg === "string") return msg;
    }
    if (typeof detail === "string") return detail;
  }
  return "request failed";
}

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let response: HttpResponse;
    try {
      response = await this.fetchImpl(this.base + path, init);
    } catch (exc) {
      throw new NetworkError(`service unreachable: ${exc}`);
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // some errors carry no body; the status code is enough
    }
    if (response.status === 409) throw new BusyError(errorDetail(body));
    if (response.status >= 400) throw new ApiError(errorDetail(body), response.status);
    return body;
  }

  private post(path: string, payload: unknown): Promise<unknown> {
    return this.request(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  startSession(query: QueryInput): Promise<SessionPayload> {
    return this.post("/sessions", { v: WIRE_VERSION, query }) as Promise<SessionPayload>;
  }

  /** Send exactly the triples the human entered; an empty list declines. */
  postFacts(sessionId: string, triples: WireTriple[]): Promise<SessionPayload> {
    return this.post(`/sessions/${sessionId}/facts`, {
      v: WIRE_VERSION,
      triples,
    }) as Promise<SessionPayload>;
  }

  getSession(sessionId: string): Promise<SessionDetail> {
    return this.request(`/sessions/${sessionId}`) as Promise<SessionDetail>;
  }

  kbStats(): Promise<KbStats> {
    return this.request("/kb/stats") as Promise<KbStats>;
  }

  buffers(): Promise<BuffersPayload> {
    return this.request("/buffers") as Promise<BuffersPayload>;
  }

  metrics(): Promise<MetricsPayload> {
    return this.request("/metrics") as Promise<MetricsPayload>;
  }
}
