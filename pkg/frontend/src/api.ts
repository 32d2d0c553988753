/**
 * Service client. All calls are asynchronous; per-panel request tokens let
 * callers discard responses that were superseded by a newer request.
 */

import type { ModelEntry, PredictRequest, PredictResponse } from "./types";

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

export interface ServiceClient {
  predict(req: PredictRequest): Promise<PredictResponse>;
  models(): Promise<ModelEntry[]>;
  health(): Promise<{ status: string; models_loaded: number; uptime_s: number }>;
}

export function httpClient(baseUrl = ""): ServiceClient {
  async function call<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await fetch(baseUrl + path, init);
    } catch (err) {
      throw new ServiceError(0, "ServiceUnreachable", String(err));
    }
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      throw new ServiceError(
        resp.status,
        (body as { error?: string }).error ?? `HTTP${resp.status}`,
        (body as { detail?: string }).detail ?? resp.statusText,
      );
    }
    return body as T;
  }

  return {
    predict: (req) =>
      call<PredictResponse>("/api/v1/predict", {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(req),
      }),
    models: () => call<ModelEntry[]>("/api/v1/models"),
    health: () => call("/api/v1/health"),
  };
}

/**
 * At most one in-flight predict per panel: responses arriving after a newer
 * request has been issued are dropped.
 */
export class PanelRequests {
  private latest = 0;

  async run<T>(task: () => Promise<T>): Promise<T | null> {
    const token = ++this.latest;
    const result = await task();
    return token === this.latest ? result : null;
  }
}
