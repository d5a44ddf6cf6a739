/** Typed client over the review service. Configured by one base URL. */

import type { AssistPayload, DecisionBody, QueueItem, RawSummary, ReviewGroup } from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

/** The decision was already recorded on the server (HTTP 409). */
export class ConflictError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raise(response: Response): Promise<never> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (body.detail !== undefined) detail = JSON.stringify(body.detail);
  } catch {
    // non-JSON error body; keep the status text
  }
  if (response.status === 409) throw new ConflictError(detail);
  throw new ApiError(response.status, detail);
}

/** Pull the raw token for `"key": <token>` out of a JSON object literal. */
export function rawJsonToken(body: string, key: string): string {
  const match = body.match(new RegExp(`"${key}"\\s*:\\s*([^,}\\s]+)`));
  if (!match || match[1] === undefined) throw new Error(`key ${key} not found in summary body`);
  return match[1];
}

export class ReviewApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) await raise(response);
    return response;
  }

  private post(path: string, body: unknown, signal?: AbortSignal): Promise<Response> {
    return this.request(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
  }

  async createSession(reviewerId: string, group: ReviewGroup, licenseIds: string[]): Promise<string> {
    const response = await this.post("/sessions", {
      reviewer_id: reviewerId,
      group,
      license_ids: licenseIds,
    });
    const body = (await response.json()) as { session_id: string };
    return body.session_id;
  }

  async next(sessionId: string): Promise<QueueItem> {
    const response = await this.request(`/sessions/${sessionId}/next`);
    return (await response.json()) as QueueItem;
  }

  async analyze(
    licenseId: string,
    modelId: string,
    systemId: string,
    userId: string,
    signal?: AbortSignal,
  ): Promise<AssistPayload> {
    const response = await this.post(
      "/analyze",
      { license_id: licenseId, model_id: modelId, system_id: systemId, user_id: userId },
      signal,
    );
    return (await response.json()) as AssistPayload;
  }

  async postDecision(sessionId: string, decision: DecisionBody): Promise<void> {
    await this.post(`/sessions/${sessionId}/decisions`, decision);
  }

  async summary(sessionId: string): Promise<RawSummary> {
    const response = await this.request(`/sessions/${sessionId}/summary`);
    const text = await response.text();
    return {
      parsed: JSON.parse(text),
      raw: {
        pa_pct: rawJsonToken(text, "pa_pct"),
        mean_duration_s: rawJsonToken(text, "mean_duration_s"),
        n_decided: rawJsonToken(text, "n_decided"),
        n_pending: rawJsonToken(text, "n_pending"),
      },
    };
  }
}
