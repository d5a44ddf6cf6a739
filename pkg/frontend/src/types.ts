/** Payload shapes of the review service HTTP API. */

export type ReviewGroup = "manual" | "assisted";

export type Verdict = "allows" | "denies" | "unclear";

export interface QueueItem {
  license_id: string | null;
  name?: string;
  text?: string;
  decided: number;
  total: number;
  group: ReviewGroup;
}

export interface AssistPayload {
  verdict: string;
  rationale_text: string;
  latency_s: number;
}

export interface DecisionBody {
  license_id: string;
  verdict: Verdict;
  started_at: string;
  ended_at: string;
  assist_shown: boolean;
}

export interface SessionSummary {
  pa_pct: number;
  mean_duration_s: number;
  n_decided: number;
  n_pending: number;
}

/**
 * Summary with the raw JSON number tokens preserved. The UI renders these
 * verbatim so the numbers on screen are byte-identical to what the service
 * sent (no float round-tripping: "6.0" stays "6.0").
 */
export interface RawSummary {
  parsed: SessionSummary;
  raw: { pa_pct: string; mean_duration_s: string; n_decided: string; n_pending: string };
}
