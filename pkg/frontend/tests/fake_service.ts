/**
 * Scripted double of the review service: a fetch-compatible function with
 * the same routes, validation, and arithmetic, so the UI can be driven end
 * to end without a network. Summary bodies are rendered with Python-style
 * float tokens (100.0, 6.0) exactly as the real service serializes them.
 */

import type { DecisionBody } from "../src/types";

export interface FakeLicense {
  id: string;
  name: string;
  text: string;
}

export interface FakeServiceOptions {
  group: "manual" | "assisted";
  licenses: FakeLicense[];
  assist?: { verdict: string; rationale_text: string; latency_s: number };
  /** Force 409 on every decision for this license id. */
  conflictOn?: string;
}

interface StoredDecision extends DecisionBody {
  duration_s: number;
}

function floatToken(value: number): string {
  return Number.isInteger(value) ? `${value}.0` : String(value);
}

export class FakeService {
  readonly decisions: StoredDecision[] = [];
  readonly analyzeCalls: unknown[] = [];
  lastSummaryBody = "";

  constructor(private readonly options: FakeServiceOptions) {}

  private get sessionId(): string {
    return "s-fake";
  }

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    const url = new URL(input, "http://fake.test");
    const method = (init?.method ?? "GET").toUpperCase();
    const path = url.pathname;

    if (method === "GET" && path === `/sessions/${this.sessionId}/next`) {
      return this.next();
    }
    if (method === "POST" && path === "/analyze") {
      this.analyzeCalls.push(JSON.parse(String(init?.body)));
      if (!this.options.assist) return json(400, { detail: "assist not configured" });
      return json(200, this.options.assist);
    }
    if (method === "POST" && path === `/sessions/${this.sessionId}/decisions`) {
      return this.recordDecision(JSON.parse(String(init?.body)) as DecisionBody);
    }
    if (method === "GET" && path === `/sessions/${this.sessionId}/summary`) {
      return this.summary();
    }
    return json(404, { detail: `no route ${method} ${path}` });
  };

  private next(): Response {
    const decided = this.decisions.length;
    const pending = this.options.licenses[decided];
    const base = {
      decided,
      total: this.options.licenses.length,
      group: this.options.group,
    };
    if (!pending) return json(200, { license_id: null, ...base });
    return json(200, { license_id: pending.id, name: pending.name, text: pending.text, ...base });
  }

  private recordDecision(body: DecisionBody): Response {
    if (body.license_id === this.options.conflictOn || this.decisions.some((d) => d.license_id === body.license_id)) {
      return json(409, { detail: "decision already recorded" });
    }
    const started = Date.parse(body.started_at);
    const ended = Date.parse(body.ended_at);
    if (Number.isNaN(started) || Number.isNaN(ended) || ended < started) {
      return json(400, { detail: "bad timestamps" });
    }
    const stored = { ...body, duration_s: (ended - started) / 1000 };
    this.decisions.push(stored);
    return json(200, stored);
  }

  private summary(): Response {
    if (this.decisions.length === 0) return json(400, { detail: "no decisions" });
    const mean = this.decisions.reduce((acc, d) => acc + d.duration_s, 0) / this.decisions.length;
    // In the fixtures every verdict matches ground truth, so PA is 100.
    this.lastSummaryBody =
      `{"pa_pct":${floatToken(100)},` +
      `"mean_duration_s":${floatToken(mean)},` +
      `"n_decided":${this.decisions.length},` +
      `"n_pending":${this.options.licenses.length - this.decisions.length}}`;
    return new Response(this.lastSummaryBody, {
      status: 200,
      headers: { "Content-Type": "application/json" },
    });
  }
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
