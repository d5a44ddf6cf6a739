import { describe, expect, it } from "vitest";

import { ConflictError, ReviewApi, rawJsonToken } from "../src/api";
import { FakeService } from "./fake_service";

const LICENSES = [
  { id: "lic-a", name: "License A", text: "Terms A." },
  { id: "lic-b", name: "License B", text: "Terms B." },
];

describe("ReviewApi", () => {
  it("fetches the next queue item", async () => {
    const service = new FakeService({ group: "manual", licenses: LICENSES });
    const api = new ReviewApi("", service.fetch);
    const item = await api.next("s-fake");
    expect(item.license_id).toBe("lic-a");
    expect(item.total).toBe(2);
    expect(item.group).toBe("manual");
  });

  it("posts decisions with the exact wire shape", async () => {
    const service = new FakeService({ group: "manual", licenses: LICENSES });
    const api = new ReviewApi("", service.fetch);
    await api.postDecision("s-fake", {
      license_id: "lic-a",
      verdict: "denies",
      started_at: "2026-01-01T00:00:00+00:00",
      ended_at: "2026-01-01T00:00:05+00:00",
      assist_shown: false,
    });
    expect(service.decisions).toHaveLength(1);
    expect(service.decisions[0]).toMatchObject({
      license_id: "lic-a",
      verdict: "denies",
      assist_shown: false,
      duration_s: 5,
    });
  });

  it("maps 409 to ConflictError", async () => {
    const service = new FakeService({ group: "manual", licenses: LICENSES, conflictOn: "lic-a" });
    const api = new ReviewApi("", service.fetch);
    await expect(
      api.postDecision("s-fake", {
        license_id: "lic-a",
        verdict: "allows",
        started_at: "2026-01-01T00:00:00+00:00",
        ended_at: "2026-01-01T00:00:01+00:00",
        assist_shown: false,
      }),
    ).rejects.toBeInstanceOf(ConflictError);
  });

  it("passes analyze parameters through", async () => {
    const service = new FakeService({
      group: "assisted",
      licenses: LICENSES,
      assist: { verdict: "denies", rationale_text: "NC restricts commercial use.", latency_s: 2.4 },
    });
    const api = new ReviewApi("", service.fetch);
    const payload = await api.analyze("lic-a", "licensegpt", "sys_v3", "user_v3");
    expect(payload.verdict).toBe("denies");
    expect(service.analyzeCalls[0]).toEqual({
      license_id: "lic-a",
      model_id: "licensegpt",
      system_id: "sys_v3",
      user_id: "user_v3",
    });
  });

  it("preserves raw number tokens from the summary body", async () => {
    const service = new FakeService({ group: "manual", licenses: LICENSES });
    const api = new ReviewApi("", service.fetch);
    await api.postDecision("s-fake", {
      license_id: "lic-a",
      verdict: "allows",
      started_at: "2026-01-01T00:00:00+00:00",
      ended_at: "2026-01-01T00:00:06+00:00",
      assist_shown: false,
    });
    const summary = await api.summary("s-fake");
    expect(summary.raw.mean_duration_s).toBe("6.0");
    expect(summary.raw.pa_pct).toBe("100.0");
    expect(summary.parsed.mean_duration_s).toBe(6.0);
  });

  it("rawJsonToken extracts literal tokens", () => {
    const body = '{"pa_pct":100.0,"mean_duration_s":6.0,"n_decided":3,"n_pending":0}';
    expect(rawJsonToken(body, "pa_pct")).toBe("100.0");
    expect(rawJsonToken(body, "n_decided")).toBe("3");
    expect(() => rawJsonToken(body, "missing")).toThrow();
  });
});
