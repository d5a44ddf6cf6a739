/**
 * Review workbench: steps a reviewer through a license queue, captures
 * per-item timing automatically, offers opt-in model assistance in
 * assisted sessions, and ends on a summary screen.
 *
 * Timing contract: the start timestamp is taken right after the license
 * text is inserted into the DOM, the end timestamp when the reviewer
 * submits. The UI does no metric arithmetic; every number shown on the
 * summary screen is rendered verbatim from the service response.
 */

import { ConflictError, ReviewApi } from "./api";
import type { QueueItem, Verdict } from "./types";

export interface AssistTarget {
  modelId: string;
  systemId: string;
  userId: string;
}

export interface AppOptions {
  /** Injected clock for tests; must return ISO-8601 UTC. */
  nowIso?: () => string;
  assist?: AssistTarget;
}

const VERDICTS: { value: Verdict; label: string }[] = [
  { value: "allows", label: "Allows commercial use" },
  { value: "denies", label: "Denies commercial use" },
  { value: "unclear", label: "Unclear" },
];

export class ReviewApp {
  private startedAt = "";
  private selected: Verdict | null = null;
  private assistShown = false;
  private current: QueueItem | null = null;
  private posting = false;
  private assistAbort: AbortController | null = null;
  private readonly nowIso: () => string;
  private readonly assistTarget: AssistTarget;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ReviewApi,
    private readonly sessionId: string,
    options: AppOptions = {},
  ) {
    this.nowIso = options.nowIso ?? (() => new Date().toISOString());
    this.assistTarget = options.assist ?? {
      modelId: "licensegpt",
      systemId: "sys_v3",
      userId: "user_v3",
    };
  }

  async start(): Promise<void> {
    await this.advance();
  }

  private async advance(): Promise<void> {
    this.assistAbort?.abort();
    this.assistAbort = null;
    const item = await this.api.next(this.sessionId);
    this.current = item;
    this.selected = null;
    this.assistShown = false;
    if (item.license_id === null) {
      await this.renderSummary(item);
    } else {
      this.renderItem(item);
    }
  }

  private renderItem(item: QueueItem): void {
    const assisted = item.group === "assisted";
    this.root.innerHTML = `
      <header class="queue-head">
        <span data-testid="group-badge" class="badge badge-${item.group}">${item.group}</span>
        <span data-testid="progress">${item.decided} / ${item.total} decided</span>
      </header>
      <main>
        <h2 data-testid="license-name"></h2>
        <pre data-testid="license-text" class="license-text"></pre>
        ${assisted ? '<button type="button" data-testid="assist-button">Ask the model</button>' : ""}
        <section data-testid="assist-panel" class="assist-panel" hidden>
          <h3>Model assessment</h3>
          <p data-testid="assist-verdict"></p>
          <pre data-testid="assist-rationale"></pre>
        </section>
        <fieldset class="verdicts">
          <legend>Your verdict</legend>
          ${VERDICTS.map(
            (v) =>
              `<button type="button" data-testid="verdict-${v.value}" data-verdict="${v.value}" aria-pressed="false">${v.label}</button>`,
          ).join("")}
        </fieldset>
        <button type="button" data-testid="submit" disabled>Record decision</button>
        <p data-testid="status" class="status"></p>
      </main>
    `;
    this.byId("license-name").textContent = item.name ?? item.license_id;
    this.byId("license-text").textContent = item.text ?? "";
    // License text is now in the document: the review clock starts here.
    this.startedAt = this.nowIso();

    for (const button of this.root.querySelectorAll<HTMLButtonElement>("[data-verdict]")) {
      button.addEventListener("click", () => this.selectVerdict(button));
    }
    if (assisted) {
      this.byId("assist-button").addEventListener("click", () => void this.requestAssist());
    }
    this.byId("submit").addEventListener("click", () => void this.submit());
  }

  private selectVerdict(button: HTMLButtonElement): void {
    this.selected = button.dataset.verdict as Verdict;
    for (const other of this.root.querySelectorAll<HTMLButtonElement>("[data-verdict]")) {
      other.setAttribute("aria-pressed", other === button ? "true" : "false");
    }
    (this.byId("submit") as HTMLButtonElement).disabled = false;
  }

  private async requestAssist(): Promise<void> {
    if (!this.current?.license_id) return;
    this.assistAbort?.abort();
    this.assistAbort = new AbortController();
    const button = this.byId("assist-button") as HTMLButtonElement;
    button.disabled = true;
    try {
      const payload = await this.api.analyze(
        this.current.license_id,
        this.assistTarget.modelId,
        this.assistTarget.systemId,
        this.assistTarget.userId,
        this.assistAbort.signal,
      );
      this.assistShown = true;
      const panel = this.byId("assist-panel");
      panel.hidden = false;
      this.byId("assist-verdict").textContent = `Verdict: ${payload.verdict}`;
      this.byId("assist-rationale").textContent = payload.rationale_text;
    } catch (error) {
      if ((error as Error).name !== "AbortError") {
        this.setStatus(`assist failed: ${(error as Error).message}`);
      }
    } finally {
      button.disabled = false;
    }
  }

  private async submit(): Promise<void> {
    if (this.posting || !this.selected || !this.current?.license_id) return;
    this.posting = true;
    (this.byId("submit") as HTMLButtonElement).disabled = true;
    try {
      await this.api.postDecision(this.sessionId, {
        license_id: this.current.license_id,
        verdict: this.selected,
        started_at: this.startedAt,
        ended_at: this.nowIso(),
        assist_shown: this.assistShown,
      });
      await this.advance();
    } catch (error) {
      if (error instanceof ConflictError) {
        this.setStatus("already recorded on the server; moving on");
        await this.advance();
      } else {
        this.setStatus(`could not record the decision: ${(error as Error).message}`);
        (this.byId("submit") as HTMLButtonElement).disabled = false;
      }
    } finally {
      this.posting = false;
    }
  }

  private async renderSummary(item: QueueItem): Promise<void> {
    const summary = await this.api.summary(this.sessionId);
    this.root.innerHTML = `
      <header class="queue-head">
        <span data-testid="group-badge" class="badge badge-${item.group}">${item.group}</span>
        <span data-testid="progress">${item.decided} / ${item.total} decided</span>
      </header>
      <main class="summary">
        <h2>Session complete</h2>
        <dl>
          <dt>Prediction agreement</dt>
          <dd data-testid="summary-pa"></dd>
          <dt>Mean seconds per license</dt>
          <dd data-testid="summary-mean"></dd>
          <dt>Decided</dt>
          <dd data-testid="summary-decided"></dd>
          <dt>Pending</dt>
          <dd data-testid="summary-pending"></dd>
        </dl>
      </main>
    `;
    // Raw JSON tokens, verbatim: the service is the single source of truth.
    this.byId("summary-pa").textContent = summary.raw.pa_pct;
    this.byId("summary-mean").textContent = summary.raw.mean_duration_s;
    this.byId("summary-decided").textContent = summary.raw.n_decided;
    this.byId("summary-pending").textContent = summary.raw.n_pending;
  }

  private setStatus(text: string): void {
    const status = this.root.querySelector<HTMLElement>('[data-testid="status"]');
    if (status) status.textContent = text;
  }

  private byId(testId: string): HTMLElement {
    const node = this.root.querySelector<HTMLElement>(`[data-testid="${testId}"]`);
    if (!node) throw new Error(`missing element ${testId}`);
    return node;
  }
}
