/**
 * Entry point. Configuration is a single base URL, read from the
 * `?api=` query parameter or localStorage key `licensekit.apiBase`
 * (default: same origin). `?session=<id>` opens an existing session;
 * otherwise a small create-session form is shown.
 */

import { ReviewApi } from "./api";
import { ReviewApp } from "./app";
import type { ReviewGroup } from "./types";

function apiBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  return fromQuery ?? window.localStorage.getItem("licensekit.apiBase") ?? "";
}

function renderCreateForm(root: HTMLElement, api: ReviewApi): void {
  root.innerHTML = `
    <main class="create">
      <h2>Start a review session</h2>
      <label>Reviewer id <input name="reviewer" value="reviewer-1"></label>
      <label>Group
        <select name="group">
          <option value="manual">manual</option>
          <option value="assisted">assisted</option>
        </select>
      </label>
      <label>License ids (one per line)<textarea name="licenses" rows="6"></textarea></label>
      <button type="button" data-testid="create">Create session</button>
      <p data-testid="create-status"></p>
    </main>
  `;
  const field = (name: string) =>
    root.querySelector<HTMLInputElement | HTMLSelectElement | HTMLTextAreaElement>(`[name="${name}"]`)!;
  root.querySelector('[data-testid="create"]')!.addEventListener("click", async () => {
    const ids = field("licenses")
      .value.split("\n")
      .map((s) => s.trim())
      .filter(Boolean);
    try {
      const sessionId = await api.createSession(field("reviewer").value, field("group").value as ReviewGroup, ids);
      const url = new URL(window.location.href);
      url.searchParams.set("session", sessionId);
      window.location.assign(url.toString());
    } catch (error) {
      root.querySelector('[data-testid="create-status"]')!.textContent = (error as Error).message;
    }
  });
}

export async function boot(root: HTMLElement): Promise<void> {
  const api = new ReviewApi(apiBase());
  const sessionId = new URLSearchParams(window.location.search).get("session");
  if (sessionId) {
    await new ReviewApp(root, api, sessionId).start();
  } else {
    renderCreateForm(root, api);
  }
}

const rootElement = document.getElementById("app");
if (rootElement) {
  void boot(rootElement);
}
