/** App wiring: attach to (or create) a session and run the answer loop. */

import { SessionApi, ApiError } from "./api.js";
import { renderRound } from "./cards.js";
import { renderDashboard } from "./dashboard.js";
import { RoundStore } from "./store.js";
import type { SessionState } from "./types.js";

const api = new SessionApi("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

class App {
  private store: RoundStore;
  private state: SessionState | null = null;
  private banner = el<HTMLDivElement>("banner");
  private cardsPane = el<HTMLDivElement>("cards");
  private dashPane = el<HTMLDivElement>("dashboard");

  constructor(private sessionId: string) {
    this.store = new RoundStore(sessionId, window.localStorage);
  }

  async run(): Promise<void> {
    for (;;) {
      try {
        this.state = await api.getState(this.sessionId);
        this.banner.textContent = "";
      } catch (err) {
        this.showRetry(err);
        await sleep(1500);
        continue;
      }
      renderDashboard(this.dashPane, this.state);
      if (this.state.status === "finished") {
        this.cardsPane.textContent = "All queries answered. Session complete.";
        return;
      }
      if (this.state.status === "fitting") {
        this.cardsPane.textContent = "Refitting the model…";
        await sleep(400);
        continue;
      }
      if (this.state.status === "awaiting-responses") {
        await this.answerRound(this.state.current_round);
        continue;
      }
      // ready: open the next round
      try {
        const queries = await api.nextRound(this.sessionId);
        if (!queries.length) continue; // finished; loop picks it up
        await this.answerRound(queries);
      } catch (err) {
        this.showRetry(err);
        await sleep(1500);
      }
    }
  }

  private async answerRound(queries: { query_id: string; head: number; pair: [number, number] }[]): Promise<void> {
    const round = this.state!.round;
    // skip queries the server has already accepted (reload mid-submit)
    const open = queries.filter((q) => !("answered" in q && (q as { answered?: boolean }).answered));
    this.store.loadRound(round, open);
    await new Promise<void>((resolve) => {
      const draw = () => {
        renderRound(this.cardsPane, this.store.snapshot(), this.state!.labels, this.state!.media, {
          onSelect: (queryId, closer) => {
            this.store.select(queryId, closer);
            draw();
          },
          onSubmit: () => {
            void this.submit().then(resolve);
          },
        });
      };
      draw();
    });
  }

  private async submit(): Promise<void> {
    try {
      await api.submitResponses(this.sessionId, this.store.responses());
      this.store.clearRound();
    } catch (err) {
      this.showRetry(err);
    }
  }

  private showRetry(err: unknown): void {
    const message = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    this.banner.textContent = `Request failed (${message}). Retrying; your selections are saved.`;
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function createFromForm(): Promise<string> {
  const labels = el<HTMLTextAreaElement>("labels-input")
    .value.split("\n")
    .map((s) => s.trim())
    .filter(Boolean);
  const method = el<HTMLSelectElement>("method-input").value;
  const state = await api.createSession(
    { objects: labels.map((label) => ({ label })) },
    { method, seed: Math.floor(Math.random() * 1e9) },
  );
  return state.session_id;
}

export async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const existing = params.get("session");
  if (existing) {
    el<HTMLDivElement>("create-form").hidden = true;
    await new App(existing).run();
    return;
  }
  el<HTMLButtonElement>("create-button").addEventListener("click", () => {
    void createFromForm()
      .then((sid) => {
        window.location.search = `?session=${sid}`;
      })
      .catch((err) => {
        el<HTMLDivElement>("banner").textContent = `Could not create session: ${err}`;
      });
  });
}

if (typeof window !== "undefined" && typeof document !== "undefined" && document.getElementById("banner")) {
  void boot();
}
