/** Thin typed client for the session server's four endpoints. */

import type {
  SessionConfig,
  SessionManifest,
  SessionState,
  SubmitResult,
  WireQuery,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public code: string,
    message: string,
    public status: number,
  ) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class SessionApi {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchFn(`${this.baseUrl}${path}`, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError("unreachable", `API unreachable: ${err}`, 0);
    }
    const data = await res.json().catch(() => ({}));
    if (!res.ok) {
      const e = (data as { error?: { code?: string; message?: string } }).error ?? {};
      throw new ApiError(e.code ?? "http-error", e.message ?? res.statusText, res.status);
    }
    return data as T;
  }

  createSession(manifest: SessionManifest, config: SessionConfig): Promise<SessionState> {
    return this.request<SessionState>("POST", "/sessions", { manifest, config });
  }

  async nextRound(sessionId: string): Promise<WireQuery[]> {
    const data = await this.request<{ queries: WireQuery[] }>(
      "POST",
      `/sessions/${sessionId}/rounds`,
    );
    return data.queries;
  }

  submitResponses(
    sessionId: string,
    responses: { query_id: string; closer: number }[],
  ): Promise<SubmitResult> {
    return this.request<SubmitResult>("POST", `/sessions/${sessionId}/responses`, {
      responses,
    });
  }

  getState(sessionId: string): Promise<SessionState> {
    return this.request<SessionState>("GET", `/sessions/${sessionId}`);
  }

  /** Poll until the session leaves the fitting/awaiting phase. */
  async waitReady(
    sessionId: string,
    opts: { intervalMs?: number; timeoutMs?: number } = {},
  ): Promise<SessionState> {
    const interval = opts.intervalMs ?? 300;
    const deadline = Date.now() + (opts.timeoutMs ?? 60_000);
    for (;;) {
      const state = await this.getState(sessionId);
      if (state.status === "ready" || state.status === "finished") return state;
      if (Date.now() > deadline) {
        throw new ApiError("timeout", `session ${sessionId} stuck in ${state.status}`, 0);
      }
      await new Promise((resolve) => setTimeout(resolve, interval));
    }
  }
}
