/** Wire types mirroring the session server's JSON payloads. */

export interface WireQuery {
  query_id: string;
  head: number;
  pair: [number, number];
}

export interface CurrentRoundEntry extends WireQuery {
  answered: boolean;
  closer?: number;
}

export interface MetricsPoint {
  round: number;
  responses_seen: number;
  error?: number;
  mean_likelihood?: number;
  mean_ratio?: number;
  median_ratio?: number;
}

export type SessionStatus = "ready" | "awaiting-responses" | "fitting" | "finished";

export interface SessionState {
  session_id: string;
  status: SessionStatus;
  method: string;
  round: number;
  n: number;
  labels: string[];
  media: (string | null)[];
  responses_seen: number;
  weights: number[];
  projection: [number, number][];
  metrics_history: MetricsPoint[];
  current_round: CurrentRoundEntry[];
}

export interface SubmitResult {
  status: SessionStatus;
  received: number;
  expected: number;
  accepted: { query_id: string; closer: number }[];
}

export interface SessionManifest {
  objects: { label: string; media?: string }[];
  features?: number[][];
}

export interface SessionConfig {
  method?: string;
  dhat?: number;
  mu?: number;
  seed?: number;
  pool_path?: string;
  fit?: Record<string, unknown>;
  active?: Record<string, unknown>;
}
