// @vitest-environment happy-dom
import { describe, expect, it } from "vitest";

import { renderDashboard } from "../src/dashboard.js";
import type { SessionState } from "../src/types.js";

function baseState(overrides: Partial<SessionState> = {}): SessionState {
  return {
    session_id: "abc",
    status: "ready",
    method: "A-TACKL",
    round: 0,
    n: 4,
    labels: ["a", "b", "c", "d"],
    media: [null, null, null, null],
    responses_seen: 0,
    weights: [],
    projection: [
      [0, 0],
      [1, 0],
      [0, 1],
      [1, 1],
    ],
    metrics_history: [],
    current_round: [],
    ...overrides,
  };
}

describe("renderDashboard", () => {
  it("fresh session shows placeholders, no curve points", () => {
    const container = document.createElement("div");
    renderDashboard(container, baseState());
    expect(container.querySelectorAll(".curve-point")).toHaveLength(0);
    expect(container.querySelectorAll(".placeholder").length).toBeGreaterThan(0);
  });

  it("curve has one point per completed round", () => {
    const container = document.createElement("div");
    const history = [0, 1, 2].map((round) => ({
      round,
      responses_seen: (round + 1) * 4,
      error: 0.4 - 0.1 * round,
    }));
    renderDashboard(
      container,
      baseState({ round: 3, responses_seen: 12, metrics_history: history }),
    );
    expect(container.querySelectorAll(".curve-point")).toHaveLength(3);
  });

  it("scatter renders one labeled point per object", () => {
    const container = document.createElement("div");
    renderDashboard(container, baseState({ responses_seen: 4 }));
    expect(container.querySelectorAll(".point")).toHaveLength(4);
    expect(container.querySelectorAll(".point-label")).toHaveLength(4);
  });

  it("a zeroed weight renders a zero-width bar", () => {
    const container = document.createElement("div");
    renderDashboard(container, baseState({ weights: [2.0, 0.0, 1.0] }));
    const bars = Array.from(container.querySelectorAll<HTMLElement>(".weight-bar"));
    expect(bars).toHaveLength(3);
    expect(bars[0].style.width).toBe("100%");
    expect(bars[1].style.width).toBe("0%");
  });
});
