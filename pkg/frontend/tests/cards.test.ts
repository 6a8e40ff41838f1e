// @vitest-environment happy-dom
import { beforeEach, describe, expect, it, vi } from "vitest";

import { renderRound } from "../src/cards.js";
import { MemoryStorage, RoundStore } from "../src/store.js";
import type { WireQuery } from "../src/types.js";

const LABELS = ["ant", "bee", "cat", "dog", "eel", "fox"];
const MEDIA: (string | null)[] = LABELS.map(() => null);

function queries(k: number): WireQuery[] {
  return Array.from({ length: k }, (_, i) => ({
    query_id: `1-${i}`,
    head: i,
    pair: [(i + 1) % 6, (i + 2) % 6] as [number, number],
  }));
}

describe("renderRound", () => {
  let container: HTMLElement;
  let store: RoundStore;

  beforeEach(() => {
    container = document.createElement("div");
    document.body.textContent = "";
    document.body.appendChild(container);
    store = new RoundStore("s", new MemoryStorage());
  });

  function draw(onSubmit = vi.fn()) {
    renderRound(container, store.snapshot(), LABELS, MEDIA, {
      onSelect: (qid, closer) => {
        store.select(qid, closer);
        draw(onSubmit);
      },
      onSubmit,
    });
    return onSubmit;
  }

  it("renders one card per query with submit disabled until all answered", () => {
    store.loadRound(1, queries(5));
    draw();
    expect(container.querySelectorAll(".card")).toHaveLength(5);
    let submit = container.querySelector<HTMLButtonElement>("#submit-round")!;
    expect(submit.disabled).toBe(true);

    for (const card of Array.from(container.querySelectorAll(".card"))) {
      card.querySelector<HTMLButtonElement>(".choice")!.click();
    }
    submit = container.querySelector<HTMLButtonElement>("#submit-round")!;
    expect(submit.disabled).toBe(false);
    expect(container.querySelector(".progress")!.textContent).toBe("5 / 5 answered");
  });

  it("marks the selected side and switching sides moves the mark", () => {
    store.loadRound(1, queries(1));
    draw();
    const buttons = () => Array.from(container.querySelectorAll<HTMLButtonElement>(".choice"));
    buttons()[0].click();
    expect(buttons()[0].classList.contains("selected")).toBe(true);
    buttons()[1].click();
    expect(buttons()[0].classList.contains("selected")).toBe(false);
    expect(buttons()[1].classList.contains("selected")).toBe(true);
    expect(store.responses()).toHaveLength(1);
  });

  it("submit fires only through the button", () => {
    store.loadRound(1, queries(2));
    const onSubmit = draw();
    for (const card of Array.from(container.querySelectorAll(".card"))) {
      card.querySelector<HTMLButtonElement>(".choice")!.click();
    }
    expect(onSubmit).not.toHaveBeenCalled();
    container.querySelector<HTMLButtonElement>("#submit-round")!.click();
    expect(onSubmit).toHaveBeenCalledTimes(1);
  });

  it("restores a mid-round reload into the rendered state", () => {
    const storage = new MemoryStorage();
    const first = new RoundStore("s", storage);
    first.loadRound(3, queries(3));
    first.select("1-0", 1);
    first.select("1-2", 4);

    const reloaded = new RoundStore("s", storage);
    reloaded.loadRound(3, queries(3));
    renderRound(container, reloaded.snapshot(), LABELS, MEDIA, {
      onSelect: () => {},
      onSubmit: () => {},
    });
    expect(container.querySelectorAll(".choice.selected")).toHaveLength(2);
    expect(container.querySelector(".progress")!.textContent).toBe("2 / 3 answered");
  });
});
