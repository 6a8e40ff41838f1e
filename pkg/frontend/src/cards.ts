/** Query cards: one per triplet question, a button per pair member. */

import type { QueryCard } from "./store.js";

export interface CardCallbacks {
  onSelect(queryId: string, closer: number): void;
  onSubmit(): void;
}

function objectName(labels: string[], media: (string | null)[], id: number): HTMLElement {
  const el = document.createElement("span");
  el.className = "object";
  const m = media[id];
  if (m) {
    const img = document.createElement("img");
    img.src = m;
    img.alt = labels[id] ?? String(id);
    el.appendChild(img);
  }
  const text = document.createElement("span");
  text.textContent = labels[id] ?? String(id);
  el.appendChild(text);
  return el;
}

/** Re-render the round: pure function of the cards plus local selections. */
export function renderRound(
  container: HTMLElement,
  cards: QueryCard[],
  labels: string[],
  media: (string | null)[],
  callbacks: CardCallbacks,
): void {
  container.textContent = "";
  const list = document.createElement("div");
  list.className = "card-list";
  for (const card of cards) {
    const el = document.createElement("div");
    el.className = "card";
    el.dataset.queryId = card.queryId;

    const prompt = document.createElement("p");
    prompt.className = "prompt";
    prompt.append("Is ", objectName(labels, media, card.head), " more similar to...");
    el.appendChild(prompt);

    const choices = document.createElement("div");
    choices.className = "choices";
    for (const candidate of card.pair) {
      const btn = document.createElement("button");
      btn.type = "button";
      btn.className = "choice" + (card.selected === candidate ? " selected" : "");
      btn.dataset.objectId = String(candidate);
      btn.appendChild(objectName(labels, media, candidate));
      btn.addEventListener("click", () => callbacks.onSelect(card.queryId, candidate));
      choices.appendChild(btn);
    }
    el.appendChild(choices);
    list.appendChild(el);
  }
  container.appendChild(list);

  const footer = document.createElement("div");
  footer.className = "round-footer";
  const progress = document.createElement("span");
  const answered = cards.filter((c) => c.selected !== null).length;
  progress.className = "progress";
  progress.textContent = `${answered} / ${cards.length} answered`;
  footer.appendChild(progress);

  const submit = document.createElement("button");
  submit.type = "button";
  submit.id = "submit-round";
  submit.textContent = "Submit round";
  submit.disabled = !(cards.length > 0 && answered === cards.length);
  submit.addEventListener("click", () => callbacks.onSubmit());
  footer.appendChild(submit);
  container.appendChild(footer);
}
