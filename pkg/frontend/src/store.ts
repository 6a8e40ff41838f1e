/** Local state for the round being answered.
 *
 * Selections live in Storage under a per-(session, round) key until the
 * server confirms the submission, so a mid-round reload loses nothing.
 * The store never invents responses: `responses()` returns exactly the
 * selections the user made.
 */

import type { WireQuery } from "./types.js";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export interface QueryCard {
  queryId: string;
  head: number;
  pair: [number, number];
  selected: number | null;
}

export class MemoryStorage implements StorageLike {
  private map = new Map<string, string>();
  getItem(key: string): string | null {
    return this.map.has(key) ? this.map.get(key)! : null;
  }
  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
  removeItem(key: string): void {
    this.map.delete(key);
  }
}

export class RoundStore {
  private cards: QueryCard[] = [];
  private round = -1;

  constructor(
    private sessionId: string,
    private storage: StorageLike,
  ) {}

  private key(): string {
    return `tackl:${this.sessionId}:round:${this.round}`;
  }

  /** Begin (or resume after reload) a round; saved selections restore. */
  loadRound(round: number, queries: WireQuery[]): QueryCard[] {
    this.round = round;
    const saved = this.storage.getItem(this.key());
    const selections: Record<string, number> = saved ? JSON.parse(saved) : {};
    this.cards = queries.map((q) => {
      const sel = selections[q.query_id];
      return {
        queryId: q.query_id,
        head: q.head,
        pair: [q.pair[0], q.pair[1]],
        selected: sel !== undefined && q.pair.includes(sel) ? sel : null,
      };
    });
    return this.snapshot();
  }

  /** Record a choice; selecting the other side replaces the previous one. */
  select(queryId: string, closer: number): void {
    const card = this.cards.find((c) => c.queryId === queryId);
    if (!card) throw new Error(`unknown query ${queryId}`);
    if (!card.pair.includes(closer)) {
      throw new Error(`object ${closer} is not in the pair of ${queryId}`);
    }
    card.selected = closer;
    this.persist();
  }

  allAnswered(): boolean {
    return this.cards.length > 0 && this.cards.every((c) => c.selected !== null);
  }

  answeredCount(): number {
    return this.cards.filter((c) => c.selected !== null).length;
  }

  /** Exactly the user's selections, in card order. */
  responses(): { query_id: string; closer: number }[] {
    return this.cards
      .filter((c) => c.selected !== null)
      .map((c) => ({ query_id: c.queryId, closer: c.selected! }));
  }

  /** Forget the round after the server confirms it. */
  clearRound(): void {
    this.storage.removeItem(this.key());
    this.cards = [];
  }

  snapshot(): QueryCard[] {
    return this.cards.map((c) => ({ ...c }));
  }

  private persist(): void {
    const selections: Record<string, number> = {};
    for (const c of this.cards) {
      if (c.selected !== null) selections[c.queryId] = c.selected;
    }
    this.storage.setItem(this.key(), JSON.stringify(selections));
  }
}
