/** Label state for one HIT: which tokens are marked for removal and with
 * which category.
 *
 * The workspace is created fresh per assignment — no label state survives
 * across HITs. A submission is only buildable when every removed token
 * carries a category; removal-without-category is a validation error, not
 * a payload variant.
 */

import type { Category, HitPayload, Removal } from "./types.js";

/** `turn:position` — the token's address within its conversation. */
export type TokenKey = `${number}:${number}`;

export function tokenKey(turn: number, position: number): TokenKey {
  return `${turn}:${position}`;
}

export interface TokenState {
  removed: boolean;
  category: Category | null;
}

export class LabelWorkspace {
  private readonly state = new Map<TokenKey, TokenState>();
  private readonly openedAt: number;

  constructor(
    public readonly hit: HitPayload,
    now: () => number = () => Date.now(),
  ) {
    this.now = now;
    this.openedAt = now();
    for (const turn of hit.turns) {
      for (const token of turn.tokens) {
        this.state.set(tokenKey(turn.turn_index, token.position), {
          removed: false,
          category: null,
        });
      }
    }
  }

  private readonly now: () => number;

  private entry(turn: number, position: number): TokenState {
    const found = this.state.get(tokenKey(turn, position));
    if (!found) {
      throw new RangeError(`token ${turn}:${position} is not part of HIT ${this.hit.hit_id}`);
    }
    return found;
  }

  get tokenCount(): number {
    return this.state.size;
  }

  isRemoved(turn: number, position: number): boolean {
    return this.entry(turn, position).removed;
  }

  categoryOf(turn: number, position: number): Category | null {
    return this.entry(turn, position).category;
  }

  /** Click-token affordance: flip a single token's removed state. */
  toggle(turn: number, position: number): boolean {
    const token = this.entry(turn, position);
    token.removed = !token.removed;
    if (!token.removed) token.category = null;
    return token.removed;
  }

  /** Drag-select affordance: mark a contiguous run within one turn. */
  markRange(turn: number, from: number, to: number, category: Category): void {
    const [lo, hi] = from <= to ? [from, to] : [to, from];
    for (let position = lo; position <= hi; position++) {
      const token = this.entry(turn, position);
      token.removed = true;
      token.category = category;
    }
  }

  setCategory(turn: number, position: number, category: Category): void {
    const token = this.entry(turn, position);
    if (!token.removed) {
      throw new RangeError(`token ${turn}:${position} is not marked for removal`);
    }
    token.category = category;
  }

  /** Tokens marked removed but not yet categorized; submission is blocked
   * until this is empty. */
  uncategorized(): TokenKey[] {
    const missing: TokenKey[] = [];
    for (const [key, token] of this.state) {
      if (token.removed && token.category === null) missing.push(key);
    }
    return missing;
  }

  canSubmit(): boolean {
    return this.uncategorized().length === 0;
  }

  /** Seconds since the workspace rendered; reported with the submission
   * (the server's own measurement is authoritative for analytics). */
  elapsedSeconds(): number {
    return (this.now() - this.openedAt) / 1000;
  }

  /** The submission payload: one row per removed token. All-keep is valid
   * and produces an empty list. Throws if any removal lacks a category. */
  buildRemovals(): Removal[] {
    const missing = this.uncategorized();
    if (missing.length > 0) {
      throw new Error(`uncategorized removals: ${missing.join(", ")}`);
    }
    const removals: Removal[] = [];
    for (const turn of this.hit.turns) {
      for (const token of turn.tokens) {
        const state = this.entry(turn.turn_index, token.position);
        if (state.removed && state.category) {
          removals.push({
            turn: turn.turn_index,
            position: token.position,
            category: state.category,
          });
        }
      }
    }
    return removals;
  }
}
