/** DOM rendering for the labeling workspace.
 *
 * Layout: task introduction, a foldable worked example with highlighted
 * removals, then the transcript turn-by-turn. Tokens toggle into the
 * "remove" state on click; a color-coded picker assigns one of the five
 * categories to the active selection.
 */

import type { LabelWorkspace, TokenKey } from "./labels.js";
import { tokenKey } from "./labels.js";
import { CATEGORIES, CATEGORY_COLORS, type Category } from "./types.js";

export interface ExampleSpan {
  speaker: string;
  text: string;
  /** Word index range [from, to) highlighted in this line, if any. */
  highlight?: { from: number; to: number; category: Category };
}

export interface RenderOptions {
  /** Tokens that belong to this HIT's overlap with a neighboring chunk;
   * rendered de-emphasized so annotators focus on the fresh middle. */
  overlap?: Set<TokenKey>;
  example?: ExampleSpan[];
}

export const INTRO_TEXT =
  "Read the conversation and mark every token that should be removed to " +
  "leave clean, readable speech: backchannel acknowledgments, repeated or " +
  "paraphrased content, thinking aloud, abandoned sentences, and other " +
  "non-content material. Click a token to mark it, then pick a category. " +
  "Leaving everything unmarked is a valid answer.";

/** Build the category picker; the active button feeds `onPick`. */
function renderPicker(doc: Document, onPick: (category: Category) => void): HTMLElement {
  const picker = doc.createElement("div");
  picker.className = "category-picker";
  for (const category of CATEGORIES) {
    const button = doc.createElement("button");
    button.type = "button";
    button.className = "category-button";
    button.dataset.category = category;
    button.textContent = category;
    button.style.backgroundColor = CATEGORY_COLORS[category];
    button.addEventListener("click", () => onPick(category));
    picker.appendChild(button);
  }
  return picker;
}

/** The foldable worked example; clicking the header collapses/expands. */
function renderExample(doc: Document, spans: ExampleSpan[]): HTMLElement {
  const section = doc.createElement("section");
  section.className = "worked-example";
  const header = doc.createElement("h2");
  header.textContent = "Worked example (click to fold)";
  header.className = "example-header";
  const body = doc.createElement("div");
  body.className = "example-body";
  header.addEventListener("click", () => {
    body.hidden = !body.hidden;
    section.classList.toggle("folded", body.hidden);
  });
  for (const span of spans) {
    const line = doc.createElement("p");
    const speaker = doc.createElement("strong");
    speaker.textContent = `${span.speaker}: `;
    line.appendChild(speaker);
    const words = span.text.split(" ");
    words.forEach((word, i) => {
      const piece = doc.createElement("span");
      piece.textContent = i < words.length - 1 ? `${word} ` : word;
      const h = span.highlight;
      if (h && i >= h.from && i < h.to) {
        piece.style.backgroundColor = CATEGORY_COLORS[h.category];
        piece.className = "example-highlight";
        piece.title = h.category;
      }
      line.appendChild(piece);
    });
    body.appendChild(line);
  }
  section.appendChild(header);
  section.appendChild(body);
  return section;
}

export class WorkspaceView {
  private selected: TokenKey | null = null;
  readonly root: HTMLElement;

  constructor(
    private readonly doc: Document,
    private readonly workspace: LabelWorkspace,
    private readonly options: RenderOptions = {},
  ) {
    this.root = doc.createElement("div");
    this.root.className = "workspace";

    const intro = doc.createElement("p");
    intro.className = "task-intro";
    intro.textContent = INTRO_TEXT;
    this.root.appendChild(intro);

    if (options.example) {
      this.root.appendChild(renderExample(doc, options.example));
    }

    this.root.appendChild(renderPicker(doc, (category) => this.pick(category)));

    const transcript = doc.createElement("div");
    transcript.className = "transcript";
    for (const turn of workspace.hit.turns) {
      const row = doc.createElement("div");
      row.className = "turn";
      row.dataset.turn = String(turn.turn_index);
      const speaker = doc.createElement("span");
      speaker.className = "speaker";
      speaker.textContent = `${turn.speaker}:`;
      row.appendChild(speaker);
      for (const token of turn.tokens) {
        const key = tokenKey(turn.turn_index, token.position);
        const el = doc.createElement("span");
        el.className = "token";
        el.dataset.turn = String(turn.turn_index);
        el.dataset.position = String(token.position);
        el.textContent = token.text;
        if (options.overlap?.has(key)) el.classList.add("overlap");
        el.addEventListener("click", () =>
          this.onTokenClick(turn.turn_index, token.position),
        );
        row.appendChild(el);
        row.appendChild(doc.createTextNode(" "));
      }
      transcript.appendChild(row);
    }
    this.root.appendChild(transcript);
    this.refresh();
  }

  tokenElement(turn: number, position: number): HTMLElement {
    const el = this.root.querySelector<HTMLElement>(
      `.token[data-turn="${turn}"][data-position="${position}"]`,
    );
    if (!el) throw new RangeError(`no token element at ${turn}:${position}`);
    return el;
  }

  private onTokenClick(turn: number, position: number): void {
    const removed = this.workspace.toggle(turn, position);
    this.selected = removed ? tokenKey(turn, position) : null;
    this.refresh();
  }

  /** Apply a category to the most recently marked token. */
  private pick(category: Category): void {
    if (!this.selected) return;
    const [turn, position] = this.selected.split(":").map(Number) as [number, number];
    this.workspace.setCategory(turn, position, category);
    this.refresh();
  }

  /** Repaint token classes/colors and the submit gate from label state. */
  refresh(): void {
    for (const turn of this.workspace.hit.turns) {
      for (const token of turn.tokens) {
        const el = this.tokenElement(turn.turn_index, token.position);
        const removed = this.workspace.isRemoved(turn.turn_index, token.position);
        const category = this.workspace.categoryOf(turn.turn_index, token.position);
        el.classList.toggle("removed", removed);
        el.classList.toggle("uncategorized", removed && category === null);
        el.style.backgroundColor = category ? CATEGORY_COLORS[category] : "";
      }
    }
    this.root
      .querySelectorAll<HTMLButtonElement>(".submit-button")
      .forEach((b) => (b.disabled = !this.workspace.canSubmit()));
  }
}
