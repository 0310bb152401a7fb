/** Shared types mirroring the annotation service's /v1 JSON shapes. */

/** The five removal categories, in their canonical display order. */
export const CATEGORIES = [
  "AcknowledgmentConfirmation",
  "RepetitionParaphrase",
  "ThinkAloud",
  "IncompleteSentences",
  "Others",
] as const;

export type Category = (typeof CATEGORIES)[number];

/** Highlight colors per category, matching the training example's palette. */
export const CATEGORY_COLORS: Record<Category, string> = {
  AcknowledgmentConfirmation: "#C9DAF8",
  RepetitionParaphrase: "#F4CCCC",
  ThinkAloud: "#FCE5CD",
  IncompleteSentences: "#D9EAD3",
  Others: "#D9D2E9",
};

export interface HitToken {
  position: number;
  text: string;
}

export interface HitTurn {
  turn_index: number;
  speaker: string;
  tokens: HitToken[];
}

/** One HIT as served by GET /v1/hits/next. */
export interface HitPayload {
  hit_id: string;
  conv_id: string;
  chunk_index: number;
  turns: HitTurn[];
}

export interface Assignment {
  hit: HitPayload | null;
  lease_until?: number;
}

/** One removal row in a submission payload. */
export interface Removal {
  turn: number;
  position: number;
  category: Category;
}

export interface SubmitOutcome {
  accepted?: boolean;
  f1?: number;
  qualified?: boolean;
  excluded?: boolean;
}

export interface WorkerInfo {
  worker_id: string;
  qualified: boolean;
  excluded: boolean;
  mean_f1: number;
  hit_count: number;
  f1_history: { checkpoint: string; f1: number }[];
}

export interface LabelExport {
  labels: {
    conv_id: string;
    source: string;
    removals: Removal[];
  }[];
  unlabeled_turns: { conv_id: string; turn: number }[];
}
