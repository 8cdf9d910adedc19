// DTOs mirroring the review-service JSON bodies.

export type ItemKind = "mask_verification" | "explanation_grading";
export type ItemStatus = "open" | "needs_adjudication" | "closed";
export type Decision = "approve" | "reject";

export interface CriterionRef {
  criterion_id: string;
  text: string;
}

export interface VerificationPayload {
  masked_note_id: string;
  base_note_id: string;
  original_text: string;
  masked_text: string;
  diagnosis: string;
  criteria: CriterionRef[];
  masked_criteria: string[];
  uncertainty_explanation: string[];
}

export interface GradingPayload {
  note_text: string;
  predicted_explanations: string[];
  ground_truth_explanations: string[];
}

export interface GradeRecord {
  reviewer_id: string;
  correctness: number;
  completeness: number;
  comment?: string | null;
  timestamp: string;
}

export interface ReviewItem {
  item_id: string;
  kind: ItemKind;
  status: ItemStatus;
  payload: Record<string, unknown>;
  assigned_reviewers: string[];
  decision: Record<string, unknown> | null;
  grades: GradeRecord[];
  final_scores: { correctness: number; completeness: number } | null;
}

export interface ItemPage {
  items: ReviewItem[];
  total: number;
  page: number;
  page_size: number;
}

export interface GradeExport {
  rows: Array<{ item_id: string; correctness: number; completeness: number }>;
  histogram: Record<"correctness" | "completeness", Record<string, number>>;
  closed_items: number;
}

export interface SessionConfig {
  baseUrl: string;
  reviewerId?: string;
  token?: string;
}

/** The 5-point band definitions shown as selector tooltips. */
export const SCORE_BANDS: Record<number, string> = {
  1: "under 20% of ground-truth explanations covered",
  2: "20% to under 40% covered",
  3: "40% to under 60% covered",
  4: "60% to 80% covered",
  5: "over 80% covered",
};
