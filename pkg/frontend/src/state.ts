// Queue/session state machine. All transitions are pure of the DOM so the
// workflow is testable headlessly; the server remains the source of truth
// (a browser refresh simply refetches the queue).

import { ConflictError, ReviewApi } from "./api.js";
import type { Decision, ItemKind, ItemStatus, ReviewItem } from "./types.js";

export interface Draft {
  decision?: Decision;
  reason?: string;
  correctness?: number;
  completeness?: number;
  comment?: string;
}

export type SubmitOutcome = "closed" | "escalated" | "pending" | "conflict";

export class ReviewSession {
  queue: ReviewItem[] = [];
  draft: Draft = {};
  notice: string | null = null;
  lastOutcome: SubmitOutcome | null = null;

  constructor(
    private readonly api: ReviewApi,
    public kind: ItemKind,
    public status: ItemStatus = "open",
  ) {}

  get current(): ReviewItem | null {
    return this.queue.length > 0 ? this.queue[0]! : null;
  }

  async refresh(): Promise<void> {
    const page = await this.api.listItems({
      kind: this.kind,
      status: this.status,
      pageSize: 100,
    });
    this.queue = page.items;
    this.draft = {};
  }

  setQueue(kind: ItemKind, status: ItemStatus): Promise<void> {
    this.kind = kind;
    this.status = status;
    return this.refresh();
  }

  /** A draft can only be submitted when complete: both axes for grading,
   * a decision for verification. */
  draftComplete(): boolean {
    if (this.current === null) return false;
    if (this.kind === "mask_verification") {
      return this.draft.decision !== undefined;
    }
    return this.draft.correctness !== undefined && this.draft.completeness !== undefined;
  }

  setDecision(decision: Decision): void {
    this.draft.decision = decision;
  }

  setScore(axis: "correctness" | "completeness", value: number): void {
    if (!Number.isInteger(value) || value < 1 || value > 5) return;
    this.draft[axis] = value;
  }

  /** Keyboard shortcuts: digits 1-5 fill correctness first, then
   * completeness; "a"/"r" decide verification items; returns whether the
   * key was consumed. */
  handleKey(key: string): boolean {
    if (this.kind === "mask_verification") {
      if (key === "a") {
        this.setDecision("approve");
        return true;
      }
      if (key === "r") {
        this.setDecision("reject");
        return true;
      }
      return false;
    }
    if (/^[1-5]$/.test(key)) {
      const value = Number(key);
      if (this.draft.correctness === undefined) {
        this.setScore("correctness", value);
      } else {
        this.setScore("completeness", value);
      }
      return true;
    }
    if (key === "x") {
      this.draft = {};
      return true;
    }
    return false;
  }

  /** Submit the draft for the current item and auto-advance the queue.
   * A 409 from the service means another reviewer got there first: the
   * item is marked taken and the queue advances. */
  async submit(): Promise<SubmitOutcome | null> {
    const item = this.current;
    if (item === null || !this.draftComplete()) return null;
    try {
      let updated: ReviewItem;
      if (this.kind === "mask_verification") {
        updated = await this.api.submitVerification(item.item_id, {
          decision: this.draft.decision!,
          ...(this.draft.reason ? { reason: this.draft.reason } : {}),
        });
      } else {
        updated = await this.api.submitGrade(item.item_id, {
          correctness: this.draft.correctness!,
          completeness: this.draft.completeness!,
          ...(this.draft.comment ? { comment: this.draft.comment } : {}),
        });
      }
      this.lastOutcome =
        updated.status === "closed"
          ? "closed"
          : updated.status === "needs_adjudication"
            ? "escalated"
            : "pending";
      this.notice = null;
    } catch (error) {
      if (error instanceof ConflictError) {
        this.lastOutcome = "conflict";
        this.notice = `item ${item.item_id} was taken by another reviewer; skipped`;
      } else {
        throw error;
      }
    }
    this.advance();
    return this.lastOutcome;
  }

  advance(): void {
    this.queue.shift();
    this.draft = {};
  }
}
