import { describe, expect, it, vi } from "vitest";

import { ReviewApi } from "../src/api.js";
import { ReviewSession } from "../src/state.js";
import type { ReviewItem } from "../src/types.js";

function item(id: string, kind: ReviewItem["kind"], status: ReviewItem["status"] = "open"): ReviewItem {
  return {
    item_id: id,
    kind,
    status,
    payload: {},
    assigned_reviewers: [],
    decision: null,
    grades: [],
    final_scores: null,
  };
}

function sessionWith(
  items: ReviewItem[],
  kind: ReviewItem["kind"],
  responses: Array<{ status: number; body: unknown }>,
) {
  const queue = [...responses];
  const fetchFn = vi.fn(async (input: string) => {
    if (input.includes("/api/items?")) {
      return new Response(
        JSON.stringify({ items, total: items.length, page: 1, page_size: 100 }),
        { status: 200 },
      );
    }
    const next = queue.shift() ?? { status: 500, body: { detail: "unexpected" } };
    return new Response(JSON.stringify(next.body), { status: next.status });
  });
  const api = new ReviewApi({ baseUrl: "http://svc", reviewerId: "dr-a" }, fetchFn);
  return { session: new ReviewSession(api, kind), fetchFn };
}

describe("draft gating", () => {
  it("grading requires both axes before submit", async () => {
    const { session } = sessionWith([item("g0", "explanation_grading")],
                                    "explanation_grading", []);
    await session.refresh();
    expect(session.draftComplete()).toBe(false);
    session.setScore("correctness", 4);
    expect(session.draftComplete()).toBe(false);
    session.setScore("completeness", 5);
    expect(session.draftComplete()).toBe(true);
  });

  it("verification requires a decision", async () => {
    const { session } = sessionWith([item("m0", "mask_verification")],
                                    "mask_verification", []);
    await session.refresh();
    expect(session.draftComplete()).toBe(false);
    session.setDecision("approve");
    expect(session.draftComplete()).toBe(true);
  });

  it("submit is a no-op while the draft is incomplete", async () => {
    const { session, fetchFn } = sessionWith([item("g0", "explanation_grading")],
                                             "explanation_grading", []);
    await session.refresh();
    expect(await session.submit()).toBeNull();
    expect(fetchFn.mock.calls.filter(([u]) => u.includes("/grade"))).toHaveLength(0);
  });
});

describe("keyboard shortcuts", () => {
  it("digits fill correctness then completeness", async () => {
    const { session } = sessionWith([item("g0", "explanation_grading")],
                                    "explanation_grading", []);
    await session.refresh();
    expect(session.handleKey("4")).toBe(true);
    expect(session.draft.correctness).toBe(4);
    expect(session.handleKey("5")).toBe(true);
    expect(session.draft.completeness).toBe(5);
    expect(session.handleKey("x")).toBe(true);
    expect(session.draft).toEqual({});
    expect(session.handleKey("9")).toBe(false);
  });

  it("a/r decide verification items", async () => {
    const { session } = sessionWith([item("m0", "mask_verification")],
                                    "mask_verification", []);
    await session.refresh();
    expect(session.handleKey("r")).toBe(true);
    expect(session.draft.decision).toBe("reject");
    expect(session.handleKey("1")).toBe(false);
  });
});

describe("auto-advance and conflicts", () => {
  it("advances the queue after a successful submit", async () => {
    const { session } = sessionWith(
      [item("g0", "explanation_grading"), item("g1", "explanation_grading")],
      "explanation_grading",
      [{ status: 200, body: { ...item("g0", "explanation_grading", "open") } }],
    );
    await session.refresh();
    session.setScore("correctness", 3);
    session.setScore("completeness", 3);
    const outcome = await session.submit();
    expect(outcome).toBe("pending");
    expect(session.current?.item_id).toBe("g1");
    expect(session.draft).toEqual({});
  });

  it("reports escalation and closure outcomes", async () => {
    const { session } = sessionWith(
      [item("g0", "explanation_grading"), item("g1", "explanation_grading")],
      "explanation_grading",
      [
        { status: 200, body: item("g0", "explanation_grading", "needs_adjudication") },
        { status: 200, body: item("g1", "explanation_grading", "closed") },
      ],
    );
    await session.refresh();
    session.setScore("correctness", 2);
    session.setScore("completeness", 2);
    expect(await session.submit()).toBe("escalated");
    session.setScore("correctness", 2);
    session.setScore("completeness", 2);
    expect(await session.submit()).toBe("closed");
  });

  it("a 409 marks the item taken and advances", async () => {
    const { session } = sessionWith(
      [item("m0", "mask_verification"), item("m1", "mask_verification")],
      "mask_verification",
      [{ status: 409, body: { detail: "already decided" } }],
    );
    await session.refresh();
    session.setDecision("approve");
    const outcome = await session.submit();
    expect(outcome).toBe("conflict");
    expect(session.notice).toContain("m0");
    expect(session.current?.item_id).toBe("m1");
  });
});
