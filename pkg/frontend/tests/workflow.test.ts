// Grading workflow against a live review service: the UI's own API and
// session layers drive a real server spawned for the test.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ReviewApi } from "../src/api.js";
import { ReviewSession } from "../src/state.js";

const PORT = 8400 + Math.floor(Math.random() * 1000);
const BASE = `http://127.0.0.1:${PORT}`;

let service: ChildProcess;

async function waitForHealth(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt += 1) {
    try {
      const response = await fetch(`${BASE}/api/health`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error("review service did not come up");
}

beforeAll(async () => {
  const logDir = mkdtempSync(join(tmpdir(), "review-ui-"));
  service = spawn(
    "python3",
    ["-m", "dxbench.cli", "serve", "--port", String(PORT), "--event-log",
     join(logDir, "events.ndjson")],
    { stdio: "ignore" },
  );
  await waitForHealth();
}, 30_000);

afterAll(() => {
  service.kill("SIGKILL");
});

function api(reviewerId: string): ReviewApi {
  return new ReviewApi({ baseUrl: BASE, reviewerId });
}

function gradingItems(ids: string[]) {
  return ids.map((id) => ({
    item_id: id,
    kind: "explanation_grading",
    payload: {
      note_text: `note body for ${id}`,
      predicted_explanations: ["pred"],
      ground_truth_explanations: ["truth"],
    },
  }));
}

describe("grading workflow against a live service", () => {
  it("agreement closes, disagreement escalates, the third grade is final", async () => {
    await api("admin").enqueue(gradingItems(["wf-agree", "wf-dispute"]));

    // reviewer A grades both items through the session (queue auto-advance)
    const sessionA = new ReviewSession(api("dr-a"), "explanation_grading");
    await sessionA.refresh();
    expect(sessionA.current?.item_id).toBe("wf-agree");
    sessionA.handleKey("4");
    sessionA.handleKey("4");
    expect(await sessionA.submit()).toBe("pending");
    expect(sessionA.current?.item_id).toBe("wf-dispute");
    sessionA.handleKey("4");
    sessionA.handleKey("3");
    expect(await sessionA.submit()).toBe("pending");

    // reviewer B agrees on one item and disagrees on the other
    const sessionB = new ReviewSession(api("dr-b"), "explanation_grading");
    await sessionB.refresh();
    sessionB.handleKey("4");
    sessionB.handleKey("4");
    expect(await sessionB.submit()).toBe("closed");
    sessionB.handleKey("2");
    sessionB.handleKey("3");
    expect(await sessionB.submit()).toBe("escalated");

    const agreed = await api("dr-a").getItem("wf-agree");
    expect(agreed.status).toBe("closed");
    expect(agreed.final_scores).toEqual({ correctness: 4, completeness: 4 });

    // the escalated item shows up in the adjudication queue with prior grades
    const adjudicator = new ReviewSession(api("dr-c"), "explanation_grading",
                                          "needs_adjudication");
    await adjudicator.refresh();
    expect(adjudicator.current?.item_id).toBe("wf-dispute");
    expect(adjudicator.current?.grades).toHaveLength(2);
    adjudicator.handleKey("4");
    adjudicator.handleKey("3");
    expect(await adjudicator.submit()).toBe("closed");

    const adjudicated = await api("dr-a").getItem("wf-dispute");
    expect(adjudicated.status).toBe("closed");
    expect(adjudicated.final_scores).toEqual({ correctness: 4, completeness: 3 });

    // exported histogram sums to the number of closed items
    const exported = await api("dr-a").exportGrades();
    expect(exported.closed_items).toBe(2);
    for (const axis of ["correctness", "completeness"] as const) {
      const total = Object.values(exported.histogram[axis]).reduce((a, b) => a + b, 0);
      expect(total).toBe(exported.closed_items);
    }
  }, 30_000);

  it("a verification race advances the losing session with a notice", async () => {
    await api("admin").enqueue([
      {
        item_id: "wf-race",
        kind: "mask_verification",
        payload: {
          masked_note_id: "wf-race",
          base_note_id: "n0",
          original_text: "A. B.",
          masked_text: "A.",
          diagnosis: "Disease 00",
          criteria: [],
          masked_criteria: [],
          uncertainty_explanation: [],
        },
      },
    ]);
    const first = new ReviewSession(api("dr-a"), "mask_verification");
    const second = new ReviewSession(api("dr-b"), "mask_verification");
    await first.refresh();
    await second.refresh();
    first.setDecision("approve");
    second.setDecision("reject");
    expect(await first.submit()).toBe("closed");
    expect(await second.submit()).toBe("conflict");
    expect(second.notice).toContain("wf-race");
    expect(second.current).toBeNull(); // queue advanced past the taken item
  }, 30_000);

  it("a refreshed session sees submitted state (server is source of truth)", async () => {
    await api("admin").enqueue(gradingItems(["wf-refresh"]));
    const sessionA = new ReviewSession(api("dr-a"), "explanation_grading");
    await sessionA.refresh();
    sessionA.handleKey("5");
    sessionA.handleKey("5");
    await sessionA.submit();
    // simulate a browser refresh: a brand-new session refetches from the server
    const reloaded = new ReviewSession(api("dr-a"), "explanation_grading");
    await reloaded.refresh();
    const item = await api("dr-a").getItem("wf-refresh");
    expect(item.grades).toHaveLength(1);
    expect(item.grades[0]!.reviewer_id).toBe("dr-a");
  }, 30_000);
});
