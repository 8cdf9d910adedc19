// Views are rendered to HTML strings (testable without a browser); app.ts
// attaches the event wiring.

import { diffSentences } from "./diff.js";
import type { Draft } from "./state.js";
import { SCORE_BANDS } from "./types.js";
import type {
  GradingPayload,
  ReviewItem,
  VerificationPayload,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function renderEmptyQueue(kindLabel: string): string {
  return `<section class="empty-queue"><h2>No items</h2>
  <p>The ${escapeHtml(kindLabel)} queue is empty. Well done.</p></section>`;
}

export function renderNotice(notice: string | null): string {
  if (!notice) return "";
  return `<div class="notice" role="alert">${escapeHtml(notice)}</div>`;
}

/** Side-by-side verification screen: original with the masked sentences
 * highlighted, masked text, diagnosis and criteria panel. */
export function renderVerificationView(item: ReviewItem): string {
  const payload = item.payload as unknown as VerificationPayload;
  const pieces = diffSentences(payload.original_text, payload.masked_text)
    .map((sentence) =>
      sentence.removed
        ? `<mark class="removed-sentence">${escapeHtml(sentence.text)}</mark>`
        : escapeHtml(sentence.text),
    )
    .join("");
  const criteria = payload.criteria
    .map(
      (c) =>
        `<li data-criterion="${escapeHtml(c.criterion_id)}"${
          payload.masked_criteria.includes(c.criterion_id)
            ? ' class="masked-criterion"'
            : ""
        }>${escapeHtml(c.text)}</li>`,
    )
    .join("");
  return `<section class="verification" data-item="${escapeHtml(item.item_id)}">
  <header><h2>Verify masked note ${escapeHtml(item.item_id)}</h2>
    <p class="diagnosis">Diagnosis: <strong>${escapeHtml(payload.diagnosis)}</strong></p>
  </header>
  <div class="panes">
    <article class="pane original"><h3>Original</h3><pre>${pieces}</pre></article>
    <article class="pane masked"><h3>Masked</h3><pre>${escapeHtml(
      payload.masked_text,
    )}</pre></article>
  </div>
  <aside class="criteria-panel"><h3>Diagnostic criteria</h3><ul>${criteria}</ul></aside>
  <footer class="actions">
    <button data-action="approve" accesskey="a">Approve (a)</button>
    <button data-action="reject" accesskey="r">Reject (r)</button>
    <input data-field="reason" placeholder="reason (optional)" />
    <button data-action="submit">Submit</button>
  </footer>
</section>`;
}

function scoreRow(axis: "correctness" | "completeness", selected?: number): string {
  const buttons = [1, 2, 3, 4, 5]
    .map(
      (score) =>
        `<button data-axis="${axis}" data-score="${score}" title="${escapeHtml(
          SCORE_BANDS[score]!,
        )}"${selected === score ? ' aria-pressed="true" class="selected"' : ""}>${score}</button>`,
    )
    .join("");
  return `<div class="score-row" data-row="${axis}"><label>${axis}</label>${buttons}</div>`;
}

/** Grading screen: note, predicted and ground-truth explanations, the two
 * 5-point selectors. Prior grades appear only in the adjudication view so
 * the second reviewer stays independent. */
export function renderGradingView(item: ReviewItem, draft: Draft): string {
  const payload = item.payload as unknown as GradingPayload;
  const predicted = payload.predicted_explanations
    .map((e) => `<li>${escapeHtml(e)}</li>`)
    .join("");
  const truth = payload.ground_truth_explanations
    .map((e) => `<li>${escapeHtml(e)}</li>`)
    .join("");
  const adjudication =
    item.status === "needs_adjudication"
      ? `<section class="prior-grades"><h3>Prior grades (adjudication)</h3><ul>${item.grades
          .map(
            (g) =>
              `<li>${escapeHtml(g.reviewer_id)}: correctness ${g.correctness}, ` +
              `completeness ${g.completeness}</li>`,
          )
          .join("")}</ul></section>`
      : "";
  const complete = draft.correctness !== undefined && draft.completeness !== undefined;
  return `<section class="grading" data-item="${escapeHtml(item.item_id)}">
  <header><h2>Grade explanations for ${escapeHtml(item.item_id)}</h2></header>
  <article class="note"><h3>Clinical note</h3><pre>${escapeHtml(
    payload.note_text,
  )}</pre></article>
  <div class="panes">
    <article class="pane"><h3>Predicted explanations</h3><ul>${predicted}</ul></article>
    <article class="pane"><h3>Ground-truth explanations</h3><ul>${truth}</ul></article>
  </div>
  ${adjudication}
  <footer class="actions">
    ${scoreRow("correctness", draft.correctness)}
    ${scoreRow("completeness", draft.completeness)}
    <input data-field="comment" placeholder="comment (optional)" />
    <button data-action="submit"${complete ? "" : " disabled"}>Submit</button>
  </footer>
</section>`;
}

export function renderItem(item: ReviewItem, draft: Draft): string {
  return item.kind === "mask_verification"
    ? renderVerificationView(item)
    : renderGradingView(item, draft);
}
