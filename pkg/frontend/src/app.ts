// DOM wiring: render loop, click delegation, and keyboard shortcuts.

import type { ReviewSession } from "./state.js";
import { renderEmptyQueue, renderItem, renderNotice } from "./render.js";

export function renderInto(root: HTMLElement, session: ReviewSession): void {
  const item = session.current;
  const body =
    item === null
      ? renderEmptyQueue(session.kind.replaceAll("_", " "))
      : renderItem(item, session.draft);
  root.innerHTML = renderNotice(session.notice) + body;
}

export function attach(root: HTMLElement, session: ReviewSession): void {
  const rerender = () => renderInto(root, session);

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const action = target.dataset["action"];
    const axis = target.dataset["axis"];
    if (axis === "correctness" || axis === "completeness") {
      session.setScore(axis, Number(target.dataset["score"]));
      rerender();
      return;
    }
    if (action === "approve" || action === "reject") {
      session.setDecision(action);
      const reason = root.querySelector<HTMLInputElement>('input[data-field="reason"]');
      if (reason?.value) session.draft.reason = reason.value;
      rerender();
      return;
    }
    if (action === "submit") {
      const comment = root.querySelector<HTMLInputElement>('input[data-field="comment"]');
      if (comment?.value) session.draft.comment = comment.value;
      void session.submit().then(rerender);
    }
  });

  document.addEventListener("keydown", (event) => {
    if ((event.target as HTMLElement | null)?.tagName === "INPUT") return;
    if (event.key === "Enter") {
      void session.submit().then(rerender);
      return;
    }
    if (session.handleKey(event.key)) {
      event.preventDefault();
      rerender();
    }
  });

  void session.refresh().then(rerender);
}
