/** DOM rendering for the annotation UI.
 *
 * Pure full re-render: every state change clears the root node and rebuilds
 * it, so the markup always mirrors the session state exactly.  All text is
 * inserted via textContent; nothing from the server is interpreted as HTML.
 */

import { CandidateView, Choice, TaskView } from "./api.js";
import { State } from "./session.js";

export interface Handlers {
  onChoose(criterion: string, choice: Choice): void;
  onSubmit(): void;
  onRetry(): void;
}

interface CriterionCopy {
  label: string;
  tip: string;
}

// Display copy for the judging criteria.  Keys match the criterion names the
// server sends; anything unknown falls back to a capitalised name.
export const CRITERION_COPY: Record<string, CriterionCopy> = {
  adequacy: {
    label: "Adequacy",
    tip: "Is the question well-formed, fluent English on its own?",
  },
  informativeness: {
    label: "Informativeness",
    tip: "Does the answer add new information instead of repeating what the conversation already covered?",
  },
  relevance: {
    label: "Context relevance",
    tip: "Does the question follow naturally from the conversation so far?",
  },
  accuracy: {
    label: "Answer accuracy",
    tip: "Does the answer actually address the question that was asked?",
  },
};

const NO_ANSWER_TEXT = "CANNOTANSWER";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function criterionCopy(name: string): CriterionCopy {
  const copy = CRITERION_COPY[name];
  if (copy) return copy;
  return { label: name.charAt(0).toUpperCase() + name.slice(1), tip: "" };
}

function renderBackground(task: TaskView): HTMLElement {
  const box = el("section", "background");
  box.appendChild(el("h2", "background-title", task.background.title));
  if (task.background.section_title) {
    box.appendChild(el("h3", "background-section", task.background.section_title));
  }
  if (task.background.abstract) {
    box.appendChild(el("p", "background-abstract", task.background.abstract));
  }
  return box;
}

function renderHistory(task: TaskView): HTMLElement {
  const box = el("section", "history");
  box.appendChild(el("h2", undefined, "Conversation so far"));
  if (task.history.length === 0) {
    box.appendChild(el("p", "history-empty", "This is the opening turn."));
    return box;
  }
  const list = el("ol", "history-turns");
  for (const turn of task.history) {
    const item = el("li", "history-turn");
    item.appendChild(el("p", "history-question", turn.q));
    item.appendChild(el("p", "history-answer", turn.a));
    list.appendChild(item);
  }
  box.appendChild(list);
  return box;
}

function renderCandidate(candidate: CandidateView): HTMLElement {
  const card = el("article", "candidate-card");
  card.dataset.label = candidate.label;
  card.appendChild(el("h3", "candidate-title", `Candidate ${candidate.label}`));
  card.appendChild(el("p", "candidate-question", candidate.question));
  if (candidate.answer === NO_ANSWER_TEXT) {
    card.appendChild(
      el("p", "candidate-answer no-answer", "(no answer found in the document)"),
    );
  } else {
    card.appendChild(el("p", "candidate-answer", candidate.answer));
  }
  return card;
}

function renderCriterionRow(
  criterion: string,
  chosen: Choice | undefined,
  handlers: Handlers,
): HTMLElement {
  const copy = criterionCopy(criterion);
  const row = el("fieldset", "criterion-row");
  row.dataset.criterion = criterion;
  const legend = el("legend", "criterion-label", copy.label);
  if (copy.tip) legend.title = copy.tip;
  row.appendChild(legend);
  for (const choice of ["A", "B"] as Choice[]) {
    const wrap = el("label", "choice");
    const input = el("input");
    input.type = "radio";
    input.name = `crit-${criterion}`;
    input.value = choice;
    input.checked = chosen === choice;
    input.addEventListener("change", () => handlers.onChoose(criterion, choice));
    wrap.appendChild(input);
    wrap.appendChild(el("span", undefined, `Candidate ${choice}`));
    row.appendChild(wrap);
  }
  return row;
}

function renderTask(
  task: TaskView,
  remaining: number,
  choices: Partial<Record<string, Choice>>,
  notice: string | null,
  handlers: Handlers,
): HTMLElement {
  const page = el("div", "task-page");
  if (notice) {
    page.appendChild(el("div", "notice", notice));
  }
  page.appendChild(
    el("p", "remaining", `${remaining} task${remaining === 1 ? "" : "s"} remaining`),
  );
  page.appendChild(renderBackground(task));
  page.appendChild(renderHistory(task));

  const pair = el("section", "candidates");
  for (const candidate of task.candidates) {
    pair.appendChild(renderCandidate(candidate));
  }
  page.appendChild(pair);

  const form = el("section", "criteria");
  form.appendChild(el("h2", undefined, "Which candidate turn is better?"));
  for (const criterion of task.criteria) {
    form.appendChild(renderCriterionRow(criterion, choices[criterion], handlers));
  }
  const submit = el("button", "submit-vote", "Submit vote");
  submit.id = "submit-vote";
  submit.disabled = task.criteria.some((c) => choices[c] === undefined);
  submit.addEventListener("click", () => handlers.onSubmit());
  form.appendChild(submit);
  page.appendChild(form);
  return page;
}

function renderDone(completed: number): HTMLElement {
  const page = el("div", "done-screen");
  page.appendChild(el("h2", undefined, "All done"));
  page.appendChild(
    el(
      "p",
      "done-summary",
      `You reviewed ${completed} task${completed === 1 ? "" : "s"}. Thank you!`,
    ),
  );
  return page;
}

function renderError(message: string, canRetry: boolean, handlers: Handlers): HTMLElement {
  const page = el("div", "error-screen");
  page.appendChild(el("h2", undefined, "Something went wrong"));
  page.appendChild(el("p", "error-message", message));
  if (canRetry) {
    const retry = el("button", "retry-button", "Try again");
    retry.addEventListener("click", () => handlers.onRetry());
    page.appendChild(retry);
  } else {
    page.appendChild(el("p", undefined, "Reload the page to start over."));
  }
  return page;
}

export function render(root: HTMLElement, state: State, handlers: Handlers): void {
  root.textContent = "";
  switch (state.kind) {
    case "loading":
      root.appendChild(el("p", "loading", "Loading…"));
      break;
    case "task":
      root.appendChild(
        renderTask(state.task, state.remaining, state.choices, state.notice, handlers),
      );
      break;
    case "done":
      root.appendChild(renderDone(state.completed));
      break;
    case "error":
      root.appendChild(renderError(state.message, state.canRetry, handlers));
      break;
  }
}
