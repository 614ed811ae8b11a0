// Pure DOM builders for conversation turns. No state, no network.

import type { QueryResponse, ReferencePayload, SentencePayload } from "./types";

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

export function renderUserTurn(text: string): HTMLElement {
  const bubble = el("div", "bubble user");
  bubble.append(el("p", "bubble-text", text));
  return bubble;
}

interface CollapsedReference {
  url: string;
  title: string;
  snippets: string[];
}

/** One entry per document URL; several hits on the same page merge their snippets. */
export function collapseReferences(references: ReferencePayload[]): CollapsedReference[] {
  const byUrl = new Map<string, CollapsedReference>();
  for (const reference of references) {
    const existing = byUrl.get(reference.url);
    if (existing) {
      if (!existing.snippets.includes(reference.snippet)) {
        existing.snippets.push(reference.snippet);
      }
    } else {
      byUrl.set(reference.url, {
        url: reference.url,
        title: reference.title,
        snippets: [reference.snippet],
      });
    }
  }
  return [...byUrl.values()];
}

function renderSentence(
  sentence: SentencePayload,
  citationNumbers: Map<string, number>,
): HTMLElement {
  const span = el("span", "sentence");
  span.append(document.createTextNode(sentence.text));
  for (const reference of collapseReferences(sentence.references)) {
    let number = citationNumbers.get(reference.url);
    if (number === undefined) {
      number = citationNumbers.size + 1;
      citationNumbers.set(reference.url, number);
    }
    const sup = el("sup", "ref-marker");
    const link = el("a", "ref-link", `[${number}]`);
    link.href = reference.url;
    link.target = "_blank";
    link.rel = "noopener noreferrer";
    // hover shows the supporting source sentence(s)
    link.title = `${reference.title}\n${reference.snippets.join("\n")}`;
    sup.append(link);
    span.append(sup);
  }
  span.append(document.createTextNode(" "));
  return span;
}

export function renderSystemTurn(response: QueryResponse): HTMLElement {
  const bubble = el("div", "bubble system");
  if (!response.grounded) {
    bubble.append(el("span", "badge unverified", "unverified"));
  }

  const answer = el("p", "answer");
  const citationNumbers = new Map<string, number>();
  for (const sentence of response.answer) {
    answer.append(renderSentence(sentence, citationNumbers));
  }
  bubble.append(answer);

  if (response.exercises.length > 0) {
    const panel = el("aside", "panel exercises");
    panel.append(el("h3", undefined, "Exercises"));
    const list = el("ul");
    for (const exercise of response.exercises) {
      const item = el("li");
      const link = el("a", "exercise-link", exercise.name);
      link.href = exercise.video_url;
      link.target = "_blank";
      link.rel = "noopener noreferrer";
      item.append(link);
      if (exercise.instructions) {
        item.append(el("p", "exercise-instructions", exercise.instructions));
      }
      list.append(item);
    }
    panel.append(list);
    bubble.append(panel);
  }

  if (response.medications.length > 0) {
    const panel = el("aside", "panel medications");
    panel.append(el("h3", undefined, "Over-the-counter medication"));
    const list = el("ul");
    for (const medication of response.medications) {
      const item = el("li");
      if (medication.url) {
        const link = el("a", "medication-link", medication.name);
        link.href = medication.url;
        link.target = "_blank";
        link.rel = "noopener noreferrer";
        item.append(link);
      } else {
        item.append(el("strong", "medication-name", medication.name));
      }
      item.append(document.createTextNode(`: ${medication.description}`));
      list.append(item);
    }
    panel.append(list);
    bubble.append(panel);
  }

  return bubble;
}

export function renderErrorTurn(message: string, onRetry: () => void): HTMLElement {
  const bubble = el("div", "bubble error");
  bubble.append(el("p", "bubble-text", message));
  const retry = el("button", "retry-button", "Retry");
  retry.type = "button";
  retry.addEventListener("click", onRetry);
  bubble.append(retry);
  return bubble;
}

export function renderPendingIndicator(): HTMLElement {
  const bubble = el("div", "bubble system pending");
  bubble.append(el("p", "bubble-text", "Thinking…"));
  return bubble;
}
