// Conversation wiring: one pending request at a time, append-only turns.

import { postQuery } from "./api";
import {
  renderErrorTurn,
  renderPendingIndicator,
  renderSystemTurn,
  renderUserTurn,
} from "./render";
import type { QueryResponse } from "./types";

export type QueryFn = (query: string) => Promise<QueryResponse>;

export interface ChatElements {
  conversation: HTMLElement;
  form: HTMLFormElement;
  input: HTMLInputElement;
  send: HTMLButtonElement;
  banner: HTMLElement;
}

export class ChatController {
  private pending = false;

  constructor(
    private readonly elements: ChatElements,
    private readonly query: QueryFn = postQuery,
  ) {
    elements.form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submit(elements.input.value);
    });
  }

  get isPending(): boolean {
    return this.pending;
  }

  async submit(text: string): Promise<void> {
    const trimmed = text.trim();
    if (this.pending || !trimmed) {
      return;
    }
    this.setPending(true);
    this.appendTurn(renderUserTurn(trimmed));
    const indicator = renderPendingIndicator();
    this.appendTurn(indicator);
    try {
      const response = await this.query(trimmed);
      indicator.remove();
      if (response.disclaimer) {
        this.elements.banner.textContent = response.disclaimer;
      }
      this.appendTurn(renderSystemTurn(response));
      this.elements.input.value = "";
    } catch (error) {
      indicator.remove();
      const message =
        error instanceof Error
          ? `Something went wrong (${error.message}).`
          : "Something went wrong.";
      this.appendTurn(renderErrorTurn(message, () => void this.submit(trimmed)));
    } finally {
      this.setPending(false);
      this.elements.input.focus();
    }
  }

  private setPending(pending: boolean): void {
    this.pending = pending;
    this.elements.input.disabled = pending;
    this.elements.send.disabled = pending;
  }

  private appendTurn(turn: HTMLElement): void {
    this.elements.conversation.append(turn);
    this.elements.conversation.scrollTop = this.elements.conversation.scrollHeight;
  }
}

export function initChat(root: Document, query: QueryFn = postQuery): ChatController {
  const conversation = root.getElementById("conversation");
  const form = root.getElementById("chat-form");
  const input = root.getElementById("chat-input");
  const send = root.getElementById("chat-send");
  const banner = root.getElementById("disclaimer-banner");
  if (!conversation || !form || !input || !send || !banner) {
    throw new Error("chat page is missing a required element");
  }
  return new ChatController(
    {
      conversation,
      form: form as HTMLFormElement,
      input: input as HTMLInputElement,
      send: send as HTMLButtonElement,
      banner,
    },
    query,
  );
}

// auto-wire when loaded in a real page; tests call initChat themselves
if (typeof document !== "undefined" && document.getElementById("chat-form")) {
  initChat(document);
}
