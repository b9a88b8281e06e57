/**
 * Chat pane: free-text orchestration requests routed by the server.
 *
 * Each send carries the utterance plus the current canvas selection; the
 * reply's task kind is shown as a badge on the logged entry. A 502 from the
 * backend keeps the entry with a retry button that re-sends the identical
 * payload.
 */

import { ApiError } from "./api.js";
import type { ChatResponse } from "./api.js";
import type { ViewState } from "./state.js";

export interface ChatActions {
  send(utterance: string, selection: string[]): Promise<ChatResponse>;
}

export class ChatPane {
  readonly log: HTMLElement;
  readonly input: HTMLTextAreaElement;
  readonly sendButton: HTMLButtonElement;

  constructor(
    readonly container: HTMLElement,
    readonly state: ViewState,
    readonly actions: ChatActions,
  ) {
    container.classList.add("chat");
    this.log = document.createElement("div");
    this.log.className = "chat-log";
    const form = document.createElement("div");
    form.className = "chat-form";
    this.input = document.createElement("textarea");
    this.input.className = "chat-input";
    this.input.placeholder = "Describe a story, an edit, media to generate, or an export";
    this.sendButton = document.createElement("button");
    this.sendButton.className = "chat-send";
    this.sendButton.textContent = "Send";
    this.sendButton.disabled = true;
    form.appendChild(this.input);
    form.appendChild(this.sendButton);
    container.appendChild(this.log);
    container.appendChild(form);

    this.input.addEventListener("input", () => this.syncDisabled());
    this.input.addEventListener("keydown", (e) => {
      if (e.key === "Enter" && !e.shiftKey) {
        e.preventDefault();
        void this.submit();
      }
    });
    this.sendButton.addEventListener("click", () => void this.submit());
  }

  syncDisabled(): void {
    this.sendButton.disabled = this.input.value.trim() === "";
  }

  async submit(): Promise<void> {
    const utterance = this.input.value.trim();
    if (!utterance) {
      return;
    }
    this.input.value = "";
    this.syncDisabled();
    await this.dispatch(utterance, [...this.state.selection].sort());
  }

  private async dispatch(utterance: string, selection: string[]): Promise<void> {
    const entry = document.createElement("div");
    entry.className = "chat-entry";
    const question = document.createElement("div");
    question.className = "chat-utterance";
    question.textContent = selection.length
      ? `${utterance}  [selection: ${selection.join(", ")}]`
      : utterance;
    entry.appendChild(question);
    const status = document.createElement("div");
    status.className = "chat-status";
    status.textContent = "…";
    entry.appendChild(status);
    this.log.appendChild(entry);

    try {
      const reply = await this.actions.send(utterance, selection);
      status.textContent = "";
      const kind = document.createElement("span");
      kind.className = `task-kind task-${reply.task_kind.toLowerCase()}`;
      kind.textContent = reply.task_kind;
      kind.title = reply.routing_reason;
      status.appendChild(kind);
      const note = document.createElement("span");
      note.className = "chat-note";
      note.textContent = ` ${this.describe(reply)}`;
      status.appendChild(note);
    } catch (error) {
      status.textContent = "";
      const notice = document.createElement("span");
      notice.className = "chat-error";
      notice.textContent =
        error instanceof ApiError ? `${error.errorType}: ${error.message}` : String(error);
      status.appendChild(notice);
      if (error instanceof ApiError && error.status === 502) {
        const retry = document.createElement("button");
        retry.className = "chat-retry";
        retry.textContent = "Retry";
        retry.addEventListener("click", () => {
          entry.remove();
          void this.dispatch(utterance, selection);
        });
        status.appendChild(retry);
      }
    }
  }

  private describe(reply: ChatResponse): string {
    if (reply.edited) {
      return `edited ${reply.edited.join(", ")}`;
    }
    if (reply.added) {
      return `added node ${reply.added}`;
    }
    if (reply.job_ids) {
      return `${reply.job_ids.length} media job(s) queued`;
    }
    if (reply.files) {
      return `exported ${reply.files.length} file(s)`;
    }
    if (reply.graph) {
      return `${reply.graph.nodes.length} nodes`;
    }
    return "";
  }
}
