/**
 * Event-stream consumption for /projects/{id}/events.
 *
 * The service speaks server-sent events: "id: N" + "data: {json}" frames
 * separated by blank lines, with ": heartbeat" comments while a follow
 * request idles. Follow responses end at the server's timeout, so the
 * subscription loop reconnects with since=lastSeq until stopped.
 */

import type { FetchLike, StreamEvent } from "./api.js";

/** Incremental SSE frame parser; safe to feed arbitrary chunk boundaries. */
export class SseParser {
  private buffer = "";

  push(chunk: string): StreamEvent[] {
    this.buffer += chunk;
    const events: StreamEvent[] = [];
    let boundary = this.buffer.indexOf("\n\n");
    while (boundary >= 0) {
      const frame = this.buffer.slice(0, boundary);
      this.buffer = this.buffer.slice(boundary + 2);
      const data = frame
        .split("\n")
        .filter((line) => line.startsWith("data: "))
        .map((line) => line.slice(6))
        .join("\n");
      if (data) {
        events.push(JSON.parse(data) as StreamEvent);
      }
      boundary = this.buffer.indexOf("\n\n");
    }
    return events;
  }
}

export function parseSseText(text: string): StreamEvent[] {
  return new SseParser().push(text.endsWith("\n\n") ? text : text + "\n\n");
}

export interface EventStreamOptions {
  baseUrl?: string;
  fetchImpl?: FetchLike;
  /** Delay between reconnects after an error, in ms. */
  retryDelayMs?: number;
}

export class EventStream {
  private lastSeq: number;
  private stopped = false;
  private controller: AbortController | null = null;
  private readonly fetchImpl: FetchLike;
  private readonly baseUrl: string;
  private readonly retryDelayMs: number;

  constructor(
    readonly projectId: string,
    readonly onEvent: (event: StreamEvent) => void,
    since = 0,
    options: EventStreamOptions = {},
  ) {
    this.lastSeq = since;
    this.baseUrl = options.baseUrl ?? "";
    this.fetchImpl = options.fetchImpl ?? ((input, init) => fetch(input, init));
    this.retryDelayMs = options.retryDelayMs ?? 1000;
  }

  /** Runs until stop(); resolves once stopped. */
  async run(): Promise<void> {
    while (!this.stopped) {
      this.controller = new AbortController();
      const url =
        `${this.baseUrl}/projects/${this.projectId}/events` +
        `?since=${this.lastSeq}&follow=true`;
      try {
        const response = await this.fetchImpl(url, { signal: this.controller.signal });
        if (!response.ok) {
          throw new Error(`event stream HTTP ${response.status}`);
        }
        await this.consume(response);
      } catch {
        if (this.stopped) {
          return;
        }
        await sleep(this.retryDelayMs);
      }
    }
  }

  private async consume(response: Response): Promise<void> {
    const parser = new SseParser();
    const deliver = (events: StreamEvent[]) => {
      for (const event of events) {
        if (typeof event.seq === "number") {
          this.lastSeq = Math.max(this.lastSeq, event.seq);
        }
        this.onEvent(event);
      }
    };
    const body = response.body;
    if (!body) {
      deliver(parseSseText(await response.text()));
      return;
    }
    const reader = body.getReader();
    const decoder = new TextDecoder();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        return;
      }
      deliver(parser.push(decoder.decode(value, { stream: true })));
      if (this.stopped) {
        await reader.cancel().catch(() => undefined);
        return;
      }
    }
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
