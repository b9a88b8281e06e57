/**
 * Shared test scaffolding: the blackout fixture graph and a recording fake
 * fetch with a tiny route table, so panes run against canned server replies
 * without a network.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { FetchLike, GraphDoc, GraphPayload } from "../src/api.js";

const here = dirname(fileURLToPath(import.meta.url));

/** The seven-node blackout story used throughout the repo's tests. */
export function blackoutGraph(): GraphDoc {
  const raw = readFileSync(join(here, "..", "..", "tests", "data", "lumina_blackout.json"), "utf8");
  return JSON.parse(raw) as GraphDoc;
}

export function blackoutPayload(version = 1): GraphPayload {
  return { version, graph: blackoutGraph(), assets: [] };
}

export interface RecordedCall {
  method: string;
  url: string;
  body: unknown;
}

export interface FakeRoute {
  method: string;
  pattern: RegExp;
  /** Return [status, body]; body is JSON unless it is a string. */
  reply: (body: unknown, url: string) => [number, unknown] | Promise<[number, unknown]>;
}

/** Structural stand-in for Response; only what the client touches. */
export function fakeResponse(status: number, payload: unknown): Response {
  const text = typeof payload === "string" ? payload : JSON.stringify(payload);
  return {
    ok: status >= 200 && status < 300,
    status,
    body: null,
    json: () => Promise.resolve(JSON.parse(text)),
    text: () => Promise.resolve(text),
  } as unknown as Response;
}

export class FakeServer {
  calls: RecordedCall[] = [];
  private routes: FakeRoute[] = [];

  on(method: string, pattern: RegExp, reply: FakeRoute["reply"]): this {
    this.routes.push({ method, pattern, reply });
    return this;
  }

  /** Calls whose URL matches; convenience for assertions. */
  sent(method: string, urlPart: string): RecordedCall[] {
    return this.calls.filter((c) => c.method === method && c.url.includes(urlPart));
  }

  fetch: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    this.calls.push({ method, url, body });
    for (const route of this.routes) {
      if (route.method === method && route.pattern.test(url)) {
        const [status, payload] = await route.reply(body, url);
        return fakeResponse(status, payload);
      }
    }
    throw new Error(`no fake route for ${method} ${url}`);
  };
}

/** Flush pending work so awaited UI handlers settle; each round drains the
 * whole microtask queue before the next timer fires. */
export async function settle(rounds = 2): Promise<void> {
  for (let i = 0; i < rounds; i += 1) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}
