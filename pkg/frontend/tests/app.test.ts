import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import type { GraphPayload } from "../src/api.js";
import { App } from "../src/main.js";
import { blackoutPayload, FakeServer, settle } from "./helpers.js";

function pendingFollow(): Promise<[number, unknown]> {
  return new Promise<[number, unknown]>(() => undefined);
}

/** A fake service owning one project whose graph chat edits can mutate. */
function makeServer(): { server: FakeServer; current: () => GraphPayload; bump: (p: GraphPayload) => void } {
  let payload = blackoutPayload(1);
  const server = new FakeServer()
    .on("GET", /\/projects$/, () => [200, [{ project_id: "p1", name: "demo", version: 1 }]])
    .on("GET", /\/graph$/, () => [200, payload])
    .on("GET", /follow=false/, () => [200, ""])
    .on("GET", /follow=true/, () => pendingFollow());
  return {
    server,
    current: () => payload,
    bump: (p) => {
      payload = p;
    },
  };
}

function makeApp(server: FakeServer): App {
  document.body.innerHTML = "";
  const root = document.createElement("div");
  document.body.appendChild(root);
  return new App(root, new ApiClient("", server.fetch));
}

describe("App", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("opens a project and renders the server graph", async () => {
    const { server } = makeServer();
    const app = makeApp(server);
    await app.openProject("p1");
    expect(document.querySelectorAll(".node-card")).toHaveLength(7);
    expect(app.state.version).toBe(1);
  });

  it("round-trips a chat edit with selection and re-renders server truth", async () => {
    const { server, current, bump } = makeServer();
    const shortened = "Elena set out on foot. (shortened)";
    server.on("POST", /\/chat$/, (body) => {
      const request = body as { utterance: string; selection: string[] };
      const next = blackoutPayload(2);
      for (const node of next.graph.nodes) {
        if (request.selection.includes(node.id)) {
          node.data.segment = shortened;
        }
      }
      bump(next);
      return [
        200,
        {
          task_kind: "Edit",
          routing_reason: "imperative edit verb with a selection",
          version: 2,
          graph: next.graph,
          edited: request.selection,
        },
      ];
    });

    const app = makeApp(server);
    await app.openProject("p1");
    app.state.setSelection(["2", "3"]);

    app.chat.input.value = "make these parts shorter";
    app.chat.input.dispatchEvent(new Event("input", { bubbles: true }));
    expect(app.chat.sendButton.disabled).toBe(false);
    app.chat.sendButton.click();
    await settle(10);

    const sent = server.sent("POST", "/chat");
    expect(sent).toHaveLength(1);
    expect(sent[0].body).toEqual({
      utterance: "make these parts shorter",
      selection: ["2", "3"],
      expected_version: 1,
    });

    // the reply's routed kind is visible in the log
    expect(document.querySelector(".task-kind")?.textContent).toBe("Edit");

    // the canvas shows what the server now says, not a local patch
    expect(server.sent("GET", "/graph").length).toBeGreaterThanOrEqual(2);
    expect(app.state.version).toBe(2);
    const segment2 = document.querySelector(
      '.node-card[data-node-id="2"] .node-segment',
    )?.textContent;
    const segment4 = document.querySelector(
      '.node-card[data-node-id="4"] .node-segment',
    )?.textContent;
    expect(segment2).toBe(shortened);
    expect(segment4).toBe(current().graph.nodes.find((n) => n.id === "4")?.data.segment);
  });

  it("disables send while the utterance is empty", async () => {
    const { server } = makeServer();
    const app = makeApp(server);
    await app.openProject("p1");
    expect(app.chat.sendButton.disabled).toBe(true);
    app.chat.input.value = "   ";
    app.chat.input.dispatchEvent(new Event("input", { bubbles: true }));
    expect(app.chat.sendButton.disabled).toBe(true);
    app.chat.input.value = "write a story";
    app.chat.input.dispatchEvent(new Event("input", { bubbles: true }));
    expect(app.chat.sendButton.disabled).toBe(false);
  });

  it("offers a retry on a 502 and the retry re-sends the same payload", async () => {
    const { server } = makeServer();
    let attempts = 0;
    server.on("POST", /\/chat$/, () => {
      attempts += 1;
      if (attempts === 1) {
        return [502, { error: "BackendFailure", message: "backend fell over" }];
      }
      return [
        200,
        { task_kind: "Generate", routing_reason: "no graph yet", version: 2, graph: blackoutPayload(2).graph },
      ];
    });
    const app = makeApp(server);
    await app.openProject("p1");

    app.chat.input.value = "write a story about a blackout";
    app.chat.input.dispatchEvent(new Event("input", { bubbles: true }));
    app.chat.sendButton.click();
    await settle(10);

    expect(document.querySelector(".chat-error")?.textContent).toContain("backend fell over");
    const retry = document.querySelector(".chat-retry") as HTMLButtonElement;
    expect(retry).toBeTruthy();
    retry.click();
    await settle(10);

    const sent = server.sent("POST", "/chat");
    expect(sent).toHaveLength(2);
    expect(sent[1].body).toEqual(sent[0].body);
    expect(document.querySelector(".task-kind")?.textContent).toBe("Generate");
  });

  it("surfaces a version conflict and refreshes to the server's state", async () => {
    const { server } = makeServer();
    server.on("PATCH", /\/nodes\/7$/, () => [
      409,
      { error: "VersionConflict", message: "expected version 1, project is at 4" },
    ]);
    const app = makeApp(server);
    await app.openProject("p1");
    const before = server.sent("GET", "/graph").length;

    await app.mutate(() => app.api.patchNode("p1", "7", { x: 1, y: 2 }, app.state.version));
    await settle();

    expect(document.querySelector(".notice")?.textContent).toContain("expected version 1");
    expect(server.sent("GET", "/graph").length).toBe(before + 1);
  });

  it("catches up on past job events when opening a project", async () => {
    const { server } = makeServer();
    const backlog =
      'id: 1\ndata: {"type": "jobs_enqueued", "seq": 1, "job_ids": ["j1"], "node_ids": ["2"], "kind": "audio"}\n\n' +
      'id: 2\ndata: {"type": "job_status", "seq": 2, "job_id": "j1", "node_id": "2", "kind": "audio", "status": "running"}\n\n';
    const fresh = new FakeServer()
      .on("GET", /\/projects$/, () => [200, []])
      .on("GET", /\/graph$/, () => [200, blackoutPayload(1)])
      .on("GET", /follow=false/, () => [200, backlog])
      .on("GET", /follow=true/, () => pendingFollow());
    void server;
    const app = makeApp(fresh);
    await app.openProject("p1");
    expect(app.state.badges.get("j1")?.status).toBe("running");
    expect(app.state.lastSeq).toBe(2);
    const badge = document.querySelector('.node-card[data-node-id="2"] .badge');
    expect(badge?.classList.contains("badge-running")).toBe(true);
    await settle();
    expect(fresh.sent("GET", "follow=true")[0].url).toContain("since=2");
  });
});
