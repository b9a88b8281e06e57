import { beforeEach, describe, expect, it } from "vitest";

import type { ManifestEntry } from "../src/api.js";
import { PreviewPane } from "../src/preview.js";
import { ViewState } from "../src/state.js";
import { blackoutGraph, blackoutPayload, settle } from "./helpers.js";

function entriesFor(order: string[]): ManifestEntry[] {
  const graph = blackoutGraph();
  const byId = new Map(graph.nodes.map((n) => [n.id, n]));
  let clock = 0;
  return order.map((id) => {
    const node = byId.get(id)!;
    const start = clock;
    clock += 5;
    return {
      node_id: id,
      label: node.data.label,
      segment: node.data.segment,
      assets: {},
      start_s: start,
      end_s: clock,
    };
  });
}

function setup(): { pane: PreviewPane; state: ViewState; requested: Array<string[] | undefined> } {
  document.body.innerHTML = "";
  const host = document.createElement("div");
  document.body.appendChild(host);
  const state = new ViewState();
  state.openProject("p1");
  const requested: Array<string[] | undefined> = [];
  const pane = new PreviewPane(host, state, {
    manifest: async (path) => {
      requested.push(path);
      return entriesFor(path ?? ["1", "2", "3", "4", "5", "6", "7"]);
    },
    exportUrl: (artifact, path) =>
      `/projects/p1/export/${artifact}` + (path ? `?path=${path.join(",")}` : ""),
    assetUrl: (uri) => `/projects/p1/${uri}`,
  });
  state.subscribe((_, hint) => {
    if (hint === "graph") {
      pane.refreshControls();
    }
  });
  return { pane, state, requested };
}

describe("PreviewPane", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("disables export on an empty graph", () => {
    const { pane, state } = setup();
    state.loadGraph({ version: 1, graph: { nodes: [], edges: [] }, assets: [] });
    expect(pane.loadButton.disabled).toBe(true);
    expect(pane.notice.textContent).toContain("Empty graph");
  });

  it("prompts for a path on a branching story", () => {
    const { pane, state } = setup();
    state.loadGraph(blackoutPayload());
    expect(pane.loadButton.disabled).toBe(false);
    expect(pane.pathSelect.hidden).toBe(false);
    expect(pane.notice.textContent).toContain("branches");
    const options = [...pane.pathSelect.options].map((o) => o.value);
    expect(options).toEqual(["", "1,2,6,7", "1,3,6,7", "1,4,6,7", "5,6,7"]);
  });

  it("hides the path picker on a linear chain", () => {
    const { pane, state } = setup();
    state.loadGraph({
      version: 1,
      graph: {
        nodes: [
          { id: "1", data: { label: "a", segment: "x" }, position: { x: 0, y: 0 } },
          { id: "2", data: { label: "b", segment: "y" }, position: { x: 100, y: 0 } },
        ],
        edges: [{ id: "e1-2", source: "1", target: "2" }],
      },
      assets: [],
    });
    expect(pane.pathSelect.hidden).toBe(true);
    expect(pane.notice.textContent).toBe("");
  });

  it("plays the full story as 7 slides in manifest order", async () => {
    const { pane, state } = setup();
    state.loadGraph(blackoutPayload());
    pane.loadButton.click();
    await settle();

    const slides = document.querySelectorAll(".slide");
    expect(slides).toHaveLength(7);
    expect([...slides].map((s) => (s as HTMLElement).dataset.nodeId)).toEqual(
      ["1", "2", "3", "4", "5", "6", "7"],
    );
    expect(slides[0].classList.contains("active")).toBe(true);
    expect(slides[0].querySelector(".slide-subtitle")?.textContent).toContain(
      "city of Lumina",
    );
    expect(slides[0].querySelector(".slide-timing")?.textContent).toContain("0.000 s");

    pane.step(1);
    expect(slides[0].classList.contains("active")).toBe(false);
    expect(slides[1].classList.contains("active")).toBe(true);
  });

  it("previews a chosen path as exactly its slides", async () => {
    const { pane, state, requested } = setup();
    state.loadGraph(blackoutPayload());
    pane.pathSelect.value = "5,6,7";
    pane.loadButton.click();
    await settle();

    expect(requested).toEqual([["5", "6", "7"]]);
    const slides = document.querySelectorAll(".slide");
    expect(slides).toHaveLength(3);
    expect([...slides].map((s) => (s as HTMLElement).dataset.nodeId)).toEqual(["5", "6", "7"]);
  });

  it("links downloads to the server's export artifacts", async () => {
    const { pane, state } = setup();
    state.loadGraph(blackoutPayload());
    pane.pathSelect.value = "5,6,7";
    pane.loadButton.click();
    await settle();

    const links = [...document.querySelectorAll(".download")] as HTMLAnchorElement[];
    expect(links.map((l) => l.className.replace("download download-", ""))).toEqual([
      "manifest",
      "srt",
      "storyboard",
    ]);
    expect(links[1].getAttribute("href")).toBe("/projects/p1/export/srt?path=5,6,7");
  });

  it("clamps stepping to the slide range", async () => {
    const { pane, state } = setup();
    state.loadGraph(blackoutPayload());
    pane.pathSelect.value = "5,6,7";
    pane.loadButton.click();
    await settle();

    pane.step(-1);
    expect(pane.index).toBe(0);
    pane.step(1);
    pane.step(1);
    pane.step(1);
    expect(pane.index).toBe(2);
  });
});
