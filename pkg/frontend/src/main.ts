/**
 * App bootstrap: project picker, pane wiring, and the single event-stream
 * subscription for the open project.
 *
 * Every mutation goes through the API and is followed by a fresh GET of the
 * graph, so the canvas only ever shows validated server state. Version
 * conflicts surface as a notice and trigger the same refresh. The service
 * address defaults to the page origin and can be overridden with ?api=.
 */

import { ApiClient, ApiError } from "./api.js";
import type { ChatResponse } from "./api.js";
import { EventStream } from "./sse.js";
import { ViewState } from "./state.js";
import { GraphCanvas } from "./canvas.js";
import { ChatPane } from "./chat.js";
import { MediaPane } from "./media.js";
import { ComparePane } from "./compare.js";
import { PreviewPane } from "./preview.js";

function apiBase(): string {
  const override = new URLSearchParams(window.location.search).get("api");
  if (override) {
    return override.replace(/\/$/, "");
  }
  return window.location.origin === "null" ? "http://localhost:8000" : "";
}

export class App {
  readonly api: ApiClient;
  readonly state = new ViewState();
  private stream: EventStream | null = null;

  readonly notices: HTMLElement;
  readonly picker: HTMLSelectElement;
  readonly newButton: HTMLButtonElement;
  canvas!: GraphCanvas;
  chat!: ChatPane;
  media!: MediaPane;
  compare!: ComparePane;
  preview!: PreviewPane;

  constructor(readonly root: HTMLElement, api?: ApiClient) {
    this.api = api ?? new ApiClient(apiBase());

    const topbar = document.createElement("div");
    topbar.className = "topbar";
    const title = document.createElement("span");
    title.className = "app-title";
    title.textContent = "storygraph";
    this.picker = document.createElement("select");
    this.picker.className = "project-picker";
    this.newButton = document.createElement("button");
    this.newButton.className = "project-new";
    this.newButton.textContent = "New project";
    this.notices = document.createElement("div");
    this.notices.className = "notices";
    topbar.appendChild(title);
    topbar.appendChild(this.picker);
    topbar.appendChild(this.newButton);
    topbar.appendChild(this.notices);

    const body = document.createElement("div");
    body.className = "workspace";
    const canvasHost = document.createElement("div");
    canvasHost.className = "canvas-host";
    const side = document.createElement("div");
    side.className = "sidebar";
    body.appendChild(canvasHost);
    body.appendChild(side);

    root.appendChild(topbar);
    root.appendChild(body);

    this.canvas = new GraphCanvas(canvasHost, this.state, {
      moveNode: (nodeId, x, y) =>
        this.mutate(() =>
          this.api.patchNode(this.projectId(), nodeId, { x, y }, this.state.version),
        ),
      editSegment: (nodeId, segment) =>
        this.mutate(() =>
          this.api.patchNode(this.projectId(), nodeId, { segment }, this.state.version),
        ),
    });

    const chatHost = this.section(side, "Chat");
    const mediaHost = this.section(side, "Media");
    const compareHost = this.section(side, "Compare");
    const previewHost = this.section(side, "Export preview");

    this.chat = new ChatPane(chatHost, this.state, {
      send: (utterance, selection) => this.sendChat(utterance, selection),
    });
    this.media = new MediaPane(mediaHost, this.state, {
      submit: (bodyIn) => this.api.submitMedia(this.projectId(), bodyIn),
      assetUrl: (uri) => this.api.assetUrl(this.projectId(), uri),
    });
    this.compare = new ComparePane(compareHost, this.state, {
      duplicate: async (selection) => {
        const reply = await this.api.duplicate(this.projectId(), selection, this.state.version);
        await this.refreshGraph();
        return reply.mapping;
      },
      deleteNodes: async (ids) => {
        await this.mutate(() => this.api.deleteNodes(this.projectId(), ids, this.state.version));
      },
    });
    this.preview = new PreviewPane(previewHost, this.state, {
      manifest: (path) => this.api.manifest(this.projectId(), path),
      exportUrl: (artifact, path) => {
        const query = path && path.length ? `?path=${path.join(",")}` : "";
        return `${this.api.baseUrl}/projects/${this.projectId()}/export/${artifact}${query}`;
      },
      assetUrl: (uri) => this.api.assetUrl(this.projectId(), uri),
    });

    this.state.subscribe((_, hint) => {
      if (hint === "graph" || hint === "selection" || hint === "badges") {
        this.canvas.render();
      }
      if (hint === "graph" || hint === "badges") {
        this.media.render();
      }
      if (hint === "graph" || hint === "comparison") {
        this.compare.render();
      }
      if (hint === "graph") {
        this.preview.refreshControls();
      }
    });

    this.picker.addEventListener("change", () => {
      if (this.picker.value) {
        void this.openProject(this.picker.value);
      }
    });
    this.newButton.addEventListener("click", () => {
      const name = window.prompt("Project name", "untitled");
      if (name !== null) {
        void this.api.createProject(name).then((meta) => {
          void this.loadProjectList(meta.project_id);
          return this.openProject(meta.project_id);
        });
      }
    });
  }

  private section(side: HTMLElement, caption: string): HTMLElement {
    const details = document.createElement("details");
    details.open = caption === "Chat";
    const summary = document.createElement("summary");
    summary.textContent = caption;
    const host = document.createElement("div");
    details.appendChild(summary);
    details.appendChild(host);
    side.appendChild(details);
    return host;
  }

  projectId(): string {
    if (!this.state.projectId) {
      throw new Error("no project open");
    }
    return this.state.projectId;
  }

  notify(message: string): void {
    const note = document.createElement("div");
    note.className = "notice";
    note.textContent = message;
    this.notices.appendChild(note);
    setTimeout(() => note.remove(), 6000);
  }

  async loadProjectList(selected?: string): Promise<void> {
    const projects = await this.api.listProjects();
    this.picker.textContent = "";
    const placeholder = document.createElement("option");
    placeholder.value = "";
    placeholder.textContent = projects.length ? "Open a project…" : "No projects yet";
    this.picker.appendChild(placeholder);
    for (const meta of projects) {
      const option = document.createElement("option");
      option.value = meta.project_id;
      option.textContent = `${meta.name} (${meta.project_id.slice(0, 8)})`;
      if (meta.project_id === selected) {
        option.selected = true;
      }
      this.picker.appendChild(option);
    }
  }

  async openProject(projectId: string): Promise<void> {
    this.stream?.stop();
    this.stream = null;
    this.state.openProject(projectId);
    await this.refreshGraph();
    // catch up on past job events, then follow live from there
    for (const event of await this.api.eventsSince(projectId, 0)) {
      this.state.applyEvent(event);
    }
    this.stream = new EventStream(
      projectId,
      (event) => {
        this.state.applyEvent(event);
        if (event.type === "graph_updated" && Number(event.version) !== this.state.version) {
          void this.refreshGraph();
        }
      },
      this.state.lastSeq,
      { baseUrl: this.api.baseUrl, fetchImpl: this.api.fetchImpl },
    );
    void this.stream.run();
  }

  async refreshGraph(): Promise<void> {
    this.state.loadGraph(await this.api.getGraph(this.projectId()));
  }

  /** Run a mutation, then re-render from server truth; 409 refreshes too. */
  async mutate<T>(op: () => Promise<T>): Promise<void> {
    try {
      await op();
      await this.refreshGraph();
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.notify(`Someone else changed the project: ${error.message}. Reloaded.`);
        await this.refreshGraph();
      } else {
        this.notify(String(error instanceof Error ? error.message : error));
      }
    }
  }

  private async sendChat(utterance: string, selection: string[]): Promise<ChatResponse> {
    try {
      const reply = await this.api.chat(
        this.projectId(),
        utterance,
        selection,
        this.state.version,
      );
      await this.refreshGraph();
      return reply;
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        await this.refreshGraph();
      }
      throw error;
    }
  }
}

export function boot(): App {
  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app element");
  }
  const app = new App(root);
  void app.loadProjectList();
  return app;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot();
}
