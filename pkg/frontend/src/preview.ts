/**
 * Export preview: step through the story as a slideshow in manifest order.
 *
 * Each slide shows the node's subtitle text and its [start, end) timing;
 * image assets display inline and audio gets a playback control. On a
 * branching graph the pane asks for a root-to-sink path before previewing,
 * mirroring the export warning; an empty graph disables export entirely.
 * Download links go through the server's manifest, srt, and storyboard
 * endpoints so the previewed bytes are exactly what an export would write.
 */

import type { ManifestEntry } from "./api.js";
import type { ViewState } from "./state.js";

export interface PreviewActions {
  manifest(path?: string[]): Promise<ManifestEntry[]>;
  /** URL of a server-rendered export artifact, for download links. */
  exportUrl(artifact: "manifest" | "srt" | "storyboard", path?: string[]): string;
  assetUrl(uri: string): string;
}

export class PreviewPane {
  entries: ManifestEntry[] = [];
  index = 0;

  readonly loadButton: HTMLButtonElement;
  readonly pathSelect: HTMLSelectElement;
  readonly notice: HTMLElement;
  readonly slideHost: HTMLElement;
  readonly prevButton: HTMLButtonElement;
  readonly nextButton: HTMLButtonElement;
  readonly downloads: HTMLElement;

  constructor(
    readonly container: HTMLElement,
    readonly state: ViewState,
    readonly actions: PreviewActions,
  ) {
    container.classList.add("preview");
    const controls = document.createElement("div");
    controls.className = "preview-controls";
    this.pathSelect = document.createElement("select");
    this.pathSelect.className = "preview-path";
    this.loadButton = document.createElement("button");
    this.loadButton.className = "preview-load";
    this.loadButton.textContent = "Preview";
    this.prevButton = document.createElement("button");
    this.prevButton.className = "preview-prev";
    this.prevButton.textContent = "◀";
    this.nextButton = document.createElement("button");
    this.nextButton.className = "preview-next";
    this.nextButton.textContent = "▶";
    controls.appendChild(this.pathSelect);
    controls.appendChild(this.loadButton);
    controls.appendChild(this.prevButton);
    controls.appendChild(this.nextButton);

    this.notice = document.createElement("div");
    this.notice.className = "preview-notice";
    this.slideHost = document.createElement("div");
    this.slideHost.className = "preview-slides";
    this.downloads = document.createElement("div");
    this.downloads.className = "preview-downloads";

    container.appendChild(controls);
    container.appendChild(this.notice);
    container.appendChild(this.slideHost);
    container.appendChild(this.downloads);

    this.loadButton.addEventListener("click", () => void this.load());
    this.prevButton.addEventListener("click", () => this.step(-1));
    this.nextButton.addEventListener("click", () => this.step(1));
  }

  /** True when the graph is a single chain, so no path choice is needed. */
  isChain(): boolean {
    const nodes = this.state.graph.nodes;
    const edges = this.state.graph.edges;
    if (nodes.length <= 1) {
      return true;
    }
    if (edges.length !== nodes.length - 1) {
      return false;
    }
    const outs = new Map<string, number>();
    const ins = new Map<string, number>();
    for (const edge of edges) {
      outs.set(edge.source, (outs.get(edge.source) ?? 0) + 1);
      ins.set(edge.target, (ins.get(edge.target) ?? 0) + 1);
    }
    return nodes.every((n) => (outs.get(n.id) ?? 0) <= 1 && (ins.get(n.id) ?? 0) <= 1);
  }

  /** Root-to-sink paths, for the picker on branching graphs. */
  enumeratePaths(): string[][] {
    const ids = this.state.graph.nodes.map((n) => n.id);
    const out = new Map<string, string[]>(ids.map((id) => [id, []]));
    const hasIncoming = new Set<string>();
    for (const edge of this.state.graph.edges) {
      out.get(edge.source)?.push(edge.target);
      hasIncoming.add(edge.target);
    }
    const paths: string[][] = [];
    const walk = (id: string, trail: string[]) => {
      const next = out.get(id) ?? [];
      if (!next.length) {
        paths.push([...trail, id]);
        return;
      }
      for (const succ of next) {
        walk(succ, [...trail, id]);
      }
    };
    for (const id of ids) {
      if (!hasIncoming.has(id)) {
        walk(id, []);
      }
    }
    return paths;
  }

  /** Rebuild the path picker and enable state from the loaded graph. */
  refreshControls(): void {
    const empty = this.state.graph.nodes.length === 0;
    this.loadButton.disabled = empty;
    this.pathSelect.textContent = "";
    this.notice.textContent = empty ? "Empty graph; nothing to export." : "";
    if (empty || this.isChain()) {
      this.pathSelect.hidden = true;
      return;
    }
    this.pathSelect.hidden = false;
    const prompt = document.createElement("option");
    prompt.value = "";
    prompt.textContent = "Full narrative order (flattens branches)";
    this.pathSelect.appendChild(prompt);
    for (const path of this.enumeratePaths()) {
      const option = document.createElement("option");
      option.value = path.join(",");
      option.textContent = path.join(" → ");
      this.pathSelect.appendChild(option);
    }
    this.notice.textContent =
      "This story branches; pick a root-to-sink path for a single storyline, " +
      "or preview the full order.";
  }

  private chosenPath(): string[] | undefined {
    const raw = this.pathSelect.hidden ? "" : this.pathSelect.value;
    return raw ? raw.split(",") : undefined;
  }

  async load(): Promise<void> {
    if (this.state.graph.nodes.length === 0) {
      return;
    }
    const path = this.chosenPath();
    this.entries = await this.actions.manifest(path);
    this.index = 0;
    this.renderSlides();
    this.renderDownloads(path);
  }

  private renderSlides(): void {
    this.slideHost.textContent = "";
    this.entries.forEach((entry, i) => {
      const slide = document.createElement("div");
      slide.className = "slide" + (i === this.index ? " active" : "");
      slide.dataset.nodeId = entry.node_id;

      const header = document.createElement("div");
      header.className = "slide-header";
      header.textContent = `${i + 1}/${this.entries.length}  ${entry.label}`;
      slide.appendChild(header);

      const image = entry.assets["image"];
      if (image) {
        const img = document.createElement("img");
        img.className = "slide-image";
        img.src = this.actions.assetUrl(image.uri);
        img.alt = entry.label;
        slide.appendChild(img);
      }

      const subtitle = document.createElement("div");
      subtitle.className = "slide-subtitle";
      subtitle.textContent = entry.segment;
      slide.appendChild(subtitle);

      const timing = document.createElement("div");
      timing.className = "slide-timing";
      timing.textContent =
        `${entry.start_s.toFixed(3)} s → ${entry.end_s.toFixed(3)} s ` +
        `(${(entry.end_s - entry.start_s).toFixed(3)} s)`;
      slide.appendChild(timing);

      const audio = entry.assets["audio"];
      if (audio) {
        const player = document.createElement("audio");
        player.controls = true;
        player.src = this.actions.assetUrl(audio.uri);
        slide.appendChild(player);
      }
      this.slideHost.appendChild(slide);
    });
  }

  private renderDownloads(path?: string[]): void {
    this.downloads.textContent = "";
    for (const artifact of ["manifest", "srt", "storyboard"] as const) {
      const link = document.createElement("a");
      link.className = `download download-${artifact}`;
      link.href = this.actions.exportUrl(artifact, path);
      link.target = "_blank";
      link.textContent = artifact;
      this.downloads.appendChild(link);
    }
  }

  step(delta: number): void {
    if (!this.entries.length) {
      return;
    }
    this.index = Math.min(this.entries.length - 1, Math.max(0, this.index + delta));
    [...this.slideHost.children].forEach((slide, i) => {
      slide.classList.toggle("active", i === this.index);
    });
  }
}
