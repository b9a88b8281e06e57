/**
 * Branch comparison: duplicate a selected subgraph, view original and copy
 * side by side, keep one.
 *
 * The pair is remembered as aligned id lists (original[i] maps to
 * duplicate[i]); "keep" deletes the rejected side's nodes through the API
 * and the caller re-renders from server truth. Without a recorded pair the
 * pane shows guidance instead of panes.
 */

import type { ViewState } from "./state.js";

export interface CompareActions {
  /** Duplicate the nodes; resolves to the original→copy id mapping. */
  duplicate(selection: string[]): Promise<Record<string, string>>;
  /** Delete the rejected branch's nodes. */
  deleteNodes(ids: string[]): Promise<void>;
}

export class ComparePane {
  readonly duplicateButton: HTMLButtonElement;
  readonly panes: HTMLElement;
  readonly guidance: HTMLElement;

  constructor(
    readonly container: HTMLElement,
    readonly state: ViewState,
    readonly actions: CompareActions,
  ) {
    container.classList.add("compare");
    this.duplicateButton = document.createElement("button");
    this.duplicateButton.className = "compare-duplicate";
    this.duplicateButton.textContent = "Duplicate selection for comparison";
    this.guidance = document.createElement("div");
    this.guidance.className = "compare-guidance";
    this.panes = document.createElement("div");
    this.panes.className = "compare-panes";
    container.appendChild(this.duplicateButton);
    container.appendChild(this.guidance);
    container.appendChild(this.panes);

    this.duplicateButton.addEventListener("click", () => void this.duplicateSelection());
  }

  async duplicateSelection(): Promise<void> {
    const selection = [...this.state.selection].sort();
    if (!selection.length) {
      this.guidance.textContent = "Select the branch's nodes first, then duplicate.";
      return;
    }
    const mapping = await this.actions.duplicate(selection);
    const original = Object.keys(mapping).sort();
    this.state.setComparison({
      original,
      duplicate: original.map((id) => mapping[id]),
    });
  }

  render(): void {
    this.panes.textContent = "";
    const pair = this.state.comparison;
    if (!pair) {
      this.guidance.textContent =
        "No comparison active. Select nodes and press duplicate; edit or regenerate " +
        "one copy, then compare the two branches here.";
      return;
    }
    this.guidance.textContent = "";
    this.panes.appendChild(this.buildPane("A (original)", pair.original, pair.duplicate));
    this.panes.appendChild(this.buildPane("B (duplicate)", pair.duplicate, pair.original));
  }

  private buildPane(title: string, shown: string[], rejected: string[]): HTMLElement {
    const pane = document.createElement("div");
    pane.className = "compare-pane";
    const header = document.createElement("h3");
    header.textContent = title;
    pane.appendChild(header);

    const byId = new Map(this.state.graph.nodes.map((n) => [n.id, n]));
    for (const id of shown) {
      const node = byId.get(id);
      const card = document.createElement("div");
      card.className = "compare-card";
      card.dataset.nodeId = id;
      const label = document.createElement("div");
      label.className = "compare-label";
      label.textContent = node ? node.data.label : `${id} (deleted)`;
      const segment = document.createElement("div");
      segment.className = "compare-segment";
      segment.textContent = node ? node.data.segment : "";
      card.appendChild(label);
      card.appendChild(segment);
      const audio = node && this.state.currentAsset(id, "audio");
      if (audio) {
        const media = document.createElement("div");
        media.className = "compare-media";
        media.textContent = `audio v${audio.version}` +
          (audio.duration_s !== null ? ` (${audio.duration_s.toFixed(2)} s)` : "");
        card.appendChild(media);
      }
      pane.appendChild(card);
    }

    const keep = document.createElement("button");
    keep.className = "compare-keep";
    keep.textContent = `Keep ${title.slice(0, 1)}`;
    keep.addEventListener("click", () => {
      void this.actions
        .deleteNodes(rejected.filter((id) => byId.has(id)))
        .then(() => this.state.setComparison(null));
    });
    pane.appendChild(keep);
    return pane;
  }
}
