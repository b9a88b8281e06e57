/**
 * Node-graph canvas: absolutely positioned cards at the stored coordinates
 * with SVG edge arrows underneath.
 *
 * The canvas is a pure projection of the last server payload. Gestures turn
 * into API calls through the injected actions; nothing mutates the cached
 * graph locally. A drag moves the card element while the pointer is down
 * for feedback, then persists via PATCH and the caller re-renders from the
 * response.
 */

import type { NodeDoc } from "./api.js";
import type { JobBadge, ViewState } from "./state.js";

export const CARD_WIDTH = 220;
export const CARD_HEIGHT = 96;

// the svg sheet covers graph coordinates in [-PAD, SHEET-PAD)
const SHEET = 8000;
const PAD = 2000;
const DRAG_THRESHOLD_PX = 3;

export interface CanvasActions {
  /** Persist a card position after a drag. */
  moveNode(nodeId: string, x: number, y: number): Promise<void>;
  /** Persist an inline segment edit. */
  editSegment(nodeId: string, segment: string): Promise<void>;
}

export class GraphCanvas {
  readonly layer: HTMLElement;
  private readonly svg: SVGSVGElement;
  private readonly cardHost: HTMLElement;

  constructor(
    readonly container: HTMLElement,
    readonly state: ViewState,
    readonly actions: CanvasActions,
  ) {
    container.classList.add("canvas");
    this.layer = document.createElement("div");
    this.layer.className = "canvas-layer";
    this.svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    this.svg.classList.add("edge-sheet");
    this.svg.setAttribute("viewBox", `${-PAD} ${-PAD} ${SHEET} ${SHEET}`);
    this.svg.setAttribute("width", String(SHEET));
    this.svg.setAttribute("height", String(SHEET));
    this.svg.style.left = `${-PAD}px`;
    this.svg.style.top = `${-PAD}px`;
    const defs = document.createElementNS("http://www.w3.org/2000/svg", "defs");
    defs.innerHTML =
      '<marker id="arrowhead" markerWidth="8" markerHeight="8" refX="7" refY="4" orient="auto">' +
      '<path d="M0,0 L8,4 L0,8 z" fill="currentColor"/></marker>';
    this.svg.appendChild(defs);
    this.cardHost = document.createElement("div");
    this.cardHost.className = "card-host";
    this.layer.appendChild(this.svg);
    this.layer.appendChild(this.cardHost);
    container.appendChild(this.layer);
    container.addEventListener("mousedown", (e) => this.onBackgroundDown(e));
  }

  render(): void {
    const { x, y, zoom } = this.state.viewport;
    this.layer.style.transform = `translate(${x}px, ${y}px) scale(${zoom})`;
    this.renderEdges();
    this.renderCards();
  }

  private renderEdges(): void {
    for (const old of [...this.svg.querySelectorAll("path.edge")]) {
      old.remove();
    }
    const byId = new Map(this.state.graph.nodes.map((n) => [n.id, n]));
    for (const edge of this.state.graph.edges) {
      const source = byId.get(edge.source);
      const target = byId.get(edge.target);
      if (!source || !target) {
        continue;
      }
      const x1 = source.position.x + CARD_WIDTH;
      const y1 = source.position.y + CARD_HEIGHT / 2;
      const x2 = target.position.x;
      const y2 = target.position.y + CARD_HEIGHT / 2;
      const bend = Math.max(40, (x2 - x1) / 2);
      const path = document.createElementNS("http://www.w3.org/2000/svg", "path");
      path.setAttribute("class", "edge");
      path.setAttribute("data-edge-id", edge.id);
      path.setAttribute(
        "d",
        `M ${x1} ${y1} C ${x1 + bend} ${y1}, ${x2 - bend} ${y2}, ${x2} ${y2}`,
      );
      path.setAttribute("marker-end", "url(#arrowhead)");
      this.svg.appendChild(path);
    }
  }

  private renderCards(): void {
    this.cardHost.textContent = "";
    for (const node of this.state.graph.nodes) {
      this.cardHost.appendChild(this.buildCard(node));
    }
  }

  private buildCard(node: NodeDoc): HTMLElement {
    const card = document.createElement("div");
    card.className = "node-card";
    card.dataset.nodeId = node.id;
    card.style.left = `${node.position.x}px`;
    card.style.top = `${node.position.y}px`;
    card.style.width = `${CARD_WIDTH}px`;
    if (this.state.selection.has(node.id)) {
      card.classList.add("selected");
    }

    const header = document.createElement("div");
    header.className = "node-label";
    header.textContent = node.data.label;
    card.appendChild(header);

    const segment = document.createElement("div");
    segment.className = "node-segment";
    segment.textContent = node.data.segment;
    segment.title = "double-click to edit";
    card.appendChild(segment);

    const badges = document.createElement("div");
    badges.className = "node-badges";
    for (const badge of this.state.badgesForNode(node.id)) {
      badges.appendChild(this.buildBadge(badge));
    }
    card.appendChild(badges);

    card.addEventListener("mousedown", (e) => this.onCardDown(e, node));
    segment.addEventListener("dblclick", (e) => {
      e.stopPropagation();
      this.startSegmentEdit(card, segment, node);
    });
    return card;
  }

  private buildBadge(badge: JobBadge): HTMLElement {
    const el = document.createElement("span");
    el.className = `badge badge-${badge.status}`;
    el.dataset.jobId = badge.jobId;
    let text = `${badge.kind}: ${badge.status}`;
    if (badge.status === "done" && badge.version !== undefined) {
      text += ` v${badge.version}`;
    }
    el.textContent = text;
    if (badge.status === "failed" && badge.error) {
      el.title = badge.error;
    }
    return el;
  }

  // -- gestures ------------------------------------------------------------

  private onCardDown(event: MouseEvent, node: NodeDoc): void {
    if ((event.target as HTMLElement).closest("textarea, audio, button")) {
      return;
    }
    event.stopPropagation();
    event.preventDefault();
    const card = (event.currentTarget ?? event.target) as HTMLElement;
    const startX = event.clientX;
    const startY = event.clientY;
    const origin = { ...node.position };
    const zoom = this.state.viewport.zoom;
    let dragged = false;

    const onMove = (move: MouseEvent) => {
      const dx = (move.clientX - startX) / zoom;
      const dy = (move.clientY - startY) / zoom;
      if (!dragged && Math.hypot(dx * zoom, dy * zoom) < DRAG_THRESHOLD_PX) {
        return;
      }
      dragged = true;
      card.style.left = `${origin.x + dx}px`;
      card.style.top = `${origin.y + dy}px`;
    };
    const onUp = (up: MouseEvent) => {
      document.removeEventListener("mousemove", onMove);
      document.removeEventListener("mouseup", onUp);
      if (dragged) {
        const dx = (up.clientX - startX) / zoom;
        const dy = (up.clientY - startY) / zoom;
        void this.actions.moveNode(node.id, origin.x + dx, origin.y + dy);
      } else if (up.shiftKey || up.ctrlKey || up.metaKey) {
        this.state.toggleSelected(node.id);
        this.render();
      } else {
        this.state.setSelection([node.id]);
        this.render();
      }
    };
    document.addEventListener("mousemove", onMove);
    document.addEventListener("mouseup", onUp);
  }

  private onBackgroundDown(event: MouseEvent): void {
    if ((event.target as HTMLElement).closest(".node-card")) {
      return;
    }
    const startX = event.clientX;
    const startY = event.clientY;
    const origin = { ...this.state.viewport };
    let panned = false;

    const onMove = (move: MouseEvent) => {
      const dx = move.clientX - startX;
      const dy = move.clientY - startY;
      if (!panned && Math.hypot(dx, dy) < DRAG_THRESHOLD_PX) {
        return;
      }
      panned = true;
      this.state.setViewport({ ...origin, x: origin.x + dx, y: origin.y + dy });
      this.layer.style.transform =
        `translate(${origin.x + dx}px, ${origin.y + dy}px) scale(${origin.zoom})`;
    };
    const onUp = () => {
      document.removeEventListener("mousemove", onMove);
      document.removeEventListener("mouseup", onUp);
      if (!panned) {
        this.state.setSelection([]);
        this.render();
      }
    };
    document.addEventListener("mousemove", onMove);
    document.addEventListener("mouseup", onUp);
  }

  private startSegmentEdit(card: HTMLElement, segment: HTMLElement, node: NodeDoc): void {
    const editor = document.createElement("textarea");
    editor.className = "segment-editor";
    editor.value = node.data.segment;
    card.replaceChild(editor, segment);
    editor.focus();
    let finished = false;
    const commit = () => {
      if (finished) {
        return;
      }
      finished = true;
      const text = editor.value;
      if (text === node.data.segment) {
        card.replaceChild(segment, editor);
        return;
      }
      void this.actions.editSegment(node.id, text);
    };
    editor.addEventListener("blur", commit);
    editor.addEventListener("keydown", (e) => {
      if (e.key === "Enter" && !e.shiftKey) {
        e.preventDefault();
        commit();
      } else if (e.key === "Escape") {
        finished = true;
        card.replaceChild(segment, editor);
      }
    });
  }
}
