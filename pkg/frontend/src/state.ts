/**
 * Client view state: which project is open, what the server last said its
 * graph looks like, the current selection, and live job badges.
 *
 * Narrative truth stays on the server. The store only caches the latest
 * server response plus ephemeral view concerns (viewport, selection,
 * comparison pair); loadGraph replaces the cache wholesale and re-clamps
 * the ephemera so the invariants hold: selection is always a subset of the
 * loaded graph's nodes, and each job's badge reflects its latest event.
 */

import type { AssetDoc, GraphDoc, GraphPayload, StreamEvent } from "./api.js";

export type BadgeStatus = "queued" | "running" | "done" | "failed";

export interface JobBadge {
  jobId: string;
  nodeId: string;
  kind: string;
  status: BadgeStatus;
  version?: number;
  assetId?: string;
  error?: string;
}

export interface ComparisonPair {
  /** Original node ids, in the order they were selected for duplication. */
  original: string[];
  /** Duplicate node ids, aligned index-for-index with original. */
  duplicate: string[];
}

export interface Viewport {
  x: number;
  y: number;
  zoom: number;
}

/** What changed, for listeners that only care about part of the state. */
export type StateHint = "graph" | "selection" | "badges" | "comparison" | "viewport";

export type StateListener = (state: ViewState, hint: StateHint) => void;

export class ViewState {
  projectId: string | null = null;
  version = 0;
  graph: GraphDoc = { nodes: [], edges: [] };
  assets: AssetDoc[] = [];
  viewport: Viewport = { x: 0, y: 0, zoom: 1 };
  selection = new Set<string>();
  /** Latest badge per job id; later events for the same job replace earlier. */
  badges = new Map<string, JobBadge>();
  comparison: ComparisonPair | null = null;
  lastSeq = 0;

  private listeners: StateListener[] = [];

  subscribe(listener: StateListener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(hint: StateHint): void {
    for (const listener of [...this.listeners]) {
      listener(this, hint);
    }
  }

  openProject(projectId: string): void {
    this.projectId = projectId;
    this.version = 0;
    this.graph = { nodes: [], edges: [] };
    this.assets = [];
    this.selection.clear();
    this.badges.clear();
    this.comparison = null;
    this.lastSeq = 0;
    this.emit("graph");
  }

  nodeIds(): Set<string> {
    return new Set(this.graph.nodes.map((n) => n.id));
  }

  /** Replace the cached graph with a fresh server payload. */
  loadGraph(payload: GraphPayload): void {
    this.version = payload.version;
    this.graph = payload.graph;
    this.assets = payload.assets ?? [];
    const ids = this.nodeIds();
    let selectionChanged = false;
    for (const id of [...this.selection]) {
      if (!ids.has(id)) {
        this.selection.delete(id);
        selectionChanged = true;
      }
    }
    if (this.comparison) {
      const alive = (set: string[]) => set.filter((id) => ids.has(id));
      const original = alive(this.comparison.original);
      const duplicate = alive(this.comparison.duplicate);
      if (!original.length || !duplicate.length) {
        this.comparison = null;
        this.emit("comparison");
      } else if (
        original.length !== this.comparison.original.length ||
        duplicate.length !== this.comparison.duplicate.length
      ) {
        this.comparison = { original, duplicate };
        this.emit("comparison");
      }
    }
    this.emit("graph");
    if (selectionChanged) {
      this.emit("selection");
    }
  }

  setSelection(ids: Iterable<string>): void {
    const valid = this.nodeIds();
    this.selection = new Set([...ids].filter((id) => valid.has(id)));
    this.emit("selection");
  }

  toggleSelected(id: string): void {
    if (!this.nodeIds().has(id)) {
      return;
    }
    if (this.selection.has(id)) {
      this.selection.delete(id);
    } else {
      this.selection.add(id);
    }
    this.emit("selection");
  }

  setViewport(viewport: Viewport): void {
    this.viewport = viewport;
    this.emit("viewport");
  }

  setComparison(pair: ComparisonPair | null): void {
    this.comparison = pair;
    this.emit("comparison");
  }

  /**
   * Fold one stream event into the badge map. graph_updated events carry no
   * job payload; callers watch for them separately to re-fetch the graph.
   */
  applyEvent(event: StreamEvent): void {
    if (typeof event.seq === "number") {
      this.lastSeq = Math.max(this.lastSeq, event.seq);
    }
    if (event.type === "jobs_enqueued") {
      const jobIds = (event.job_ids as string[]) ?? [];
      const nodeIds = (event.node_ids as string[]) ?? [];
      const kind = String(event.kind ?? "");
      jobIds.forEach((jobId, i) => {
        this.badges.set(jobId, {
          jobId,
          nodeId: nodeIds[i] ?? "",
          kind,
          status: "queued",
        });
      });
      this.emit("badges");
    } else if (event.type === "job_status") {
      const jobId = String(event.job_id);
      const prior = this.badges.get(jobId);
      const badge: JobBadge = {
        jobId,
        nodeId: String(event.node_id ?? prior?.nodeId ?? ""),
        kind: String(event.kind ?? prior?.kind ?? ""),
        status: event.status as BadgeStatus,
      };
      if (event.version !== undefined) {
        badge.version = Number(event.version);
      }
      if (event.asset_id !== undefined) {
        badge.assetId = String(event.asset_id);
      }
      if (event.error !== undefined) {
        badge.error = String(event.error);
      }
      this.badges.set(jobId, badge);
      this.emit("badges");
    }
  }

  badgesForNode(nodeId: string): JobBadge[] {
    return [...this.badges.values()].filter((b) => b.nodeId === nodeId);
  }

  assetsForNode(nodeId: string, kind?: string): AssetDoc[] {
    return this.assets.filter(
      (a) => a.node_id === nodeId && (kind === undefined || a.kind === kind),
    );
  }

  /** Current (non-stale) asset of a kind for a node, if any. */
  currentAsset(nodeId: string, kind: string): AssetDoc | undefined {
    const live = this.assetsForNode(nodeId, kind).filter((a) => !a.stale);
    live.sort((a, b) => a.version - b.version);
    return live[live.length - 1];
  }
}
