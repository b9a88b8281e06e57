/**
 * Typed client for the storygraph service HTTP API.
 *
 * Every mutation returns server truth (version + graph); callers re-render
 * from the response rather than patching local state. The client never
 * invents graph structure.
 */

import { parseSseText } from "./sse.js";

export interface NodeDoc {
  id: string;
  data: { label: string; segment: string };
  position: { x: number; y: number };
  [extra: string]: unknown;
}

export interface EdgeDoc {
  id: string;
  source: string;
  target: string;
  [extra: string]: unknown;
}

export interface GraphDoc {
  nodes: NodeDoc[];
  edges: EdgeDoc[];
  [extra: string]: unknown;
}

export interface AssetDoc {
  asset_id: string;
  node_id: string;
  kind: string;
  version: number;
  uri: string;
  duration_s: number | null;
  stale: boolean;
}

export interface GraphPayload {
  version: number;
  graph: GraphDoc;
  assets: AssetDoc[];
}

export interface ProjectMeta {
  project_id: string;
  name: string;
  version: number;
}

export interface ChatResponse {
  task_kind: string;
  routing_reason: string;
  version: number;
  graph?: GraphDoc;
  assets?: AssetDoc[];
  warnings?: string[];
  edited?: string[];
  added?: string;
  job_ids?: string[];
  files?: string[];
}

export interface ManifestAsset {
  asset_id: string;
  version: number;
  uri: string;
  duration_s: number | null;
}

export interface ManifestEntry {
  node_id: string;
  label: string;
  segment: string;
  assets: Record<string, ManifestAsset>;
  start_s: number;
  end_s: number;
}

export interface JobDoc {
  job_id: string;
  node_id: string;
  kind: string;
  status: string;
  error: string | null;
}

export interface StreamEvent {
  type: string;
  seq: number;
  [field: string]: unknown;
}

export interface SnapshotMeta {
  snapshot_id: number;
  taken_at: number;
  reason: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly errorType: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let type = "HttpError";
  let message = `HTTP ${response.status}`;
  try {
    const body = await response.json();
    if (body && typeof body.error === "string") {
      type = body.error;
      message = body.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(response.status, type, message);
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    readonly baseUrl: string = "",
    readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  private async requestText(path: string): Promise<string> {
    const response = await this.fetchImpl(this.baseUrl + path, { method: "GET" });
    if (!response.ok) {
      throw await parseError(response);
    }
    return response.text();
  }

  listProjects(): Promise<ProjectMeta[]> {
    return this.request("GET", "/projects");
  }

  createProject(name: string): Promise<ProjectMeta> {
    return this.request("POST", "/projects", { name });
  }

  getGraph(projectId: string): Promise<GraphPayload> {
    return this.request("GET", `/projects/${projectId}/graph`);
  }

  putGraph(projectId: string, graph: GraphDoc, expectedVersion: number): Promise<GraphPayload> {
    return this.request("PUT", `/projects/${projectId}/graph`, {
      graph,
      expected_version: expectedVersion,
    });
  }

  chat(
    projectId: string,
    utterance: string,
    selection: string[],
    expectedVersion?: number,
  ): Promise<ChatResponse> {
    return this.request("POST", `/projects/${projectId}/chat`, {
      utterance,
      selection,
      expected_version: expectedVersion ?? null,
    });
  }

  addNode(
    projectId: string,
    body: { label: string; segment?: string; connect_from?: string },
  ): Promise<{ node_id: string; version: number; graph: GraphDoc }> {
    return this.request("POST", `/projects/${projectId}/nodes`, body);
  }

  patchNode(
    projectId: string,
    nodeId: string,
    fields: { label?: string; segment?: string; x?: number; y?: number },
    expectedVersion: number,
  ): Promise<GraphPayload> {
    return this.request("PATCH", `/projects/${projectId}/nodes/${nodeId}`, {
      ...fields,
      expected_version: expectedVersion,
    });
  }

  deleteNodes(
    projectId: string,
    selection: string[],
    expectedVersion?: number,
  ): Promise<GraphPayload> {
    return this.request("DELETE", `/projects/${projectId}/nodes`, {
      selection,
      expected_version: expectedVersion ?? null,
    });
  }

  duplicate(
    projectId: string,
    selection: string[],
    expectedVersion?: number,
  ): Promise<{ version: number; mapping: Record<string, string>; graph: GraphDoc }> {
    return this.request("POST", `/projects/${projectId}/duplicate`, {
      selection,
      expected_version: expectedVersion ?? null,
    });
  }

  submitMedia(
    projectId: string,
    body: {
      selection: string[];
      kind: string;
      provider?: string;
      voice?: string | null;
      style_instructions?: string | null;
    },
  ): Promise<{ job_ids: string[]; version: number }> {
    return this.request("POST", `/projects/${projectId}/media`, body);
  }

  listJobs(projectId: string): Promise<{ jobs: JobDoc[] }> {
    return this.request("GET", `/projects/${projectId}/jobs`);
  }

  /** One-shot catch-up read; the endpoint always answers in SSE framing. */
  async eventsSince(projectId: string, since: number): Promise<StreamEvent[]> {
    const text = await this.requestText(
      `/projects/${projectId}/events?since=${since}&follow=false`,
    );
    return parseSseText(text);
  }

  manifest(projectId: string, path?: string[]): Promise<ManifestEntry[]> {
    const query = path && path.length ? `?path=${path.join(",")}` : "";
    return this.request("GET", `/projects/${projectId}/export/manifest${query}`);
  }

  srt(projectId: string, path?: string[]): Promise<string> {
    const query = path && path.length ? `?path=${path.join(",")}` : "";
    return this.requestText(`/projects/${projectId}/export/srt${query}`);
  }

  exportBundle(
    projectId: string,
    body: { nodes?: string[]; path?: string[] },
  ): Promise<{ files: string[]; warnings: string[] }> {
    return this.request("POST", `/projects/${projectId}/export`, body);
  }

  listSnapshots(projectId: string): Promise<{ snapshots: SnapshotMeta[] }> {
    return this.request("GET", `/projects/${projectId}/snapshots`);
  }

  restore(
    projectId: string,
    snapshotId: number,
  ): Promise<{ version: number; pre_restore_snapshot: number; graph: GraphDoc }> {
    return this.request("POST", `/projects/${projectId}/restore`, {
      snapshot_id: snapshotId,
    });
  }

  assetUrl(projectId: string, uri: string): string {
    return `${this.baseUrl}/projects/${projectId}/${uri}`;
  }
}
