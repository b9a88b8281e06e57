"""HTTP front end: projects on disk, chat orchestration, media jobs, export.

An app factory plus the little state the server owns: one handle per open
project carrying its lock and media queue. Narrative truth lives in the
project document; handlers mutate under the project lock and persist before
replying, so a reload after any response sees exactly what the response said.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterator

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import (
    FileResponse,
    JSONResponse,
    PlainTextResponse,
    StreamingResponse,
)
from pydantic import BaseModel

from . import graph as graphmod
from . import persistence
from .backends import GenerativeBackend, RemoteBackend, ScriptedBackend
from .errors import (
    BackendFailure,
    CorruptProject,
    IntegrityViolation,
    IOFailure,
    MissingAsset,
    PipelineError,
    StoryGraphError,
    UnknownNode,
    UnparseableDecomposition,
    VersionConflict,
)
from .evaluation import load_corpus, render_summary_table, run_eval, summarize
from .export import (
    build_manifest,
    export_bundle,
    export_storyboard,
    manifest_document,
    render_srt,
    sequence_for_export,
)
from .graph import parse_graph, serialize_graph, validate
from .media import (
    DEFAULT_CONTEXT_BUDGET,
    MediaParams,
    MediaQueue,
    enqueue_media,
    graph_with_assets,
)
from .orchestrator import (
    TaskKind,
    TaskRequest,
    edit_nodes,
    extend_story,
    route_with_reason,
    run_pipeline,
)
from .persistence import Project, load_project, new_project, save_project, take_snapshot


@dataclass
class ServiceConfig:
    project_root: Path
    backend: GenerativeBackend
    worker_count: int = 1
    context_budget: int = DEFAULT_CONTEXT_BUDGET
    # follow-mode event streams poll at this granularity and send a comment
    # line as a heartbeat when nothing happened
    poll_interval_s: float = 0.1
    follow_timeout_s: float = 30.0


def make_backend(
    mode: str = "scripted",
    seed: int = 0,
    base_url: str | None = None,
    api_key_env: str = "STORYGRAPH_API_KEY",
    timeout_s: float = 60.0,
) -> GenerativeBackend:
    if mode == "scripted":
        return ScriptedBackend(seed=seed)
    if mode == "remote":
        if not base_url:
            raise ValueError("remote backend requires a base URL")
        return RemoteBackend(base_url=base_url, api_key_env=api_key_env, timeout_s=timeout_s)
    raise ValueError(f"unknown backend mode {mode!r}")


@dataclass
class ProjectHandle:
    project: Project
    queue: MediaQueue
    lock: threading.RLock = field(default_factory=threading.RLock)


# -- request bodies -------------------------------------------------------------

class CreateProject(BaseModel):
    name: str = "untitled"


class ChatBody(BaseModel):
    utterance: str = ""
    selection: list[str] = []
    command: str | None = None
    expected_version: int | None = None


class AddNodeBody(BaseModel):
    label: str
    segment: str = ""
    connect_from: str | None = None
    connect_to: str | None = None
    expected_version: int | None = None


class PatchNodeBody(BaseModel):
    label: str | None = None
    segment: str | None = None
    x: float | None = None
    y: float | None = None
    expected_version: int | None = None


class SelectionBody(BaseModel):
    selection: list[str]
    expected_version: int | None = None


class MediaBody(BaseModel):
    selection: list[str]
    kind: str
    provider: str = "scripted"
    voice: str | None = None
    style_instructions: str | None = None


class ExportBody(BaseModel):
    nodes: list[str] | None = None
    path: list[str] | None = None


class SnapshotBody(BaseModel):
    reason: str = "manual snapshot"


class RestoreBody(BaseModel):
    snapshot_id: int
    expected_version: int | None = None


class EvalBody(BaseModel):
    corpus: str = "branching"
    backend: str = "scripted"
    seed: int = 0
    check_node_count: bool = True
    jobs: int = 1


# -- error mapping ---------------------------------------------------------------

_STATUS_FOR = (
    (VersionConflict, 409),
    (UnknownNode, 404),
    (BackendFailure, 502),
    (PipelineError, 502),
    (UnparseableDecomposition, 502),
    (IOFailure, 500),
    (CorruptProject, 500),
    (MissingAsset, 500),
    (StoryGraphError, 400),
)


def _error_body(exc: Exception) -> dict[str, Any]:
    body: dict[str, Any] = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("path", "subject", "node_id", "stage", "expected", "got"):
        value = getattr(exc, attr, None)
        if value is not None:
            body[attr] = value
    return body


def _http_error(status: int, error: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": error, "message": message})


_MEDIA_KIND_CUES = (
    (re.compile(r"\bvideo\w*\b", re.IGNORECASE), "video"),
    (re.compile(r"\b(image\w*|picture\w*|illustrat\w*)\b", re.IGNORECASE), "image"),
)


def _kind_from_utterance(utterance: str) -> str:
    for pattern, kind in _MEDIA_KIND_CUES:
        if pattern.search(utterance):
            return kind
    return "audio"


def _graph_payload(project: Project) -> dict[str, Any]:
    return json.loads(serialize_graph(project.graph))


def _assets_payload(project: Project) -> list[dict[str, Any]]:
    return [persistence._asset_doc(a) for a in project.assets]


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="storygraph", docs_url=None, redoc_url=None)
    # the browser UI is served as static files from a separate origin
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["ETag"],
    )
    handles: dict[str, ProjectHandle] = {}
    handles_lock = threading.Lock()
    root = Path(config.project_root)

    def open_handle(project: Project) -> ProjectHandle:
        queue = MediaQueue(
            asset_root=persistence.project_dir(root, project.project_id),
            existing_assets=project.assets,
        )
        # jobs that were mid-flight when the server died stay recorded, as failures
        for job in project.jobs:
            if job.status not in ("done", "failed"):
                job.status = "failed"
                job.error = "interrupted by restart"
                job.finished_at = job.finished_at or time.time()
        queue.adopt_jobs(project.jobs)
        return ProjectHandle(project=project, queue=queue)

    def get_handle(project_id: str) -> ProjectHandle:
        with handles_lock:
            handle = handles.get(project_id)
            if handle is None:
                project = load_project(root, project_id)  # KeyError when absent
                handle = open_handle(project)
                handles[project_id] = handle
            return handle

    def check_version(handle: ProjectHandle, request: Request, body_version: int | None) -> None:
        token = body_version
        if token is None:
            header = request.headers.get("if-match")
            if header is not None:
                token = int(header.strip().strip('"'))
        if token is not None and token != handle.project.version:
            raise VersionConflict(expected=handle.project.version, got=token)

    def commit(handle: ProjectHandle, reason: str, snapshot: bool = True) -> None:
        """Bump, snapshot, sync registries, persist, announce. Lock held by caller."""
        project = handle.project
        project.version += 1
        if snapshot:
            take_snapshot(project, root, reason)
        project.assets = list(handle.queue.all_assets())
        project.jobs = handle.queue.job_list()
        save_project(project, root)
        handle.queue.post_event(
            {"type": "graph_updated", "version": project.version, "reason": reason}
        )

    def drain_async(handle: ProjectHandle) -> None:
        def run() -> None:
            handle.queue.drain(config.backend, config.worker_count)
            with handle.lock:
                project = handle.project
                project.graph = graph_with_assets(project.graph, handle.queue)
                commit(handle, "media jobs finished", snapshot=False)

        threading.Thread(target=run, daemon=True).start()

    @app.exception_handler(StoryGraphError)
    async def on_domain_error(request: Request, exc: StoryGraphError):
        for cls, status in _STATUS_FOR:
            if isinstance(exc, cls):
                return JSONResponse(status_code=status, content=_error_body(exc))
        return JSONResponse(status_code=400, content=_error_body(exc))

    @app.exception_handler(KeyError)
    async def on_missing(request: Request, exc: KeyError):
        return _http_error(404, "NotFound", str(exc.args[0]) if exc.args else "not found")

    @app.exception_handler(ValueError)
    async def on_bad_value(request: Request, exc: ValueError):
        return _http_error(400, "ValueError", str(exc))

    # -- projects ---------------------------------------------------------

    @app.post("/projects", status_code=201)
    def create_project(body: CreateProject):
        project = new_project(body.name)
        handle = open_handle(project)
        with handles_lock:
            handles[project.project_id] = handle
        with handle.lock:
            save_project(project, root)
        return {
            "project_id": project.project_id,
            "name": project.name,
            "version": project.version,
        }

    @app.get("/projects")
    def list_projects():
        known = set(persistence.list_projects(root))
        with handles_lock:
            known.update(handles)
        out = []
        for project_id in sorted(known):
            handle = get_handle(project_id)
            with handle.lock:
                out.append(
                    {
                        "project_id": project_id,
                        "name": handle.project.name,
                        "version": handle.project.version,
                        "nodes": len(handle.project.graph.nodes),
                    }
                )
        return out

    @app.get("/projects/{project_id}")
    def project_meta(project_id: str):
        handle = get_handle(project_id)
        with handle.lock:
            project = handle.project
            return {
                "project_id": project.project_id,
                "name": project.name,
                "version": project.version,
                "nodes": len(project.graph.nodes),
                "story_context": project.graph.story_context,
                "snapshots": [
                    {"snapshot_id": s.snapshot_id, "taken_at": s.taken_at, "reason": s.reason}
                    for s in project.snapshots
                ],
            }

    # -- graph ---------------------------------------------------------------

    @app.get("/projects/{project_id}/graph")
    def get_graph(project_id: str, response: Response):
        handle = get_handle(project_id)
        with handle.lock:
            response.headers["ETag"] = f'"{handle.project.version}"'
            return {
                "version": handle.project.version,
                "graph": _graph_payload(handle.project),
                "assets": _assets_payload(handle.project),
            }

    @app.put("/projects/{project_id}/graph")
    def put_graph(project_id: str, request: Request, payload: dict, response: Response):
        handle = get_handle(project_id)
        with handle.lock:
            check_version(handle, request, payload.get("expected_version"))
            doc = payload.get("graph", payload)
            graph = parse_graph(json.dumps(doc), lenient=True)
            report = validate(graph)
            if not report.ok:
                first = report.violations[0]
                raise IntegrityViolation(first.message, subject=first.subject)
            old = handle.project.graph
            for node in graph.nodes:
                if old.has_node(node.id) and old.node(node.id).segment != node.segment:
                    handle.queue.mark_node_stale(node.id)
            graph = replace(graph, story_context=old.story_context)
            handle.project.graph = graph_with_assets(graph, handle.queue)
            commit(handle, "graph replaced")
            response.headers["ETag"] = f'"{handle.project.version}"'
            return {"version": handle.project.version, "graph": _graph_payload(handle.project)}

    # -- chat -------------------------------------------------------------------

    @app.post("/projects/{project_id}/chat")
    def chat(project_id: str, request: Request, body: ChatBody):
        handle = get_handle(project_id)
        with handle.lock:
            check_version(handle, request, body.expected_version)
            project = handle.project
            task = TaskRequest(
                utterance=body.utterance,
                selection=frozenset(body.selection),
                graph_present=bool(project.graph.nodes),
                explicit_command=body.command,
            )
            kind, reason = route_with_reason(task)
            out: dict[str, Any] = {"task_kind": kind.value, "routing_reason": reason}

            if kind is TaskKind.GENERATE:
                run = run_pipeline(body.utterance, config.backend)
                for node in project.graph.nodes:
                    handle.queue.mark_node_stale(node.id)
                narrative = run.transcripts[0].response
                project.graph = graph_with_assets(
                    replace(run.graph, story_context=narrative), handle.queue
                )
                project.transcripts.extend(run.transcripts)
                out["warnings"] = list(run.warnings)
                commit(handle, f"chat generate: {body.utterance[:60]}")

            elif kind is TaskKind.EDIT:
                selection = set(body.selection) or set(project.graph.node_ids())
                before = {nid: project.graph.node(nid).segment for nid in selection}
                edited = edit_nodes(project.graph, selection, body.utterance, config.backend)
                for nid, old_segment in before.items():
                    if edited.node(nid).segment != old_segment:
                        handle.queue.mark_node_stale(nid)
                project.graph = graph_with_assets(edited, handle.queue)
                out["edited"] = sorted(selection, key=graphmod._natural_id_key)
                commit(handle, f"chat edit: {body.utterance[:60]}")

            elif kind is TaskKind.EXTEND:
                extended, new_id = extend_story(
                    project.graph, body.utterance, config.backend, body.selection
                )
                project.graph = extended
                out["added"] = new_id
                commit(handle, f"chat extend: {body.utterance[:60]}")

            elif kind is TaskKind.MEDIA_GEN:
                params = MediaParams(kind=_kind_from_utterance(body.utterance))
                jobs = enqueue_media(
                    project.graph,
                    body.selection,
                    params,
                    queue=handle.queue,
                    char_budget=config.context_budget,
                )
                out["job_ids"] = [job.job_id for job in jobs]
                drain_async(handle)

            else:  # TaskKind.EXPORT
                destination = persistence.project_dir(root, project_id) / "export"
                inventory = export_bundle(
                    project.graph,
                    destination,
                    asset_root=persistence.project_dir(root, project_id),
                )
                out["files"] = list(inventory.files)
                out["warnings"] = list(inventory.warnings)

            out["version"] = project.version
            if kind in (TaskKind.GENERATE, TaskKind.EDIT, TaskKind.EXTEND):
                out["graph"] = _graph_payload(project)
            return out

    # -- structural edits ----------------------------------------------------------

    @app.post("/projects/{project_id}/nodes", status_code=201)
    def add_node(project_id: str, request: Request, body: AddNodeBody):
        handle = get_handle(project_id)
        with handle.lock:
            check_version(handle, request, body.expected_version)
            project = handle.project
            new_id = graphmod.fresh_node_id(project.graph)
            project.graph = graphmod.add_node(
                project.graph,
                label=body.label,
                segment=body.segment,
                connect_from=body.connect_from,
                connect_to=body.connect_to,
            )
            commit(handle, f"node {new_id} added")
            return {
                "node_id": new_id,
                "version": project.version,
                "graph": _graph_payload(project),
            }

    @app.patch("/projects/{project_id}/nodes/{node_id}")
    def patch_node(project_id: str, node_id: str, request: Request, body: PatchNodeBody):
        handle = get_handle(project_id)
        with handle.lock:
            check_version(handle, request, body.expected_version)
            project = handle.project
            graph = project.graph
            node = graph.node(node_id)  # raises UnknownNode before any change
            changed_segment = body.segment is not None and node.segment != body.segment
            if body.label is not None or body.segment is not None:
                graph = graphmod.update_node_text(
                    graph, node_id, label=body.label, segment=body.segment
                )
            if (body.x is None) != (body.y is None):
                raise ValueError("x and y must be given together")
            if body.x is not None and body.y is not None:
                graph = graphmod.move_node(graph, node_id, body.x, body.y)
            if changed_segment:
                handle.queue.mark_node_stale(node_id)
            project.graph = graph_with_assets(graph, handle.queue)
            commit(handle, f"node {node_id} updated")
            return {"version": project.version, "graph": _graph_payload(project)}

    @app.delete("/projects/{project_id}/nodes")
    def delete_nodes(project_id: str, request: Request, body: SelectionBody):
        handle = get_handle(project_id)
        with handle.lock:
            check_version(handle, request, body.expected_version)
            project = handle.project
            project.graph = graphmod.remove_nodes(project.graph, body.selection)
            commit(handle, f"nodes removed: {', '.join(sorted(body.selection))}")
            return {"version": project.version, "graph": _graph_payload(project)}

    @app.post("/projects/{project_id}/duplicate")
    def duplicate(project_id: str, request: Request, body: SelectionBody):
        handle = get_handle(project_id)
        with handle.lock:
            check_version(handle, request, body.expected_version)
            project = handle.project
            project.graph, mapping = graphmod.duplicate_subgraph(project.graph, body.selection)
            commit(handle, "subgraph duplicated")
            return {
                "mapping": mapping,
                "version": project.version,
                "graph": _graph_payload(project),
            }

    # -- media ---------------------------------------------------------------------

    @app.post("/projects/{project_id}/media", status_code=202)
    def post_media(project_id: str, body: MediaBody):
        handle = get_handle(project_id)
        with handle.lock:
            params = MediaParams(
                kind=body.kind,
                provider=body.provider,
                voice=body.voice,
                style_instructions=body.style_instructions,
            )
            jobs = enqueue_media(
                handle.project.graph,
                body.selection,
                params,
                queue=handle.queue,
                char_budget=config.context_budget,
            )
            job_ids = [job.job_id for job in jobs]
            version = handle.project.version
        drain_async(handle)
        return {"job_ids": job_ids, "version": version}

    @app.get("/projects/{project_id}/jobs")
    def list_jobs(project_id: str):
        handle = get_handle(project_id)
        jobs = [persistence._job_doc(job) for job in handle.queue.job_list()]
        jobs.sort(key=lambda j: j["submitted_at"])
        return {"jobs": jobs}

    @app.get("/projects/{project_id}/events")
    def events(project_id: str, since: int = 0, follow: bool = False):
        handle = get_handle(project_id)

        def stream() -> Iterator[str]:
            last = since
            deadline = time.monotonic() + config.follow_timeout_s
            while True:
                batch = handle.queue.events_since(last)
                for event in batch:
                    last = event["seq"]
                    yield f"id: {event['seq']}\ndata: {json.dumps(event)}\n\n"
                if not follow:
                    return
                if time.monotonic() >= deadline:
                    return
                if not batch:
                    yield ": heartbeat\n\n"
                    with handle.queue.updated:
                        handle.queue.updated.wait(config.poll_interval_s)

        return StreamingResponse(stream(), media_type="text/event-stream")

    # -- export -----------------------------------------------------------------------

    def _order(handle: ProjectHandle, nodes: list[str] | None, path: list[str] | None):
        return sequence_for_export(handle.project.graph, nodes=nodes, path=path)

    @app.post("/projects/{project_id}/export")
    def post_export(project_id: str, body: ExportBody):
        handle = get_handle(project_id)
        with handle.lock:
            destination = persistence.project_dir(root, project_id) / "export"
            inventory = export_bundle(
                handle.project.graph,
                destination,
                nodes=body.nodes,
                path=body.path,
                asset_root=persistence.project_dir(root, project_id),
            )
            return {"files": list(inventory.files), "warnings": list(inventory.warnings)}

    @app.get("/projects/{project_id}/export/manifest")
    def get_manifest(project_id: str, path: str | None = None):
        handle = get_handle(project_id)
        with handle.lock:
            chosen = path.split(",") if path else None
            order = _order(handle, None, chosen)
            manifest = build_manifest(handle.project.graph, order)
            return json.loads(manifest_document(manifest))

    @app.get("/projects/{project_id}/export/srt")
    def get_srt(project_id: str, path: str | None = None):
        handle = get_handle(project_id)
        with handle.lock:
            chosen = path.split(",") if path else None
            manifest = build_manifest(handle.project.graph, _order(handle, None, chosen))
            return PlainTextResponse(render_srt(manifest))

    @app.get("/projects/{project_id}/export/storyboard")
    def get_storyboard(project_id: str, path: str | None = None):
        handle = get_handle(project_id)
        with handle.lock:
            chosen = path.split(",") if path else None
            text = export_storyboard(handle.project.graph, _order(handle, None, chosen))
            return PlainTextResponse(text, media_type="text/markdown")

    # -- snapshots ---------------------------------------------------------------------

    @app.get("/projects/{project_id}/snapshots")
    def list_snapshots(project_id: str):
        handle = get_handle(project_id)
        with handle.lock:
            return {
                "snapshots": [
                    {"snapshot_id": s.snapshot_id, "taken_at": s.taken_at, "reason": s.reason}
                    for s in handle.project.snapshots
                ]
            }

    @app.post("/projects/{project_id}/snapshots", status_code=201)
    def post_snapshot(project_id: str, body: SnapshotBody):
        handle = get_handle(project_id)
        with handle.lock:
            snapshot_id = take_snapshot(handle.project, root, body.reason)
            save_project(handle.project, root)
            return {"snapshot_id": snapshot_id, "version": handle.project.version}

    @app.post("/projects/{project_id}/restore")
    def restore(project_id: str, request: Request, body: RestoreBody):
        handle = get_handle(project_id)
        with handle.lock:
            check_version(handle, request, body.expected_version)
            handle.project.assets = list(handle.queue.all_assets())
            handle.project.jobs = handle.queue.job_list()
            pre_id = persistence.restore_snapshot(handle.project, root, body.snapshot_id)
            handle.queue.post_event(
                {
                    "type": "graph_updated",
                    "version": handle.project.version,
                    "reason": f"restored snapshot {body.snapshot_id}",
                }
            )
            return {
                "version": handle.project.version,
                "pre_restore_snapshot": pre_id,
                "graph": _graph_payload(handle.project),
            }

    @app.get("/projects/{project_id}/transcripts")
    def transcripts(project_id: str):
        handle = get_handle(project_id)
        with handle.lock:
            return {
                "transcripts": [
                    {"stage": t.stage, "prompt": t.prompt, "response": t.response}
                    for t in handle.project.transcripts
                ]
            }

    @app.get("/projects/{project_id}/assets/{node_id}/{filename}")
    def asset_file(project_id: str, node_id: str, filename: str):
        handle = get_handle(project_id)
        base = (persistence.project_dir(root, project_id) / "assets").resolve()
        target = (base / node_id / filename).resolve()
        # refuse any path that escapes the project's asset directory
        if not target.is_relative_to(base) or not target.is_file():
            raise KeyError(f"assets/{node_id}/{filename}")
        media_type = {
            ".mp3": "audio/mpeg",
            ".mp4": "video/mp4",
            ".png": "image/png",
        }.get(target.suffix, "application/octet-stream")
        return FileResponse(target, media_type=media_type)

    # -- evaluation --------------------------------------------------------------------

    @app.post("/eval")
    def eval_endpoint(body: EvalBody):
        if body.corpus not in ("branching", "linear"):
            raise ValueError("corpus must be 'branching' or 'linear'")
        if body.backend == "scripted":
            backend: GenerativeBackend = ScriptedBackend(seed=body.seed)
        elif body.backend == "service":
            backend = config.backend
        else:
            raise ValueError("backend must be 'scripted' or 'service'")
        prompts = load_corpus(body.corpus)
        records = run_eval(
            prompts, backend, check_node_count=body.check_node_count, jobs=body.jobs
        )
        summary = summarize(records)
        label = body.corpus.capitalize()
        return {
            "corpus": body.corpus,
            "k": summary.k,
            "n": summary.n,
            "rate": summary.rate,
            "ci_low": summary.ci_low,
            "ci_high": summary.ci_high,
            "records": [
                {
                    "prompt": r.prompt,
                    "expected": r.expected.value,
                    "observed": r.observed.value
                    if hasattr(r.observed, "value")
                    else str(r.observed),
                    "node_count": r.node_count,
                    "passed": r.passed,
                }
                for r in records
            ],
            "table": render_summary_table([(label, summary)]),
        }

    return app


def serve(config: ServiceConfig, host: str = "127.0.0.1", port: int = 8321) -> None:
    """Run the app under uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="warning")
