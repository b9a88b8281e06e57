"""Rolling story context, the media job queue, and versioned assets.

Media generation never touches node text: jobs read segments as prompts and
attach assets to nodes. Versions per (node, kind) are consecutive integers;
regenerating marks the prior version stale but keeps it, so earlier takes
stay retrievable.
"""

from __future__ import annotations

import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

from . import graph as graphmod
from .backends import GenerativeBackend
from .errors import EmptySegment, EmptySelection, StoryGraphError, UnknownNode
from .graph import StoryGraph

MEDIA_KINDS = ("audio", "image", "video")
DEFAULT_CONTEXT_BUDGET = 4000

JOB_STATES = ("queued", "running", "done", "failed")
_LEGAL_TRANSITIONS = {("queued", "running"), ("running", "done"), ("running", "failed")}


@dataclass(frozen=True)
class MediaParams:
    kind: str
    provider: str = "scripted"
    voice: str | None = None
    style_instructions: str | None = None

    def __post_init__(self):
        if self.kind not in MEDIA_KINDS:
            raise ValueError(f"kind must be one of {MEDIA_KINDS}, got {self.kind!r}")
        if self.voice is not None and self.kind != "audio":
            raise ValueError("voice is only meaningful for audio")


@dataclass(frozen=True)
class MediaAsset:
    asset_id: str
    node_id: str
    kind: str
    version: int
    uri: str
    duration_s: float | None = None
    stale: bool = False
    params: MediaParams | None = None
    created_at: float = 0.0


@dataclass
class MediaJob:
    job_id: str
    node_id: str
    params: MediaParams
    prompt: str
    context: str = ""
    status: str = "queued"
    error: str | None = None
    submitted_at: float = field(default_factory=time.time)
    finished_at: float | None = None
    asset: MediaAsset | None = None


@dataclass(frozen=True)
class RollingContext:
    text: str
    char_budget: int = DEFAULT_CONTEXT_BUDGET


def ancestors(graph: StoryGraph, node_id: str) -> set[str]:
    """All nodes with a directed path to node_id."""
    if not graph.has_node(node_id):
        raise UnknownNode(node_id)
    seen: set[str] = set()
    frontier = [node_id]
    while frontier:
        current = frontier.pop()
        for pred in graph.predecessors(current):
            if pred not in seen:
                seen.add(pred)
                frontier.append(pred)
    return seen


def rolling_context(
    graph: StoryGraph, node_id: str, char_budget: int = DEFAULT_CONTEXT_BUDGET
) -> RollingContext:
    """Ancestor segments in narrative order, blank-line joined, trimmed from
    the front (oldest characters dropped first) to fit the budget."""
    lineage = ancestors(graph, node_id)
    if not lineage:
        return RollingContext(text="", char_budget=char_budget)
    ordered = [nid for nid in graphmod.topological_order(graph) if nid in lineage]
    text = "\n\n".join(graph.node(nid).segment for nid in ordered)
    if len(text) > char_budget:
        text = text[len(text) - char_budget:]
    return RollingContext(text=text, char_budget=char_budget)


def enqueue_media(
    graph: StoryGraph,
    selection: Iterable[str],
    params: MediaParams,
    queue: "MediaQueue | None" = None,
    char_budget: int = DEFAULT_CONTEXT_BUDGET,
) -> list[MediaJob]:
    """One queued job per selected node, in narrative order.

    The node's segment is the prompt; image and video jobs also carry the
    rolling context. Validation happens up front so a bad selection queues
    nothing at all.
    """
    chosen = set(selection)
    if not chosen:
        raise EmptySelection()
    for node_id in chosen:
        if not graph.has_node(node_id):
            raise UnknownNode(node_id)
        if not graph.node(node_id).segment.strip():
            raise EmptySegment(node_id)

    jobs = []
    for node_id in graphmod.topological_order(graph, selection=chosen):
        context = ""
        if params.kind in ("image", "video"):
            context = rolling_context(graph, node_id, char_budget).text
        jobs.append(
            MediaJob(
                job_id=uuid.uuid4().hex[:12],
                node_id=node_id,
                params=params,
                prompt=graph.node(node_id).segment,
                context=context,
            )
        )
    if queue is not None:
        queue.enqueue(jobs)
    return jobs


class MediaQueue:
    """Thread-safe job queue and per-project asset registry.

    Workers pull jobs concurrently; state transitions, version assignment,
    and event emission happen under one lock, so observers see a single
    linearized event stream and versions per (node, kind) are consecutive.
    """

    def __init__(
        self,
        asset_root: Path | None = None,
        existing_assets: Iterable[MediaAsset] = (),
    ):
        self._lock = threading.Lock()
        self.updated = threading.Condition(self._lock)
        self._pending: deque[MediaJob] = deque()
        self.jobs: dict[str, MediaJob] = {}
        self.events: list[dict[str, Any]] = []
        self.asset_root = Path(asset_root) if asset_root is not None else None
        self._assets: dict[tuple[str, str], list[MediaAsset]] = {}
        for asset in existing_assets:
            self._assets.setdefault((asset.node_id, asset.kind), []).append(asset)
        for versions in self._assets.values():
            versions.sort(key=lambda a: a.version)

    # -- events ---------------------------------------------------------

    def _emit(self, event: dict[str, Any]) -> None:
        # callers hold self._lock
        event["seq"] = len(self.events) + 1
        event["ts"] = time.time()
        self.events.append(event)
        self.updated.notify_all()

    def events_since(self, seq: int = 0) -> list[dict[str, Any]]:
        with self._lock:
            return [e for e in self.events if e["seq"] > seq]

    def post_event(self, event: dict[str, Any]) -> None:
        """Append a caller-supplied event (graph updates, pipeline progress)
        to the same linearized stream the job events use."""
        with self._lock:
            self._emit(dict(event))

    # -- enqueue / drain --------------------------------------------------

    def enqueue(self, jobs: Iterable[MediaJob]) -> None:
        jobs = list(jobs)
        with self._lock:
            for job in jobs:
                if job.job_id in self.jobs:
                    raise ValueError(f"job {job.job_id} already enqueued")
                self.jobs[job.job_id] = job
                self._pending.append(job)
            self._emit(
                {
                    "type": "jobs_enqueued",
                    "job_ids": [j.job_id for j in jobs],
                    "node_ids": [j.node_id for j in jobs],
                    "kind": jobs[0].params.kind if jobs else None,
                }
            )

    def _transition(self, job: MediaJob, status: str, **extra: Any) -> None:
        # callers hold self._lock
        if (job.status, status) not in _LEGAL_TRANSITIONS:
            raise StoryGraphError(
                f"illegal job transition {job.status} -> {status} for {job.job_id}"
            )
        job.status = status
        event = {
            "type": "job_status",
            "job_id": job.job_id,
            "node_id": job.node_id,
            "kind": job.params.kind,
            "status": status,
        }
        event.update(extra)
        self._emit(event)

    def _take(self) -> MediaJob | None:
        with self._lock:
            if not self._pending:
                return None
            job = self._pending.popleft()
            self._transition(job, "running")
            return job

    def _next_version(self, node_id: str, kind: str) -> int:
        versions = self._assets.get((node_id, kind), [])
        return versions[-1].version + 1 if versions else 1

    def _record_asset(self, job: MediaJob, result_metadata: Mapping[str, Any],
                      payload: bytes) -> MediaAsset:
        # callers hold self._lock
        node_id, kind = job.node_id, job.params.kind
        version = self._next_version(node_id, kind)
        ext = str(result_metadata.get("ext", ".bin"))
        uri = f"assets/{node_id}/{kind}-v{version}{ext}"
        duration = result_metadata.get("duration_s")
        asset = MediaAsset(
            asset_id=f"{node_id}:{kind}:v{version}",
            node_id=node_id,
            kind=kind,
            version=version,
            uri=uri,
            duration_s=float(duration) if duration is not None else None,
            stale=False,
            params=job.params,
            created_at=time.time(),
        )
        shelf = self._assets.setdefault((node_id, kind), [])
        for i, prior in enumerate(shelf):
            if not prior.stale:
                shelf[i] = replace(prior, stale=True)
        shelf.append(asset)
        if self.asset_root is not None:
            target = self.asset_root / uri
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(payload)
        return asset

    def _run_one(self, job: MediaJob, backend: GenerativeBackend) -> None:
        params: dict[str, Any] = {"context": job.context}
        if job.params.voice is not None:
            params["voice"] = job.params.voice
        if job.params.style_instructions is not None:
            params["style"] = job.params.style_instructions
        try:
            result = backend.complete(job.params.kind, job.prompt, params)
        except Exception as exc:
            with self._lock:
                job.error = str(exc)
                job.finished_at = time.time()
                self._transition(job, "failed", error=job.error)
            return
        with self._lock:
            asset = self._record_asset(job, result.metadata, result.payload)
            job.asset = asset
            job.finished_at = time.time()
            self._transition(
                job, "done", version=asset.version, asset_id=asset.asset_id
            )

    def drain(self, backend: GenerativeBackend, worker_count: int = 1) -> list[dict[str, Any]]:
        """Process every pending job with worker_count threads; returns the
        events emitted during this drain, in emission order."""
        with self._lock:
            start_seq = len(self.events)

        def work():
            while True:
                job = self._take()
                if job is None:
                    return
                self._run_one(job, backend)

        if worker_count <= 1:
            work()
        else:
            threads = [threading.Thread(target=work) for _ in range(worker_count)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        return self.events_since(start_seq)

    # -- asset registry ----------------------------------------------------

    def job_list(self) -> list[MediaJob]:
        with self._lock:
            return list(self.jobs.values())

    def adopt_jobs(self, jobs: Iterable[MediaJob]) -> None:
        """Register already-terminal jobs (from a reloaded project) without
        queueing or re-running them. Emits no events."""
        with self._lock:
            for job in jobs:
                if job.status not in ("done", "failed"):
                    raise ValueError(f"cannot adopt non-terminal job {job.job_id}")
                self.jobs.setdefault(job.job_id, job)

    def assets_for(self, node_id: str) -> tuple[MediaAsset, ...]:
        with self._lock:
            out: list[MediaAsset] = []
            for (nid, _kind), versions in sorted(self._assets.items()):
                if nid == node_id:
                    out.extend(versions)
            return tuple(out)

    def all_assets(self) -> tuple[MediaAsset, ...]:
        with self._lock:
            return tuple(
                asset
                for _key, versions in sorted(self._assets.items())
                for asset in versions
            )

    def mark_node_stale(self, node_id: str) -> None:
        """Flag every recorded asset for the node as stale.

        Call this when the node's text changes: the registry is the source
        of truth for asset state, so staleness set only on a graph copy
        would be lost on the next reattach.
        """
        with self._lock:
            for (nid, _kind), versions in self._assets.items():
                if nid == node_id:
                    versions[:] = [replace(a, stale=True) for a in versions]


def process_jobs(
    queue: MediaQueue, backend: GenerativeBackend, worker_count: int = 1
) -> list[dict[str, Any]]:
    """Drain the queue; returns the linearized event stream for the drain."""
    return queue.drain(backend, worker_count)


def graph_with_assets(graph: StoryGraph, queue: MediaQueue) -> StoryGraph:
    """New graph whose nodes carry the queue's asset records.

    Nodes the queue knows nothing about keep their existing asset tuples.
    Never touches labels, segments, positions, or edges.
    """
    out = graph
    for node in graph.nodes:
        recorded = queue.assets_for(node.id)
        if recorded:
            out = out.replace_node(replace(out.node(node.id), assets=recorded))
    return out


def current_assets(graph: StoryGraph, node_id: str) -> dict[str, MediaAsset]:
    """The one non-stale asset per kind attached to the node."""
    node = graph.node(node_id)
    out: dict[str, MediaAsset] = {}
    for asset in node.assets:
        if not asset.stale:
            out[asset.kind] = asset
    return out
