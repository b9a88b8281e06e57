"""Project storage: one JSON document of record per project.

``project.json`` is the single source of truth and is always replaced
atomically, so a crash mid-save leaves either the old state or the new one,
never a blend. Snapshot files are written before the document that indexes
them; ``graph.json`` is a convenience mirror written last and never read back.
"""

from __future__ import annotations

import json
import os
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import CorruptProject, IOFailure, StoryGraphError
from .graph import StoryGraph, parse_graph, serialize_graph, validate
from .media import MediaAsset, MediaJob, MediaParams
from .orchestrator import StageTranscript

FORMAT = 1

# Alias so tests can inject faults at the commit point of an atomic write.
_replace = os.replace


@dataclass(frozen=True)
class SnapshotInfo:
    snapshot_id: int
    taken_at: float
    reason: str


@dataclass
class Project:
    """In-memory image of everything ``project.json`` records."""

    project_id: str
    name: str
    graph: StoryGraph
    version: int = 1
    created_at: float = field(default_factory=time.time)
    assets: list[MediaAsset] = field(default_factory=list)
    jobs: list[MediaJob] = field(default_factory=list)
    transcripts: list[StageTranscript] = field(default_factory=list)
    snapshots: list[SnapshotInfo] = field(default_factory=list)


def new_project(name: str, project_id: str | None = None) -> Project:
    return Project(
        project_id=project_id or uuid.uuid4().hex[:12],
        name=name,
        graph=StoryGraph(nodes=(), edges=()),
    )


def project_dir(root: Path, project_id: str) -> Path:
    return Path(root) / project_id


def list_projects(root: Path) -> list[str]:
    root = Path(root)
    if not root.is_dir():
        return []
    return sorted(p.name for p in root.iterdir() if (p / "project.json").is_file())


# -- document mapping ---------------------------------------------------------

def _params_doc(params: MediaParams | None) -> dict | None:
    if params is None:
        return None
    return {
        "kind": params.kind,
        "provider": params.provider,
        "voice": params.voice,
        "style_instructions": params.style_instructions,
    }


def _params_from(doc: dict | None) -> MediaParams | None:
    if doc is None:
        return None
    return MediaParams(
        kind=doc["kind"],
        provider=doc.get("provider", "scripted"),
        voice=doc.get("voice"),
        style_instructions=doc.get("style_instructions"),
    )


def _asset_doc(asset: MediaAsset) -> dict:
    return {
        "asset_id": asset.asset_id,
        "node_id": asset.node_id,
        "kind": asset.kind,
        "version": asset.version,
        "uri": asset.uri,
        "duration_s": asset.duration_s,
        "stale": asset.stale,
        "params": _params_doc(asset.params),
        "created_at": asset.created_at,
    }


def _asset_from(doc: dict) -> MediaAsset:
    return MediaAsset(
        asset_id=doc["asset_id"],
        node_id=doc["node_id"],
        kind=doc["kind"],
        version=int(doc["version"]),
        uri=doc["uri"],
        duration_s=doc.get("duration_s"),
        stale=bool(doc.get("stale", False)),
        params=_params_from(doc.get("params")),
        created_at=float(doc.get("created_at", 0.0)),
    )


def _job_doc(job: MediaJob) -> dict:
    return {
        "job_id": job.job_id,
        "node_id": job.node_id,
        "params": _params_doc(job.params),
        "prompt": job.prompt,
        "context": job.context,
        "status": job.status,
        "error": job.error,
        "submitted_at": job.submitted_at,
        "finished_at": job.finished_at,
        "asset_id": job.asset.asset_id if job.asset else None,
    }


def _job_from(doc: dict, assets_by_id: dict[str, MediaAsset]) -> MediaJob:
    return MediaJob(
        job_id=doc["job_id"],
        node_id=doc["node_id"],
        params=_params_from(doc["params"]),
        prompt=doc.get("prompt", ""),
        context=doc.get("context", ""),
        status=doc.get("status", "queued"),
        error=doc.get("error"),
        submitted_at=float(doc.get("submitted_at", 0.0)),
        finished_at=doc.get("finished_at"),
        asset=assets_by_id.get(doc.get("asset_id") or ""),
    )


def project_document(project: Project) -> dict:
    return {
        "format": FORMAT,
        "project_id": project.project_id,
        "name": project.name,
        "version": project.version,
        "created_at": project.created_at,
        "story_context": project.graph.story_context,
        "graph": json.loads(serialize_graph(project.graph)),
        "assets": [_asset_doc(a) for a in project.assets],
        "jobs": [_job_doc(j) for j in project.jobs],
        "transcripts": [
            {"stage": t.stage, "prompt": t.prompt, "response": t.response}
            for t in project.transcripts
        ],
        "snapshots": [
            {"snapshot_id": s.snapshot_id, "taken_at": s.taken_at, "reason": s.reason}
            for s in project.snapshots
        ],
    }


def attach_assets(graph: StoryGraph, assets: list[MediaAsset]) -> StoryGraph:
    """Hang registry records off the nodes they belong to.

    Records for nodes no longer in the graph are kept in the registry but
    attach nowhere; ordering matches the queue's (kind, then version).
    """
    by_node: dict[str, list[MediaAsset]] = {}
    for asset in sorted(assets, key=lambda a: (a.node_id, a.kind, a.version)):
        by_node.setdefault(asset.node_id, []).append(asset)
    out = graph
    for node in graph.nodes:
        recorded = by_node.get(node.id)
        if recorded:
            out = out.replace_node(replace(out.node(node.id), assets=tuple(recorded)))
    return out


def project_from_document(doc: dict) -> Project:
    if not isinstance(doc, dict):
        raise CorruptProject("project document is not a JSON object")
    if doc.get("format") != FORMAT:
        raise CorruptProject(f"unsupported project format {doc.get('format')!r}")
    try:
        graph = parse_graph(json.dumps(doc["graph"]), lenient=True)
        report = validate(graph)
        if not report.ok:
            first = report.violations[0]
            raise CorruptProject(f"stored graph fails validation: {first.message}")
        if doc.get("story_context") is not None:
            graph = replace(graph, story_context=doc["story_context"])
        assets = [_asset_from(a) for a in doc.get("assets", [])]
        assets_by_id = {a.asset_id: a for a in assets}
        graph = attach_assets(graph, assets)
        return Project(
            project_id=doc["project_id"],
            name=doc["name"],
            graph=graph,
            version=int(doc["version"]),
            created_at=float(doc.get("created_at", 0.0)),
            assets=assets,
            jobs=[_job_from(j, assets_by_id) for j in doc.get("jobs", [])],
            transcripts=[
                StageTranscript(t["stage"], t["prompt"], t["response"])
                for t in doc.get("transcripts", [])
            ],
            snapshots=[
                SnapshotInfo(int(s["snapshot_id"]), float(s["taken_at"]), s["reason"])
                for s in doc.get("snapshots", [])
            ],
        )
    except CorruptProject:
        raise
    except (StoryGraphError, KeyError, TypeError, ValueError) as exc:
        raise CorruptProject(f"project document is invalid: {exc}") from exc


# -- disk ----------------------------------------------------------------------

def _atomic_write_text(path: Path, text: str) -> None:
    """Write via a sibling temp file, then rename over the target.

    The rename is the commit point; a crash before it leaves the old file
    intact, and stray ``.tmp-`` files are ignored by every reader.
    """
    tmp = path.parent / f".tmp-{uuid.uuid4().hex[:8]}-{path.name}"
    try:
        tmp.write_text(text, encoding="utf-8")
        _replace(str(tmp), str(path))
    finally:
        if tmp.exists():
            try:
                tmp.unlink()
            except OSError:
                pass


def save_project(project: Project, root: Path) -> Path:
    """Persist the project; returns its directory.

    Order matters: the document of record first, the ``graph.json`` mirror
    last. The mirror exists for people poking at the directory and is never
    read back, so losing it costs nothing.
    """
    directory = project_dir(root, project.project_id)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        doc = project_document(project)
        _atomic_write_text(
            directory / "project.json",
            json.dumps(doc, indent=2, ensure_ascii=False) + "\n",
        )
        _atomic_write_text(directory / "graph.json", serialize_graph(project.graph))
    except OSError as exc:
        raise IOFailure(f"could not save project {project.project_id}: {exc}") from exc
    return directory


def load_project(root: Path, project_id: str) -> Project:
    path = project_dir(root, project_id) / "project.json"
    if not path.is_file():
        raise KeyError(f"no such project: {project_id}")
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"could not read {path}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorruptProject(f"project.json is not valid JSON: {exc}") from exc
    project = project_from_document(doc)
    if project.project_id != project_id:
        raise CorruptProject(
            f"directory {project_id!r} holds project {project.project_id!r}"
        )
    return project


# -- snapshots -------------------------------------------------------------------

def take_snapshot(project: Project, root: Path, reason: str) -> int:
    """Record the current graph as a numbered snapshot.

    The snapshot file is written (atomically) before the index entry is
    added, so a crash in between leaves an orphan file, never a dangling
    index entry. The caller still owns saving project.json.
    """
    snapshot_id = max((s.snapshot_id for s in project.snapshots), default=0) + 1
    info = SnapshotInfo(snapshot_id=snapshot_id, taken_at=time.time(), reason=reason)
    directory = project_dir(root, project.project_id) / "snapshots"
    doc = {
        "snapshot_id": snapshot_id,
        "taken_at": info.taken_at,
        "reason": reason,
        "version": project.version,
        "story_context": project.graph.story_context,
        "graph": json.loads(serialize_graph(project.graph)),
    }
    try:
        directory.mkdir(parents=True, exist_ok=True)
        _atomic_write_text(
            directory / f"{snapshot_id}.json",
            json.dumps(doc, indent=2, ensure_ascii=False) + "\n",
        )
    except OSError as exc:
        raise IOFailure(f"could not write snapshot {snapshot_id}: {exc}") from exc
    project.snapshots.append(info)
    return snapshot_id


def load_snapshot(root: Path, project_id: str, snapshot_id: int) -> StoryGraph:
    """The graph (structure and text, no asset attachments) as snapshotted."""
    path = project_dir(root, project_id) / "snapshots" / f"{snapshot_id}.json"
    if not path.is_file():
        raise KeyError(f"no snapshot {snapshot_id} for project {project_id}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        graph = parse_graph(json.dumps(doc["graph"]), lenient=True)
        if doc.get("story_context") is not None:
            graph = replace(graph, story_context=doc["story_context"])
        return graph
    except OSError as exc:
        raise IOFailure(f"could not read snapshot {snapshot_id}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, StoryGraphError) as exc:
        raise CorruptProject(f"snapshot {snapshot_id} is invalid: {exc}") from exc


def restore_snapshot(project: Project, root: Path, snapshot_id: int) -> int:
    """Make an earlier snapshot current again, non-destructively.

    The pre-restore state is snapshotted first so the restore itself can be
    undone. Asset records survive untouched and reattach to whichever of
    their nodes still exist. Returns the id of the pre-restore snapshot.
    """
    restored = load_snapshot(root, project.project_id, snapshot_id)
    pre_id = take_snapshot(project, root, reason=f"before restore of snapshot {snapshot_id}")
    project.graph = attach_assets(restored, project.assets)
    project.version += 1
    save_project(project, root)
    return pre_id
