"""Compiling a story graph into deliverables.

An export picks a node order, lays the nodes on a timeline (audio asset
durations when present, narration-rate estimates otherwise), and renders
the timeline as a manifest, SRT subtitles, a storyboard, or a full bundle
directory. Media muxing is out of scope: the manifest is the contract a
compositor consumes.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from . import graph as graphmod
from . import media as mediamod
from .errors import EmptyOrder, InvalidPath, IOFailure, MissingAsset
from .graph import StoryGraph, TopologyClass
from .media import MediaAsset

WORDS_PER_SECOND = 2.5
MIN_ENTRY_SECONDS = 1.0


@dataclass(frozen=True)
class ManifestEntry:
    node_id: str
    label: str
    segment: str
    assets: dict[str, MediaAsset]  # current asset per kind
    start_s: float
    end_s: float

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class ExportManifest:
    entries: tuple[ManifestEntry, ...]
    total_duration_s: float


@dataclass(frozen=True)
class SubtitleCue:
    index: int
    start_s: float
    end_s: float
    text: str


@dataclass(frozen=True)
class SubtitleTrack:
    cues: tuple[SubtitleCue, ...]


@dataclass(frozen=True)
class BundleInventory:
    files: tuple[str, ...]  # paths relative to the destination
    warnings: tuple[str, ...] = ()


def sequence_for_export(
    graph: StoryGraph,
    nodes: Iterable[str] | None = None,
    path: Sequence[str] | None = None,
) -> list[str]:
    """Node order for an export.

    No arguments: the full graph in narrative order. ``nodes``: the induced
    order on that subset. ``path``: one of the graph's root-to-sink paths,
    taken verbatim.
    """
    if nodes is not None and path is not None:
        raise ValueError("pass nodes or path, not both")
    if path is not None:
        wanted = list(path)
        if wanted not in graphmod.enumerate_paths(graph):
            raise InvalidPath(f"{wanted} is not a root-to-sink path of this graph")
        return wanted
    if nodes is not None:
        return graphmod.topological_order(graph, selection=nodes)
    return graphmod.topological_order(graph)


def _entry_duration(node: graphmod.StoryNode, current: dict[str, MediaAsset]) -> float:
    audio = current.get("audio")
    if audio is not None and audio.duration_s is not None:
        return audio.duration_s
    words = len(node.segment.split())
    return max(MIN_ENTRY_SECONDS, words / WORDS_PER_SECOND)


def build_manifest(graph: StoryGraph, order: Sequence[str]) -> ExportManifest:
    """Timeline over the given order: contiguous entries starting at 0."""
    if not order:
        raise EmptyOrder()
    entries: list[ManifestEntry] = []
    clock = 0.0
    for node_id in order:
        node = graph.node(node_id)  # raises UnknownNode
        current = mediamod.current_assets(graph, node_id)
        duration = _entry_duration(node, current)
        entries.append(
            ManifestEntry(
                node_id=node_id,
                label=node.label,
                segment=node.segment,
                assets=current,
                start_s=clock,
                end_s=clock + duration,
            )
        )
        clock += duration
    return ExportManifest(entries=tuple(entries), total_duration_s=clock)


def _timestamp(seconds: float) -> str:
    ms = round(seconds * 1000)
    hours, ms = divmod(ms, 3_600_000)
    minutes, ms = divmod(ms, 60_000)
    secs, ms = divmod(ms, 1000)
    return f"{hours:02d}:{minutes:02d}:{secs:02d},{ms:03d}"


def subtitle_track(manifest: ExportManifest) -> SubtitleTrack:
    cues = tuple(
        SubtitleCue(index=i, start_s=e.start_s, end_s=e.end_s, text=e.segment)
        for i, e in enumerate(manifest.entries, start=1)
    )
    return SubtitleTrack(cues=cues)


def render_srt(manifest: ExportManifest) -> str:
    """Standard SRT text for the manifest's timeline."""
    blocks = []
    for cue in subtitle_track(manifest).cues:
        # SRT cue text must not contain blank lines
        text = "\n".join(line for line in cue.text.splitlines() if line.strip()) or cue.text
        blocks.append(
            f"{cue.index}\n{_timestamp(cue.start_s)} --> {_timestamp(cue.end_s)}\n{text}"
        )
    return "\n\n".join(blocks) + "\n"


def manifest_document(manifest: ExportManifest) -> str:
    """The manifest as a flat JSON array of entries."""
    rows = []
    for entry in manifest.entries:
        assets = {
            kind: {
                "asset_id": asset.asset_id,
                "version": asset.version,
                "uri": asset.uri,
                "duration_s": asset.duration_s,
            }
            for kind, asset in sorted(entry.assets.items())
        }
        rows.append(
            {
                "node_id": entry.node_id,
                "label": entry.label,
                "segment": entry.segment,
                "assets": assets,
                "start_s": entry.start_s,
                "end_s": entry.end_s,
            }
        )
    return json.dumps(rows, ensure_ascii=False, indent=2) + "\n"


def export_storyboard(graph: StoryGraph, order: Sequence[str]) -> str:
    """Markdown storyboard: one section per node, in order."""
    if not order:
        raise EmptyOrder()
    manifest = build_manifest(graph, order)
    lines = ["# Storyboard", ""]
    for i, entry in enumerate(manifest.entries, start=1):
        image = entry.assets.get("image")
        lines.append(f"## {i}. {entry.label}")
        lines.append("")
        lines.append(entry.segment if entry.segment else "(no text yet)")
        lines.append("")
        lines.append(f"- image: {image.uri if image else '(none)'}")
        lines.append(f"- duration: {entry.duration_s:.3f} s")
        lines.append("")
    return "\n".join(lines)


def export_bundle(
    graph: StoryGraph,
    destination: Path | str,
    nodes: Iterable[str] | None = None,
    path: Sequence[str] | None = None,
    asset_root: Path | str | None = None,
) -> BundleInventory:
    """Write the full export directory.

    Layout: graph.json, manifest.json, subtitles.srt, storyboard.md, and
    assets/ holding a copy of every referenced current asset. Re-running
    over the same inputs produces byte-identical documents.
    """
    destination = Path(destination)
    order = sequence_for_export(graph, nodes=nodes, path=path)
    manifest = build_manifest(graph, order)

    warnings: list[str] = []
    if path is None and graphmod.classify_topology(graph) is TopologyClass.BRANCHING:
        warnings.append(
            "branching story exported without a path choice; parallel branches "
            "are concatenated in narrative order"
        )

    referenced: list[MediaAsset] = []
    for entry in manifest.entries:
        referenced.extend(entry.assets[k] for k in sorted(entry.assets))
    sources: list[tuple[Path, MediaAsset]] = []
    for asset in referenced:
        source = (Path(asset_root) if asset_root is not None else Path(".")) / asset.uri
        if not source.is_file():
            raise MissingAsset(str(source))
        sources.append((source, asset))

    try:
        destination.mkdir(parents=True, exist_ok=True)
        files = []
        for name, content in (
            ("graph.json", graphmod.serialize_graph(graph)),
            ("manifest.json", manifest_document(manifest)),
            ("subtitles.srt", render_srt(manifest)),
            ("storyboard.md", export_storyboard(graph, order)),
        ):
            (destination / name).write_text(content, encoding="utf-8")
            files.append(name)
        for source, asset in sources:
            target = destination / asset.uri
            target.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(source, target)
            files.append(asset.uri)
    except OSError as exc:
        raise IOFailure(f"bundle write failed: {exc}") from exc
    return BundleInventory(files=tuple(sorted(files)), warnings=tuple(warnings))
