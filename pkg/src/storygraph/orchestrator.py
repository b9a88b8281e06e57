"""Task routing and the generative pipeline.

User requests are routed to one of five task kinds by an auditable rule
table (or, optionally, by asking the text backend). The whole-story pipeline
composes three stages: the Generator writes narrative prose, the Reasoner
decomposes it into node drafts with successor lists, and the Diagrammer
turns drafts into a laid-out story graph.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from . import graph as graphmod
from .backends import REPAIR_NOTE, GenerativeBackend
from .errors import (
    CyclicDrafts,
    DanglingSuccessor,
    EmptySelection,
    PipelineError,
    StoryGraphError,
    UnknownNode,
    UnparseableDecomposition,
    UnroutableRequest,
)
from .graph import StoryGraph


class TaskKind(Enum):
    GENERATE = "Generate"
    EDIT = "Edit"
    MEDIA_GEN = "MediaGen"
    EXPORT = "Export"
    EXTEND = "Extend"


_COMMAND_TO_KIND = {
    "generate": TaskKind.GENERATE,
    "edit": TaskKind.EDIT,
    "media": TaskKind.MEDIA_GEN,
    "export": TaskKind.EXPORT,
    "extend": TaskKind.EXTEND,
}

_MEDIA_KEYWORDS = re.compile(r"\b(narrat\w*|voice\w*|image\w*|video\w*|audio)\b", re.IGNORECASE)
_EXPORT_KEYWORD = re.compile(r"\bexport\b", re.IGNORECASE)
_CONTINUATION_CUE = re.compile(r"\b(add|extend|continue)\b|what happens next", re.IGNORECASE)
_RESTRUCTURE_CUE = re.compile(r"\bsplit\b", re.IGNORECASE)


@dataclass(frozen=True)
class TaskRequest:
    utterance: str = ""
    selection: frozenset[str] = frozenset()
    graph_present: bool = False
    explicit_command: str | None = None


@dataclass(frozen=True)
class NodeDraft:
    ordinal: int
    label: str
    segment: str
    successors: tuple[int, ...] = ()


@dataclass(frozen=True)
class StageTranscript:
    stage: str
    prompt: str
    response: str


@dataclass(frozen=True)
class PipelineRun:
    graph: StoryGraph
    transcripts: tuple[StageTranscript, ...]
    warnings: tuple[str, ...] = ()


def route(request: TaskRequest) -> TaskKind:
    """Rule-table routing. Deterministic; precedence as written.

    A selection plus a structural "split" request routes to Extend rather
    than Edit: restructuring cannot preserve the node set, so it is treated
    as an extension request and the caller surfaces a notice.
    """
    kind, _ = route_with_reason(request)
    return kind


def route_with_reason(request: TaskRequest) -> tuple[TaskKind, str]:
    if request.explicit_command is not None:
        command = request.explicit_command.lower()
        if command not in _COMMAND_TO_KIND:
            raise UnroutableRequest(f"unknown command {request.explicit_command!r}")
        return _COMMAND_TO_KIND[command], "explicit command"
    utterance = request.utterance.strip()
    if not utterance:
        raise UnroutableRequest("empty utterance and no explicit command")
    if not request.graph_present:
        return TaskKind.GENERATE, "no graph yet"
    if _EXPORT_KEYWORD.search(utterance):
        return TaskKind.EXPORT, "export keyword"
    if request.selection:
        if _MEDIA_KEYWORDS.search(utterance):
            return TaskKind.MEDIA_GEN, "selection with media keyword"
        if _RESTRUCTURE_CUE.search(utterance):
            return TaskKind.EXTEND, "restructure request; node split handled as extension"
        return TaskKind.EDIT, "selection present"
    if _CONTINUATION_CUE.search(utterance):
        return TaskKind.EXTEND, "continuation cue"
    return TaskKind.EDIT, "fallback: edit with all nodes selected"


def route_with_backend(request: TaskRequest, backend: GenerativeBackend) -> TaskKind:
    """Ask the text backend to pick the task kind; fall back to the rule
    table when the reply is not one of the five kinds."""
    if not request.utterance.strip() and request.explicit_command is None:
        raise UnroutableRequest("empty utterance and no explicit command")
    if request.explicit_command is not None:
        return route(request)
    envelope = json.dumps(
        {
            "utterance": request.utterance,
            "selection": sorted(request.selection),
            "graph_present": request.graph_present,
        },
        ensure_ascii=False,
    )
    answer = backend.complete("route", envelope).text.strip()
    for kind in TaskKind:
        if answer == kind.value:
            return kind
    return route(request)


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------

def generate_story(prompt: str, backend: GenerativeBackend) -> str:
    if not prompt.strip():
        raise ValueError("prompt must be non-empty")
    return backend.complete("generate", prompt).text


_DRAFT_LINE = re.compile(r"^(\d+)\t([^\t]*)\t([^\t]*)\t([0-9,\s]*)$")


def parse_drafts(text: str) -> list[NodeDraft]:
    """Parse the tab-separated draft list grammar.

    One line per draft: ordinal, label, segment, comma-separated successor
    ordinals (may be empty). Ordinals must form 1..n.
    """
    drafts: list[NodeDraft] = []
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise UnparseableDecomposition("decomposition reply was empty")
    for line in lines:
        match = _DRAFT_LINE.match(line)
        if not match:
            raise UnparseableDecomposition(f"unparseable draft line: {line!r}")
        ordinal = int(match.group(1))
        succ_field = match.group(4).strip()
        successors = tuple(int(tok) for tok in succ_field.split(",") if tok.strip())
        drafts.append(
            NodeDraft(
                ordinal=ordinal,
                label=match.group(2).strip() or f"Node {ordinal}",
                segment=match.group(3).strip(),
                successors=successors,
            )
        )
    drafts.sort(key=lambda d: d.ordinal)
    expected = list(range(1, len(drafts) + 1))
    if [d.ordinal for d in drafts] != expected:
        raise UnparseableDecomposition(
            f"draft ordinals {[d.ordinal for d in drafts]} are not 1..{len(drafts)}"
        )
    return drafts


def reason_nodes(narrative: str, backend: GenerativeBackend) -> list[NodeDraft]:
    """Decompose narrative text into node drafts.

    One repair re-prompt on unparseable output, then hard failure.
    """
    if not narrative.strip():
        raise ValueError("narrative must be non-empty")
    reply = backend.complete("reason", narrative).text
    try:
        return parse_drafts(reply)
    except UnparseableDecomposition:
        repair_prompt = f"{narrative}\n\n{REPAIR_NOTE}"
        retry = backend.complete("reason", repair_prompt).text
        return parse_drafts(retry)


def diagram(drafts: Iterable[NodeDraft]) -> StoryGraph:
    """Turn drafts into a validated, laid-out story graph.

    Node ids are the ordinals as strings; positions come from the layout
    rule over layer indices.
    """
    drafts = list(drafts)
    if not drafts:
        raise ValueError("drafts must be non-empty")
    ordinals = {d.ordinal for d in drafts}
    for draft in drafts:
        for succ in draft.successors:
            if succ not in ordinals:
                raise DanglingSuccessor(succ)
            if succ == draft.ordinal:
                raise CyclicDrafts(f"draft {draft.ordinal} lists itself as successor")

    nodes = tuple(
        graphmod.StoryNode(id=str(d.ordinal), label=d.label, segment=d.segment)
        for d in sorted(drafts, key=lambda d: d.ordinal)
    )
    edges = tuple(
        graphmod.StoryEdge(
            id=graphmod.edge_id(str(d.ordinal), str(succ)),
            source=str(d.ordinal),
            target=str(succ),
        )
        for d in sorted(drafts, key=lambda d: d.ordinal)
        for succ in d.successors
    )
    skeleton = StoryGraph(nodes=nodes, edges=edges)
    if graphmod.find_cycle(skeleton) is not None:
        raise CyclicDrafts("draft successor lists form a cycle")

    layers = graphmod.assign_layers(skeleton)
    grouped: dict[int, list[str]] = {}
    for node_id in graphmod.topological_order(skeleton):
        grouped.setdefault(layers[node_id], []).append(node_id)
    positions = graphmod.layout_positions([grouped[i] for i in sorted(grouped)])
    placed = tuple(
        graphmod.StoryNode(
            id=n.id, label=n.label, segment=n.segment, position=positions[n.id]
        )
        for n in nodes
    )
    return StoryGraph(nodes=placed, edges=edges)


def drafts_from_graph(graph: StoryGraph) -> list[NodeDraft]:
    """Inverse of diagram on structure: ordinals follow narrative order."""
    order = graphmod.topological_order(graph)
    ordinal_of = {node_id: i + 1 for i, node_id in enumerate(order)}
    drafts = []
    for node_id in order:
        node = graph.node(node_id)
        drafts.append(
            NodeDraft(
                ordinal=ordinal_of[node_id],
                label=node.label,
                segment=node.segment,
                successors=tuple(
                    sorted(ordinal_of[t] for t in graph.successors(node_id))
                ),
            )
        )
    return drafts


def edit_nodes(
    graph: StoryGraph,
    selection: Iterable[str],
    instruction: str,
    backend: GenerativeBackend,
) -> StoryGraph:
    """Regenerate the selected nodes' text, preserving all structure.

    The backend sees, per node, the instruction, the node's current text,
    and the segments of direct neighbors. All selected nodes are rewritten
    from the pre-edit graph and applied together; a failure part-way leaves
    the input graph untouched (values are immutable, so no rollback needed).
    """
    chosen = set(selection)
    if not chosen:
        raise EmptySelection()
    for node_id in chosen:
        if not graph.has_node(node_id):
            raise UnknownNode(node_id)

    ordered = [nid for nid in graphmod.topological_order(graph) if nid in chosen]
    rewrites: list[tuple[str, str, str]] = []
    for node_id in ordered:
        node = graph.node(node_id)
        envelope = json.dumps(
            {
                "instruction": instruction,
                "node": {"label": node.label, "segment": node.segment},
                "context": {
                    "predecessors": [
                        graph.node(p).segment for p in graph.predecessors(node_id)
                    ],
                    "successors": [
                        graph.node(s).segment for s in graph.successors(node_id)
                    ],
                },
            },
            ensure_ascii=False,
        )
        reply = backend.complete("edit", envelope).text
        lines = reply.splitlines()
        if len(lines) >= 2:
            label, segment = lines[0].strip(), "\n".join(lines[1:]).strip()
        else:
            label, segment = node.label, reply.strip()
        rewrites.append((node_id, label, segment))

    out = graph
    for node_id, label, segment in rewrites:
        out = graphmod.update_node_text(out, node_id, label=label, segment=segment)
    return out


def extend_story(
    graph: StoryGraph,
    instruction: str,
    backend: GenerativeBackend,
    selection: Iterable[str] = (),
) -> tuple[StoryGraph, str]:
    """Append one generated node continuing the story.

    The new node hangs off the selected node (latest in narrative order if
    several are selected) or, with no selection, off the story's tail.
    Returns the new graph and the id of the added node.
    """
    if not graph.nodes:
        raise EmptySelection("cannot extend an empty story")
    chosen = set(selection)
    for node_id in chosen:
        if not graph.has_node(node_id):
            raise UnknownNode(node_id)
    order = graphmod.topological_order(graph)
    anchor = [nid for nid in order if nid in chosen][-1] if chosen else order[-1]

    tail = graph.node(anchor).segment
    prompt = f"Continue the story after this passage:\n{tail}\n\n{instruction}"
    reply = backend.complete("generate", prompt).text.strip()
    segment = reply.split("\n\n", 1)[0].strip() or instruction.strip()
    words = segment.split()
    label = " ".join(words[:4]).rstrip(".,;:!?") or "Continuation"

    new_id = graphmod.fresh_node_id(graph)
    out = graphmod.add_node(graph, label=label, segment=segment, connect_from=anchor)
    return out, new_id


NODE_COUNT_RANGE = (8, 12)


def run_pipeline(prompt: str, backend: GenerativeBackend) -> PipelineRun:
    """generate -> reason -> diagram, with per-stage transcripts."""
    if not prompt.strip():
        raise ValueError("prompt must be non-empty")
    transcripts: list[StageTranscript] = []

    def stage(name: str, func, *args):
        try:
            return func(*args)
        except StoryGraphError as exc:
            raise PipelineError(stage=name, cause=exc) from exc

    narrative = stage("generate", generate_story, prompt, backend)
    transcripts.append(StageTranscript("generate", prompt, narrative))

    drafts = stage("reason", reason_nodes, narrative, backend)
    draft_text = "\n".join(
        f"{d.ordinal}\t{d.label}\t{d.segment}\t{','.join(map(str, d.successors))}"
        for d in drafts
    )
    transcripts.append(StageTranscript("reason", narrative, draft_text))

    graph = stage("diagram", diagram, drafts)
    transcripts.append(StageTranscript("diagram", draft_text, graphmod.serialize_graph(graph)))

    warnings = ()
    low, high = NODE_COUNT_RANGE
    if not low <= len(graph.nodes) <= high:
        warnings = (
            f"story has {len(graph.nodes)} nodes, outside the usual {low}-{high} range",
        )
    return PipelineRun(graph=graph, transcripts=tuple(transcripts), warnings=warnings)
