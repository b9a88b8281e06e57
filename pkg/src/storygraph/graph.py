"""Story graphs as immutable values.

A story is a directed acyclic graph of narrative nodes. This module owns the
external JSON document format, validation, topology analysis, deterministic
layout, and the structural editing primitives. Every operation takes a graph
and returns a new graph or a report; nothing mutates in place, so values are
safe to share across threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Any, Iterable, Sequence

from .errors import (
    EmptyGraph,
    EmptySelection,
    IntegrityViolation,
    MalformedDocument,
    SchemaViolation,
    UnknownNode,
    WouldCreateCycle,
)

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, media imports graph
    from .media import MediaAsset

# Layout constants (canvas units). Columns advance left to right, parallel
# branches stack downward, and a lone node in a column after a parallel block
# sits on the centered row.
X_ORIGIN = 50
X_STEP = 300
ROW_ORIGIN = 50
ROW_STEP = 500
CONVERGENCE_Y = 300

DEFAULT_POSITION = (float(X_ORIGIN), float(ROW_ORIGIN))


@dataclass(frozen=True)
class StoryNode:
    """One scene or event: a title, a narrative segment, and canvas position.

    ``assets`` carries versioned media attached to this node. Assets are
    project state, not part of the external document format.
    """

    id: str
    label: str
    segment: str
    position: tuple[float, float] = DEFAULT_POSITION
    assets: tuple["MediaAsset", ...] = ()
    extras: dict[str, Any] | None = None  # unknown fields kept by lenient parse


@dataclass(frozen=True)
class StoryEdge:
    id: str
    source: str
    target: str
    extras: dict[str, Any] | None = None


def edge_id(source: str, target: str) -> str:
    """Canonical edge id for a source/target pair."""
    return f"e{source}-{target}"


@dataclass(frozen=True)
class StoryGraph:
    """Ordered nodes and edges plus the shared story context used by media
    generation. Construction never validates; call :func:`validate`."""

    nodes: tuple[StoryNode, ...] = ()
    edges: tuple[StoryEdge, ...] = ()
    story_context: str | None = None
    extras: dict[str, Any] | None = None

    def node(self, node_id: str) -> StoryNode:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise UnknownNode(node_id)

    def has_node(self, node_id: str) -> bool:
        return any(node.id == node_id for node in self.nodes)

    def node_ids(self) -> list[str]:
        return [node.id for node in self.nodes]

    def successors(self, node_id: str) -> list[str]:
        return [e.target for e in self.edges if e.source == node_id]

    def predecessors(self, node_id: str) -> list[str]:
        return [e.source for e in self.edges if e.target == node_id]

    def in_degree(self, node_id: str) -> int:
        return sum(1 for e in self.edges if e.target == node_id)

    def out_degree(self, node_id: str) -> int:
        return sum(1 for e in self.edges if e.source == node_id)

    def replace_node(self, node: StoryNode) -> "StoryGraph":
        """New graph with the node of the same id swapped out."""
        if not self.has_node(node.id):
            raise UnknownNode(node.id)
        nodes = tuple(node if n.id == node.id else n for n in self.nodes)
        return replace(self, nodes=nodes)


class TopologyClass(Enum):
    LINEAR = "Linear"
    BRANCHING = "Branching"


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    subject: str | None = None


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


# ---------------------------------------------------------------------------
# Parsing and serialization of the external document format
# ---------------------------------------------------------------------------

_NODE_KEYS = {"id", "data", "position"}
_DATA_KEYS = {"label", "segment"}
_POSITION_KEYS = {"x", "y"}
_EDGE_KEYS = {"id", "source", "target"}
_TOP_KEYS = {"nodes", "edges"}

_EDGE_ID_RE = re.compile(r"^e(?P<source>.+)-(?P<target>.+)$")


def _require(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise SchemaViolation(f"missing required field {key!r}", path)
    return obj[key]


def _as_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaViolation(f"expected a string, got {type(value).__name__}", path)
    return value


def _as_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(f"expected a number, got {type(value).__name__}", path)
    if value != value or value in (float("inf"), float("-inf")):
        raise SchemaViolation("coordinate must be finite", path)
    return value


def _as_obj(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaViolation(f"expected an object, got {type(value).__name__}", path)
    return value


def _extras(obj: dict, known: set[str], path: str, lenient: bool) -> dict[str, Any] | None:
    extra = {k: obj[k] for k in obj if k not in known}
    if not extra:
        return None
    if not lenient:
        raise SchemaViolation(f"unknown field(s) {sorted(extra)}", path)
    return extra


def parse_graph(text: str, *, lenient: bool = False) -> StoryGraph:
    """Parse the external JSON document into a validated StoryGraph.

    Strict mode (the default) rejects unknown fields; lenient mode keeps them
    verbatim so the document round-trips. Structural invariants are enforced
    in both modes.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc

    top = _as_obj(doc, "$")
    raw_nodes = _require(top, "nodes", "$")
    raw_edges = _require(top, "edges", "$")
    if not isinstance(raw_nodes, list):
        raise SchemaViolation("expected an array", "nodes")
    if not isinstance(raw_edges, list):
        raise SchemaViolation("expected an array", "edges")
    top_extras = _extras(top, _TOP_KEYS, "$", lenient)

    nodes: list[StoryNode] = []
    for i, raw in enumerate(raw_nodes):
        path = f"nodes[{i}]"
        obj = _as_obj(raw, path)
        node_id = _as_str(_require(obj, "id", path), f"{path}.id")
        if not node_id:
            raise SchemaViolation("node id must be a non-empty string", f"{path}.id")
        data = _as_obj(_require(obj, "data", path), f"{path}.data")
        label = _as_str(_require(data, "label", f"{path}.data"), f"{path}.data.label")
        segment = _as_str(_require(data, "segment", f"{path}.data"), f"{path}.data.segment")
        pos = _as_obj(_require(obj, "position", path), f"{path}.position")
        x = _as_number(_require(pos, "x", f"{path}.position"), f"{path}.position.x")
        y = _as_number(_require(pos, "y", f"{path}.position"), f"{path}.position.y")

        extras: dict[str, Any] = {}
        for section, known, sub in (
            ("node", _NODE_KEYS, obj),
            ("data", _DATA_KEYS, data),
            ("position", _POSITION_KEYS, pos),
        ):
            found = _extras(sub, known, path if section == "node" else f"{path}.{section}", lenient)
            if found:
                extras[section] = found
        nodes.append(
            StoryNode(
                id=node_id,
                label=label,
                segment=segment,
                position=(x, y),
                extras=extras or None,
            )
        )

    edges: list[StoryEdge] = []
    for i, raw in enumerate(raw_edges):
        path = f"edges[{i}]"
        obj = _as_obj(raw, path)
        eid = _as_str(_require(obj, "id", path), f"{path}.id")
        source = _as_str(_require(obj, "source", path), f"{path}.source")
        target = _as_str(_require(obj, "target", path), f"{path}.target")
        if eid != edge_id(source, target):
            raise SchemaViolation(
                f"edge id {eid!r} does not match canonical form {edge_id(source, target)!r}",
                f"{path}.id",
            )
        edges.append(StoryEdge(id=eid, source=source, target=target,
                               extras=_extras(obj, _EDGE_KEYS, path, lenient)))

    graph = StoryGraph(nodes=tuple(nodes), edges=tuple(edges), extras=top_extras)
    _check_integrity(graph)
    return graph


def _check_integrity(graph: StoryGraph) -> None:
    seen_ids: set[str] = set()
    for node in graph.nodes:
        if node.id in seen_ids:
            raise IntegrityViolation(f"duplicate node id {node.id!r}", subject=node.id)
        seen_ids.add(node.id)

    seen_pairs: set[tuple[str, str]] = set()
    for edge in graph.edges:
        for endpoint in (edge.source, edge.target):
            if endpoint not in seen_ids:
                raise IntegrityViolation(
                    f"edge {edge.id!r} references missing node {endpoint!r}",
                    subject=endpoint,
                )
        if edge.source == edge.target:
            raise IntegrityViolation(f"edge {edge.id!r} is a self-loop", subject=edge.id)
        pair = (edge.source, edge.target)
        if pair in seen_pairs:
            raise IntegrityViolation(
                f"duplicate edge {edge.source!r} -> {edge.target!r}", subject=edge.id
            )
        seen_pairs.add(pair)

    cycle = find_cycle(graph)
    if cycle is not None:
        raise IntegrityViolation(
            "graph contains a cycle: " + " -> ".join(cycle), subject=cycle[0]
        )


def _coord(value: float) -> float | int:
    # Emit whole coordinates as JSON integers, matching the document style.
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def graph_document(graph: StoryGraph) -> dict:
    """The graph as a plain dict in canonical field order."""
    nodes = []
    for node in graph.nodes:
        extras = node.extras or {}
        data: dict[str, Any] = {"label": node.label, "segment": node.segment}
        data.update(extras.get("data", {}))
        position: dict[str, Any] = {"x": _coord(node.position[0]), "y": _coord(node.position[1])}
        position.update(extras.get("position", {}))
        obj: dict[str, Any] = {"id": node.id, "data": data, "position": position}
        obj.update(extras.get("node", {}))
        nodes.append(obj)
    edges = []
    for edge in graph.edges:
        obj = {"id": edge.id, "source": edge.source, "target": edge.target}
        obj.update(edge.extras or {})
        edges.append(obj)
    doc: dict[str, Any] = {"nodes": nodes, "edges": edges}
    doc.update(graph.extras or {})
    return doc


def serialize_graph(graph: StoryGraph) -> str:
    """Emit the external JSON document. Inverse of :func:`parse_graph`."""
    return json.dumps(graph_document(graph), ensure_ascii=False, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Validation and topology
# ---------------------------------------------------------------------------

def find_cycle(graph: StoryGraph) -> list[str] | None:
    """One witness cycle as a node id sequence (first id repeated), or None."""
    succ = {node.id: [] for node in graph.nodes}
    for edge in graph.edges:
        if edge.source in succ and edge.target in succ:
            succ[edge.source].append(edge.target)

    WHITE, GRAY, BLACK = 0, 1, 2
    color = {nid: WHITE for nid in succ}
    parent: dict[str, str] = {}

    for start in succ:
        if color[start] != WHITE:
            continue
        stack: list[tuple[str, Iterable[str]]] = [(start, iter(succ[start]))]
        color[start] = GRAY
        while stack:
            nid, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == GRAY:
                    cycle = [nxt]
                    cur = nid
                    while cur != nxt:
                        cycle.append(cur)
                        cur = parent[cur]
                    cycle.append(nxt)
                    cycle = cycle[::-1]
                    return cycle
                if color[nxt] == WHITE:
                    color[nxt] = GRAY
                    parent[nxt] = nid
                    stack.append((nxt, iter(succ[nxt])))
                    advanced = True
                    break
            if not advanced:
                color[nid] = BLACK
                stack.pop()
    return None


def validate(graph: StoryGraph) -> ValidationReport:
    """Check every structural invariant. Violations are data, not errors."""
    report = ValidationReport()
    seen: set[str] = set()
    for node in graph.nodes:
        if not node.id:
            report.violations.append(Violation("empty-id", "node id must be non-empty"))
        elif node.id in seen:
            report.violations.append(
                Violation("duplicate-id", f"duplicate id {node.id!r}", node.id)
            )
        seen.add(node.id)

    pairs: set[tuple[str, str]] = set()
    for edge in graph.edges:
        if edge.source not in seen or edge.target not in seen:
            missing = edge.source if edge.source not in seen else edge.target
            report.violations.append(
                Violation("dangling-edge", f"edge {edge.id!r} references missing node {missing!r}", missing)
            )
            continue
        if edge.source == edge.target:
            report.violations.append(
                Violation("self-loop", f"edge {edge.id!r} is a self-loop", edge.id)
            )
        pair = (edge.source, edge.target)
        if pair in pairs:
            report.violations.append(
                Violation("duplicate-edge", f"duplicate edge {edge.source!r} -> {edge.target!r}", edge.id)
            )
        pairs.add(pair)
        if edge.id != edge_id(edge.source, edge.target):
            report.violations.append(
                Violation("edge-id-form", f"edge id {edge.id!r} is not e{{source}}-{{target}}", edge.id)
            )

    if not any(v.kind in ("dangling-edge", "duplicate-id") for v in report.violations):
        cycle = find_cycle(graph)
        if cycle is not None:
            report.violations.append(
                Violation("cycle", "cycle: " + " -> ".join(cycle), cycle[0])
            )
        elif graph.nodes and len(roots(graph)) > 1:
            report.warnings.append(
                f"graph has {len(roots(graph))} roots; export order follows the layout tie-break"
            )
    return report


def roots(graph: StoryGraph) -> list[str]:
    """Node ids with in-degree 0, in stored order."""
    targets = {e.target for e in graph.edges}
    return [n.id for n in graph.nodes if n.id not in targets]


def sinks(graph: StoryGraph) -> list[str]:
    """Node ids with out-degree 0, in stored order."""
    sources = {e.source for e in graph.edges}
    return [n.id for n in graph.nodes if n.id not in sources]


def classify_topology(graph: StoryGraph) -> TopologyClass:
    """Linear means a single connected chain; anything else is Branching."""
    if not graph.nodes:
        raise EmptyGraph("cannot classify an empty graph")
    degrees_ok = all(
        graph.in_degree(n.id) <= 1 and graph.out_degree(n.id) <= 1 for n in graph.nodes
    )
    if (
        degrees_ok
        and len(roots(graph)) == 1
        and len(sinks(graph)) == 1
        and len(graph.edges) == len(graph.nodes) - 1
    ):
        return TopologyClass.LINEAR
    return TopologyClass.BRANCHING


_DIGIT_RUN = re.compile(r"(\d+)")


def _natural_id_key(node_id: str) -> tuple:
    """Numeric-aware comparison key: '2' sorts before '10'."""
    parts = tuple(
        (1, int(token)) if token.isdigit() else (0, token)
        for token in _DIGIT_RUN.split(node_id)
        if token
    )
    return (parts, node_id)


def _tiebreak_key(graph: StoryGraph) -> Any:
    positions = {n.id: n.position for n in graph.nodes}

    def key(node_id: str) -> tuple:
        x, y = positions[node_id]
        return (x, y, _natural_id_key(node_id))

    return key


def topological_order(
    graph: StoryGraph, selection: Iterable[str] | None = None
) -> list[str]:
    """Deterministic topological order; ties break on x, then y, then id.

    With a selection, returns the induced order on that subset.
    """
    if not graph.nodes:
        raise EmptyGraph("cannot order an empty graph")
    chosen: set[str] | None = None
    if selection is not None:
        chosen = set(selection)
        if not chosen:
            raise EmptySelection()
        for node_id in chosen:
            if not graph.has_node(node_id):
                raise UnknownNode(node_id)

    key = _tiebreak_key(graph)
    indeg = {n.id: graph.in_degree(n.id) for n in graph.nodes}
    ready = sorted((nid for nid, d in indeg.items() if d == 0), key=key)
    order: list[str] = []
    while ready:
        nid = ready.pop(0)
        order.append(nid)
        for nxt in graph.successors(nid):
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                # insert keeping the ready list sorted by the tie-break key
                ready.append(nxt)
                ready.sort(key=key)
    if len(order) != len(graph.nodes):
        raise IntegrityViolation("graph contains a cycle; cannot order")
    if chosen is not None:
        return [nid for nid in order if nid in chosen]
    return order


def enumerate_paths(graph: StoryGraph) -> list[list[str]]:
    """Every root-to-sink path, roots and successors visited in tie-break order."""
    if not graph.nodes:
        raise EmptyGraph("cannot enumerate paths of an empty graph")
    key = _tiebreak_key(graph)
    sink_set = set(sinks(graph))
    paths: list[list[str]] = []

    def walk(prefix: list[str]) -> None:
        nid = prefix[-1]
        if nid in sink_set:
            paths.append(list(prefix))
            return
        for nxt in sorted(graph.successors(nid), key=key):
            prefix.append(nxt)
            walk(prefix)
            prefix.pop()

    for root in sorted(roots(graph), key=key):
        walk([root])
    return paths


# ---------------------------------------------------------------------------
# Layout
# ---------------------------------------------------------------------------

def _layers_from_order(order: Sequence[str], predecessors: dict[str, list[str]]) -> dict[str, int]:
    """Column index per node. The first node opens column 0; any later node
    without predecessors starts a fresh column to the right (a parallel
    storyline entering mid-story); everything else sits one past its latest
    predecessor."""
    layers: dict[str, int] = {}
    for nid in order:
        preds = predecessors.get(nid, [])
        if preds:
            layers[nid] = max(layers[p] for p in preds) + 1
        elif not layers:
            layers[nid] = 0
        else:
            layers[nid] = max(layers.values()) + 1
    return layers


def assign_layers(graph: StoryGraph) -> dict[str, int]:
    order = topological_order(graph)
    preds = {n.id: graph.predecessors(n.id) for n in graph.nodes}
    return _layers_from_order(order, preds)


def layout_positions(layers: Sequence[Sequence[str]]) -> dict[str, tuple[float, float]]:
    """Positions for nodes grouped into columns.

    x advances by a fixed step per column. Within a column, parallel rows
    stack downward from the top row; a column holding a single node after a
    parallel block sits on the centered row instead.
    """
    positions: dict[str, tuple[float, float]] = {}
    seen_parallel = False
    for layer_index, members in enumerate(layers):
        x = float(X_ORIGIN + X_STEP * layer_index)
        if len(members) == 1 and seen_parallel:
            positions[members[0]] = (x, float(CONVERGENCE_Y))
        else:
            for row, nid in enumerate(members):
                positions[nid] = (x, float(ROW_ORIGIN + ROW_STEP * row))
        if len(members) > 1:
            seen_parallel = True
    return positions


def _slot_position(graph: StoryGraph, layer: int) -> tuple[float, float]:
    """Position for a node inserted into the given column of an existing graph."""
    if not graph.nodes:
        return (float(X_ORIGIN), float(ROW_ORIGIN))
    layers = assign_layers(graph)
    members = [nid for nid, l in layers.items() if l == layer]
    earlier_parallel = any(
        sum(1 for l in layers.values() if l == earlier) > 1 for earlier in range(layer)
    )
    x = float(X_ORIGIN + X_STEP * layer)
    if not members and earlier_parallel:
        return (x, float(CONVERGENCE_Y))
    return (x, float(ROW_ORIGIN + ROW_STEP * len(members)))


# ---------------------------------------------------------------------------
# Structural edits
# ---------------------------------------------------------------------------

def fresh_node_id(graph: StoryGraph) -> str:
    """Smallest positive integer (as a string) not already used as an id."""
    used = set(graph.node_ids())
    candidate = 1
    while str(candidate) in used:
        candidate += 1
    return str(candidate)


def _reachable(graph: StoryGraph, start: str) -> set[str]:
    seen = {start}
    frontier = [start]
    while frontier:
        nid = frontier.pop()
        for nxt in graph.successors(nid):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen


def add_node(
    graph: StoryGraph,
    label: str,
    segment: str = "",
    connect_from: str | None = None,
    connect_to: str | None = None,
) -> StoryGraph:
    """Insert a new node, optionally wired between two existing nodes."""
    for ref in (connect_from, connect_to):
        if ref is not None and not graph.has_node(ref):
            raise UnknownNode(ref)
    if connect_from is not None and connect_to is not None:
        if connect_from == connect_to or connect_from in _reachable(graph, connect_to):
            raise WouldCreateCycle(
                f"connecting {connect_from!r} -> new -> {connect_to!r} would close a cycle"
            )

    new_id = fresh_node_id(graph)
    if connect_from is not None:
        layer = assign_layers(graph)[connect_from] + 1
    elif connect_to is not None:
        layer = max(assign_layers(graph)[connect_to] - 1, 0)
    else:
        layer = 0
    node = StoryNode(id=new_id, label=label, segment=segment,
                     position=_slot_position(graph, layer))

    edges = list(graph.edges)
    if connect_from is not None:
        edges.append(StoryEdge(id=edge_id(connect_from, new_id), source=connect_from, target=new_id))
    if connect_to is not None:
        edges.append(StoryEdge(id=edge_id(new_id, connect_to), source=new_id, target=connect_to))
    return replace(graph, nodes=graph.nodes + (node,), edges=tuple(edges))


def _mark_assets_stale(node: StoryNode) -> StoryNode:
    if not node.assets:
        return node
    return replace(node, assets=tuple(replace(a, stale=True) for a in node.assets))


def update_node_text(
    graph: StoryGraph,
    node_id: str,
    label: str | None = None,
    segment: str | None = None,
) -> StoryGraph:
    """Rewrite the label and/or segment of one node atomically.

    A segment change marks the node's media stale (kept, not deleted); media
    prompts derive from segments, so label edits leave assets current.
    """
    node = graph.node(node_id)
    updated = node
    if label is not None:
        updated = replace(updated, label=label)
    if segment is not None and segment != node.segment:
        updated = replace(updated, segment=segment)
        updated = _mark_assets_stale(updated)
    return graph.replace_node(updated)


def move_node(graph: StoryGraph, node_id: str, x: float, y: float) -> StoryGraph:
    """Reposition a node on the canvas. Never touches text or assets."""
    node = graph.node(node_id)
    return graph.replace_node(replace(node, position=(x, y)))


def remove_nodes(graph: StoryGraph, selection: Iterable[str]) -> StoryGraph:
    """Drop the selected nodes and every incident edge."""
    chosen = set(selection)
    if not chosen:
        raise EmptySelection()
    for node_id in chosen:
        if not graph.has_node(node_id):
            raise UnknownNode(node_id)
    nodes = tuple(n for n in graph.nodes if n.id not in chosen)
    edges = tuple(e for e in graph.edges if e.source not in chosen and e.target not in chosen)
    return replace(graph, nodes=nodes, edges=edges)


def duplicate_subgraph(
    graph: StoryGraph, selection: Iterable[str]
) -> tuple[StoryGraph, dict[str, str]]:
    """Clone the selected nodes into a comparison branch.

    Internal edges (both endpoints selected) are cloned between the clones;
    incoming boundary edges are replicated so the copy hangs from the same
    parents; outgoing boundary edges are not cloned. Clones sit one branch
    row below their originals.
    """
    chosen = set(selection)
    if not chosen:
        raise EmptySelection()
    for node_id in chosen:
        if not graph.has_node(node_id):
            raise UnknownNode(node_id)

    mapping: dict[str, str] = {}
    working = graph
    new_nodes: list[StoryNode] = []
    for node in graph.nodes:
        if node.id not in chosen:
            continue
        new_id = fresh_node_id(working)
        mapping[node.id] = new_id
        clone = replace(
            node,
            id=new_id,
            position=(node.position[0], node.position[1] + ROW_STEP),
            assets=tuple(
                replace(a, asset_id=f"{new_id}:{a.kind}:v{a.version}", node_id=new_id)
                for a in node.assets
            ),
        )
        new_nodes.append(clone)
        working = replace(working, nodes=working.nodes + (clone,))

    new_edges: list[StoryEdge] = []
    for edge in graph.edges:
        src_sel, dst_sel = edge.source in chosen, edge.target in chosen
        if src_sel and dst_sel:
            s, t = mapping[edge.source], mapping[edge.target]
        elif dst_sel:
            s, t = edge.source, mapping[edge.target]
        else:
            continue
        new_edges.append(StoryEdge(id=edge_id(s, t), source=s, target=t))

    out = replace(
        graph,
        nodes=graph.nodes + tuple(new_nodes),
        edges=graph.edges + tuple(new_edges),
    )
    return out, mapping
