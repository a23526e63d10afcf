"""Alignment graphs for the graph-based transducer loss.

Node ``0`` is the non-emitting start node and node ``G+1`` the non-emitting
end node. Every other node emits one symbol per visit. An edge ``m -> n``
into an emitting node consumes one frame and reads the observation
``logprobs[t, edge.u, label(n)]``; edges into the end node are epsilon
transitions that consume nothing.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class GraphError(ValueError):
    """Invalid graph or label sequence. ``code`` is a stable identifier."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class Node:
    id: int
    label: Optional[int]  # None for start and end


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    u: int


@dataclass(frozen=True)
class AlignmentGraph:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    U: int
    blank_id: int
    K: int
    min_path_len: int
    labels: tuple[int, ...] = ()
    topology: str = "custom"

    @property
    def start(self) -> int:
        return 0

    @property
    def end(self) -> int:
        return len(self.nodes) - 1

    @property
    def G(self) -> int:
        """Number of emitting nodes."""
        return len(self.nodes) - 2

    def label_of(self, node_id: int) -> Optional[int]:
        return self.nodes[node_id].label

    def is_blank(self, node_id: int) -> bool:
        return self.nodes[node_id].label == self.blank_id

    def emitting_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.dst != self.end]

    def final_nodes(self) -> list[int]:
        return [e.src for e in self.edges if e.dst == self.end]

    def edge_arrays(self):
        """``(src, dst, u, label)`` int arrays over the emitting edges."""
        em = self.emitting_edges()
        src = np.array([e.src for e in em], dtype=np.int64)
        dst = np.array([e.dst for e in em], dtype=np.int64)
        u = np.array([e.u for e in em], dtype=np.int64)
        lab = np.array([self.nodes[e.dst].label for e in em], dtype=np.int64)
        return src, dst, u, lab


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    code: str = "ok"
    message: str = ""

    def raise_if_invalid(self) -> None:
        if not self.ok:
            raise GraphError(self.code, self.message)


def check_labels(y: Sequence[int], blank_id: int, K: int) -> tuple[int, ...]:
    y = tuple(int(v) for v in y)
    if not 0 <= blank_id < K:
        raise GraphError("invalid-blank", f"blank_id {blank_id} not in [0, {K})")
    for v in y:
        if v == blank_id:
            raise GraphError("invalid-label", f"label sequence contains blank id {blank_id}")
        if not 0 <= v < K:
            raise GraphError("invalid-label", f"label {v} not in [0, {K})")
    return y


def _chain_nodes(y, blank_id):
    # start, blank_0, label_1, blank_1, ..., label_U, blank_U, end
    nodes = [Node(0, None), Node(1, blank_id)]
    for lab in y:
        nodes.append(Node(len(nodes), lab))
        nodes.append(Node(len(nodes), blank_id))
    nodes.append(Node(len(nodes), None))
    return nodes


def _blank_node(level: int) -> int:
    return 2 * level + 1


def _label_node(index: int) -> int:
    # 1-based label index
    return 2 * index


def build_ctct_graph(y: Sequence[int], blank_id: int, K: int) -> AlignmentGraph:
    """CTC-like transducer graph: ``blank y1 blank y2 ... yU blank``.

    Blank and label nodes carry self-loops. The skip edge ``y_l -> y_{l+1}``
    is omitted when the two labels are equal. Edges into label node ``l``
    carry decoder state ``l-1``; blank node ``l`` and label self-loops carry
    state ``l``.
    """
    y = check_labels(y, blank_id, K)
    U = len(y)
    nodes = _chain_nodes(y, blank_id)
    end = len(nodes) - 1
    edges = [Edge(0, _blank_node(0), 0)]
    if U:
        edges.append(Edge(0, _label_node(1), 0))
    for level in range(U + 1):
        b = _blank_node(level)
        edges.append(Edge(b, b, level))
        if level < U:
            edges.append(Edge(b, _label_node(level + 1), level))
    for l in range(1, U + 1):
        n = _label_node(l)
        edges.append(Edge(n, n, l))
        edges.append(Edge(n, _blank_node(l), l))
        if l < U and y[l - 1] != y[l]:
            edges.append(Edge(n, _label_node(l + 1), l))
    edges.append(Edge(_blank_node(U), end, U))
    if U:
        edges.append(Edge(_label_node(U), end, U))
    repeats = sum(1 for a, b in zip(y, y[1:]) if a == b)
    min_len = max(U + repeats, 1)
    return AlignmentGraph(tuple(nodes), tuple(_sorted(edges)), U, blank_id, K, min_len,
                          labels=y, topology="ctct")


def build_monornnt_graph(y: Sequence[int], blank_id: int, K: int) -> AlignmentGraph:
    """Monotonic RNN-T graph: exactly one symbol per frame, labels in order.

    Blank node ``u`` loops on itself reading the blank score at state ``u``.
    Label node ``l`` has no self-loop; it is followed by either blank ``l`` or
    directly by label ``l+1``.
    """
    y = check_labels(y, blank_id, K)
    U = len(y)
    nodes = _chain_nodes(y, blank_id)
    end = len(nodes) - 1
    edges = [Edge(0, _blank_node(0), 0)]
    if U:
        edges.append(Edge(0, _label_node(1), 0))
    for level in range(U + 1):
        b = _blank_node(level)
        edges.append(Edge(b, b, level))
        if level < U:
            edges.append(Edge(b, _label_node(level + 1), level))
    for l in range(1, U + 1):
        n = _label_node(l)
        edges.append(Edge(n, _blank_node(l), l))
        if l < U:
            edges.append(Edge(n, _label_node(l + 1), l))
    edges.append(Edge(_blank_node(U), end, U))
    if U:
        edges.append(Edge(_label_node(U), end, U))
    return AlignmentGraph(tuple(nodes), tuple(_sorted(edges)), U, blank_id, K, max(U, 1),
                          labels=y, topology="monornnt")


BUILDERS = {"ctct": build_ctct_graph, "monornnt": build_monornnt_graph}


def build_graph(topology: str, y: Sequence[int], blank_id: int, K: int) -> AlignmentGraph:
    try:
        builder = BUILDERS[topology]
    except KeyError:
        raise GraphError("unknown-topology", f"unknown topology {topology!r}") from None
    return builder(y, blank_id, K)


def _sorted(edges):
    return sorted(edges, key=lambda e: (e.src, e.dst))


def shortest_emitting_path(g: AlignmentGraph) -> Optional[int]:
    """Fewest emitting nodes on any start-to-end path, or None if unreachable."""
    end = g.end
    out = _adjacency(g)
    dist = {g.start: 0}
    queue = deque([g.start])
    while queue:
        n = queue.popleft()
        for m in out[n]:
            if m not in dist:
                dist[m] = dist[n] + (0 if m == end else 1)
                queue.append(m)
    return dist.get(end)


def _adjacency(g: AlignmentGraph):
    out = {n.id: [] for n in g.nodes}
    for e in g.edges:
        if e.src in out:
            out[e.src].append(e.dst)
    return out


def _reach(start, adj):
    seen = {start}
    stack = [start]
    while stack:
        n = stack.pop()
        for m in adj.get(n, ()):
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return seen


def validate_graph(g: AlignmentGraph) -> ValidationReport:
    """Check every structural invariant; report the first violation found."""
    n_nodes = len(g.nodes)
    if n_nodes < 3:
        return ValidationReport(False, "too-few-nodes", "need start, end and one emitting node")
    for i, node in enumerate(g.nodes):
        if node.id != i:
            return ValidationReport(False, "bad-node-ids", f"node at position {i} has id {node.id}")
    start, end = g.start, g.end
    if g.nodes[start].label is not None or g.nodes[end].label is not None:
        return ValidationReport(False, "emitting-terminal", "start and end nodes must be non-emitting")
    for node in g.nodes[1:-1]:
        if node.label is None:
            return ValidationReport(False, "non-emitting-interior", f"node {node.id} has no label")
        if not 0 <= node.label < g.K:
            return ValidationReport(False, "label-range", f"node {node.id} label {node.label} not in [0, {g.K})")
    for e in g.edges:
        if not (0 <= e.src < n_nodes and 0 <= e.dst < n_nodes):
            return ValidationReport(False, "dangling-edge", f"edge {e.src}->{e.dst} references a missing node")
    for e in g.edges:
        if e.dst == start:
            return ValidationReport(False, "edge-into-start", f"edge {e.src}->{e.dst}")
        if e.src == end:
            return ValidationReport(False, "edge-from-end", f"edge {e.src}->{e.dst}")
    for e in g.edges:
        if not 0 <= e.u <= g.U:
            return ValidationReport(False, "decoder-state-range", f"edge {e.src}->{e.dst} has u={e.u}, U={g.U}")
    for e in g.edges:
        if e.src != e.dst and e.src > e.dst:
            return ValidationReport(False, "bad-topological-order", f"edge {e.src}->{e.dst} goes backwards")
    fwd = _adjacency(g)
    reachable = _reach(start, fwd)
    for node in g.nodes:
        if node.id not in reachable:
            return ValidationReport(False, "unreachable-node", f"node {node.id} not reachable from start")
    rev = {n.id: [] for n in g.nodes}
    for e in g.edges:
        rev[e.dst].append(e.src)
    coreachable = _reach(end, rev)
    for node in g.nodes:
        if node.id not in coreachable:
            return ValidationReport(False, "not-coreachable", f"node {node.id} cannot reach end")
    shortest = shortest_emitting_path(g)
    if shortest != g.min_path_len:
        return ValidationReport(False, "min-path-len-mismatch",
                                f"stored {g.min_path_len}, shortest path has {shortest} emitting nodes")
    return ValidationReport(True)


def count_paths(g: AlignmentGraph, T: int) -> int:
    """Number of start-to-end paths with exactly ``T`` emitting steps (exact integer DP)."""
    counts = [0] * len(g.nodes)
    counts[g.start] = 1
    em = g.emitting_edges()
    for _ in range(T):
        nxt = [0] * len(g.nodes)
        for e in em:
            nxt[e.dst] += counts[e.src]
        counts = nxt
    return sum(counts[n] for n in g.final_nodes())


def make_graph(nodes, edges, U, blank_id, K, labels=(), topology="custom") -> AlignmentGraph:
    """Assemble a user-defined graph, deriving ``min_path_len`` and validating it."""
    nodes = tuple(n if isinstance(n, Node) else Node(int(n[0]), n[1]) for n in nodes)
    edges = tuple(e if isinstance(e, Edge) else Edge(int(e[0]), int(e[1]), int(e[2])) for e in edges)
    g = AlignmentGraph(nodes, edges, U, blank_id, K, 0, labels=tuple(labels), topology=topology)
    shortest = shortest_emitting_path(g) if len(nodes) >= 3 else None
    g = AlignmentGraph(nodes, edges, U, blank_id, K, shortest if shortest is not None else -1,
                       labels=tuple(labels), topology=topology)
    validate_graph(g).raise_if_invalid()
    return g
