"""Semantic graph construction over the node inventory.

Four graphs per instance:

* quantity comparison: directed edge i -> j when value_i >= value_j,
* date comparison: same rule over (year, month, day) keys,
* text relation: complete undirected graph over Question + Block nodes,
* semantic dependency: union of the three plus a containment edge from
  every Quantity/Date node to the Question/Block node it was mined from.

Adjacency matrices are dense 0/1 float arrays indexed by graph-local
position; node_ids maps positions back to inventory node ids.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .elements import ElementNode, NodeKind, NodeSet
from .errors import IndexMismatch


class GraphKind(str, Enum):
    QUANTITY = "quantity_comparison"
    DATE = "date_comparison"
    TEXT = "text_relation"
    SEMANTIC = "semantic_dependency"


@dataclass
class SemanticGraph:
    kind: GraphKind
    node_ids: list[int]
    adjacency: np.ndarray  # (n, n) float64, A[i, j] = 1 for edge i -> j

    def __post_init__(self):
        n = len(self.node_ids)
        if self.adjacency.shape != (n, n):
            raise IndexMismatch(
                f"{self.kind.value}: adjacency {self.adjacency.shape} vs {n} nodes")

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    def edges(self) -> list[tuple[int, int]]:
        """Directed edges as (src, dst) inventory node ids, sorted."""
        out = []
        for i, j in zip(*np.nonzero(self.adjacency)):
            out.append((self.node_ids[int(i)], self.node_ids[int(j)]))
        return sorted(out)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "node_ids": list(self.node_ids),
            "edges": [list(e) for e in self.edges()],
        }


def _comparison_graph(kind: GraphKind, members: list[ElementNode], keys: list) -> SemanticGraph:
    n = len(members)
    adj = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j and keys[i] >= keys[j]:
                adj[i, j] = 1.0
    return SemanticGraph(kind, [m.node_id for m in members], adj)


def build_quantity_graph(nodes: NodeSet) -> SemanticGraph:
    members = nodes.by_kind(NodeKind.QUANTITY)
    return _comparison_graph(GraphKind.QUANTITY, members, [m.value for m in members])


def build_date_graph(nodes: NodeSet) -> SemanticGraph:
    members = nodes.by_kind(NodeKind.DATE)
    return _comparison_graph(GraphKind.DATE, members, [m.date_key for m in members])


def build_text_graph(nodes: NodeSet) -> SemanticGraph:
    members = nodes.by_kind(NodeKind.QUESTION) + nodes.by_kind(NodeKind.BLOCK)
    n = len(members)
    adj = np.ones((n, n)) - np.eye(n)
    return SemanticGraph(GraphKind.TEXT, [m.node_id for m in members], adj)


def build_semantic_graph(nodes: NodeSet, quantity: SemanticGraph, date: SemanticGraph,
                         text: SemanticGraph) -> SemanticGraph:
    """Union of the three graphs re-indexed onto the full inventory, plus a
    containment edge from each leaf element to its parent node."""
    node_ids = [n.node_id for n in nodes.nodes]
    pos = {nid: i for i, nid in enumerate(node_ids)}
    n = len(node_ids)
    adj = np.zeros((n, n))
    for sub in (quantity, date, text):
        for nid in sub.node_ids:
            if nid not in pos:
                raise IndexMismatch(
                    f"{sub.kind.value}: node {nid} missing from inventory")
        for src, dst in zip(*np.nonzero(sub.adjacency)):
            adj[pos[sub.node_ids[int(src)]], pos[sub.node_ids[int(dst)]]] = 1.0
    for node in nodes.nodes:
        if node.parent_id is not None:
            adj[pos[node.node_id], pos[node.parent_id]] = 1.0
    return SemanticGraph(GraphKind.SEMANTIC, node_ids, adj)


def build_all_graphs(nodes: NodeSet) -> dict[GraphKind, SemanticGraph]:
    qc = build_quantity_graph(nodes)
    dc = build_date_graph(nodes)
    tr = build_text_graph(nodes)
    sd = build_semantic_graph(nodes, qc, dc, tr)
    return {GraphKind.QUANTITY: qc, GraphKind.DATE: dc, GraphKind.TEXT: tr, GraphKind.SEMANTIC: sd}
