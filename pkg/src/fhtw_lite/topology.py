"""
Tree graphs carrying tree-based functional tensor networks.

Node ids are strings: external nodes ``"v(k,l)"`` bound to the wavelet coordinate ``c[k,l]`` and
internal nodes ``"w(k,l)"``. The FHT-W trees are rooted at the coarsest coefficient ``v(1,-1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator

import networkx as nx

from fhtw_lite.errors import RejectedInputError
from fhtw_lite.wavelet import DimensionKind, label_index

EXTERNAL = "external"
INTERNAL = "internal"


def external_id(k: int, l: int) -> str:
    return f"v({k},{l})"


def internal_id(k: int, l: int) -> str:
    return f"w({k},{l})"


@dataclass(frozen=True)
class DirectedEdge:
    """Edge ``source -> target``; its subtree is the component of ``source`` once the edge is cut."""
    source: str
    target: str

    def reversed(self) -> DirectedEdge:
        return DirectedEdge(self.target, self.source)

    def __str__(self):
        return f"{self.source}->{self.target}"


class TreeTopology:
    """
    A rooted tree whose external nodes each carry one variable.

    Attributes:
        graph (nx.Graph): Nodes carry ``kind`` (external/internal), ``label`` (k, l) and, for
            external nodes, ``variable`` (flat canonical index).
        root (str): Root node id.
        kind (DimensionKind | None): Lattice kind the tree was built for, if any.
    """
    def __init__(self, graph: nx.Graph, root: str, kind: DimensionKind | None = None):
        if not nx.is_tree(graph):
            raise RejectedInputError("Tensor network graph must be connected and acyclic")
        if root not in graph:
            raise RejectedInputError(f"Root {root} is not a node of the tree")

        variables = sorted(data["variable"] for _, data in graph.nodes(data=True) if data["kind"] == EXTERNAL)
        assert variables == list(range(len(variables))), "External variables must cover 0..d-1 exactly once"

        self.graph = graph
        self.root = root
        self.kind = kind

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(d={self.d}, nodes={len(self)}, root={self.root})"

    def __len__(self):
        return self.graph.number_of_nodes()

    @property
    def d(self) -> int:
        return len(self.variable_nodes)

    @property
    def nodes(self) -> list[str]:
        return list(self.graph.nodes)

    @cached_property
    def edges(self) -> list[tuple[str, str]]:
        """Edges as ``(child, parent)`` pairs in breadth-first order from the root."""
        out, queue = [], [self.root]
        while queue:
            p = queue.pop(0)
            out.extend((c, p) for c in self.children[p])
            queue.extend(self.children[p])
        return out

    def is_external(self, node: str) -> bool:
        return self.graph.nodes[node]["kind"] == EXTERNAL

    def variable(self, node: str) -> int | None:
        return self.graph.nodes[node].get("variable")

    @cached_property
    def variable_nodes(self) -> list[str]:
        """External node of each variable, indexed by variable."""
        nodes = {data["variable"]: n for n, data in self.graph.nodes(data=True) if data["kind"] == EXTERNAL}
        return [nodes[i] for i in range(len(nodes))]

    def _sorted(self, nodes) -> list[str]:
        return sorted(nodes, key=self._order_key)

    def _order_key(self, node: str):
        data = self.graph.nodes[node]
        k, l = data.get("label", (0, 0))
        return (l, k, data["kind"] != EXTERNAL, node)

    @cached_property
    def parent(self) -> dict[str, str | None]:
        parents = {self.root: None}
        parents.update(nx.bfs_predecessors(self.graph, self.root))
        return parents

    @cached_property
    def children(self) -> dict[str, list[str]]:
        kids = {n: [] for n in self.graph.nodes}
        for c, p in self.parent.items():
            if p is not None:
                kids[p].append(c)
        return {n: self._sorted(cs) for n, cs in kids.items()}

    def bonds(self, node: str) -> list[str]:
        """Neighbours of ``node`` in canonical leg order: parent first, then children."""
        p = self.parent[node]
        return ([] if p is None else [p]) + self.children[node]

    def postorder(self) -> list[str]:
        """Nodes with every child listed before its parent."""
        order, stack = [], [(self.root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            stack.append((node, True))
            stack.extend((c, False) for c in reversed(self.children[node]))
        return order

    def directed_edges(self) -> Iterator[DirectedEdge]:
        for c, p in self.edges:
            yield DirectedEdge(c, p)
            yield DirectedEdge(p, c)

    def max_order(self) -> int:
        """Largest number of tensor legs (bonds plus physical leg) over all nodes."""
        return max(self.graph.degree[n] + int(self.is_external(n)) for n in self.graph.nodes)

    def check_edge(self, e: DirectedEdge):
        if not self.graph.has_edge(e.source, e.target):
            raise RejectedInputError(f"{e} is not an edge of the tree")

    @cached_property
    def _subtrees(self) -> dict[DirectedEdge, frozenset[int]]:
        # one post-order sweep gives the child-side sets; the parent side is the complement
        below = {}
        for n in self.postorder():
            own = {self.variable(n)} if self.is_external(n) else set()
            below[n] = frozenset(own.union(*(below[c] for c in self.children[n])))
        everything = frozenset(range(self.d))
        out = {}
        for c, p in self.edges:
            out[DirectedEdge(c, p)] = below[c]
            out[DirectedEdge(p, c)] = everything - below[c]
        return out

    def to_dict(self) -> dict:
        """JSON-ready description (consumed by ``describe-tree``)."""
        nodes = []
        for n in self.postorder()[::-1]:
            data = self.graph.nodes[n]
            nodes.append({"id": n, "kind": data["kind"], "label": list(data.get("label", ())),
                          "variable": data.get("variable")})
        return {"root": self.root, "d": self.d, "kind": None if self.kind is None else self.kind.value,
                "nodes": nodes, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, d: dict) -> TreeTopology:
        g = nx.Graph()
        for n in d["nodes"]:
            attrs = {"kind": n["kind"], "label": tuple(n["label"])}
            if n["kind"] == EXTERNAL:
                attrs["variable"] = int(n["variable"])
            g.add_node(n["id"], **attrs)
        g.add_edges_from(tuple(e) for e in d["edges"])
        return cls(g, d["root"], None if d.get("kind") is None else DimensionKind(d["kind"]))


@dataclass
class RankBudget:
    """Target rank and sketch size per tree edge, keyed by ``(child, parent)``."""
    ranks: dict[tuple[str, str], int]
    sketch_sizes: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self):
        for e, r in self.ranks.items():
            if r < 1:
                raise RejectedInputError(f"Rank on {e} must be >= 1, got {r}")
            s = self.sketch_sizes.setdefault(e, 2 * r)
            if s <= r:
                raise RejectedInputError(f"Sketch size {s} on {e} must exceed the rank {r}")

    @classmethod
    def uniform(cls, tree: TreeTopology, r: int, r_sketch: int | None = None,
                overrides: dict[tuple[str, str], int] | None = None) -> RankBudget:
        ranks = {e: r for e in tree.edges}
        ranks.update(overrides or {})
        sizes = {e: (r_sketch if r_sketch is not None else 2 * ranks[e]) for e in tree.edges}
        return cls(ranks, sizes)


def build_tree_1d(L: int) -> TreeTopology:
    """FHT-W tree over ``d = 2**L`` wavelet coordinates.

    Each ``v(k,l)`` with ``l <= L-2`` reaches its two children ``v(2k-1,l+1)``, ``v(2k,l+1)``
    through the internal node ``w(k,l)``; ``v(1,0)`` hangs off the root ``v(1,-1)``.
    """
    if int(L) != L or L < 1:
        raise RejectedInputError(f"Tree needs L >= 1, got {L}")

    g = nx.Graph()
    g.add_node(external_id(1, -1), kind=EXTERNAL, label=(1, -1), variable=label_index(1, -1))
    for l in range(L):
        for k in range(1, 2 ** l + 1):
            g.add_node(external_id(k, l), kind=EXTERNAL, label=(k, l), variable=label_index(k, l))
    for l in range(L - 1):
        for k in range(1, 2 ** l + 1):
            w = internal_id(k, l)
            g.add_node(w, kind=INTERNAL, label=(k, l))
            g.add_edge(w, external_id(k, l))
            g.add_edge(w, external_id(2 * k - 1, l + 1))
            g.add_edge(w, external_id(2 * k, l + 1))
    g.add_edge(external_id(1, 0), external_id(1, -1))

    return TreeTopology(g, external_id(1, -1), DimensionKind.LINE_1D)


def build_tree_2d(L: int) -> TreeTopology:
    """FHT-W tree for an ``m x m`` grid, ``m = 2**L``: the 1D tree with ``2L`` levels.

    Variables bind to the 2D canonical flattening of :func:`fhtw_lite.wavelet.multires_2d`, whose
    bit-interleaved labels share the 1D layout.
    """
    if int(L) != L or L < 1:
        raise RejectedInputError(f"Tree needs L >= 1, got {L}")
    tree = build_tree_1d(2 * L)
    tree.kind = DimensionKind.GRID_2D
    return tree


def subtree_variables(tree: TreeTopology, e: DirectedEdge) -> frozenset[int]:
    """Variables on the ``e.source`` side of the cut edge."""
    tree.check_edge(e)
    return tree._subtrees[e]


def interface_variables(tree: TreeTopology, e: DirectedEdge, count: int) -> list[int]:
    """Up to ``count`` subtree variables closest (in hops) to ``e.target``.

    Ties are broken by ascending canonical variable index.
    """
    if count < 1:
        raise RejectedInputError(f"Interface count must be >= 1, got {count}")
    tree.check_edge(e)

    cut = tree.graph.copy()
    cut.remove_edge(e.source, e.target)
    hops = nx.single_source_shortest_path_length(cut, e.source)
    ranked = sorted((h + 1, tree.variable(n)) for n, h in hops.items() if tree.is_external(n))
    return [v for _, v in ranked[:count]]
