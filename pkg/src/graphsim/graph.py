"""Immutable simple undirected graphs and their canonical JSON files."""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

GENERATORS = ("GNM", "BBA", "NWS", "SBM")


class GraphError(ValueError):
    """Base class for graph validation failures."""


class EndpointOutOfRange(GraphError):
    pass


class SelfLoopError(GraphError):
    pass


class DuplicateEdgeError(GraphError):
    pass


class GraphFileError(GraphError):
    """Raised when a graph file cannot be parsed."""


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes ``0..node_count-1``.

    Edges are stored as a sorted tuple of ``(u, v)`` pairs with ``u < v``.
    Build instances with :func:`new_graph`; the constructor trusts its input.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    id: Optional[str] = None
    _edge_set: frozenset = field(init=False, repr=False, compare=False)
    _adj: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        adj: list[list[int]] = [[] for _ in range(self.node_count)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        object.__setattr__(self, "_edge_set", frozenset(self.edges))
        object.__setattr__(self, "_adj", tuple(tuple(sorted(a)) for a in adj))

    @property
    def n(self) -> int:
        return self.node_count

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        return self._adj

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self._adj[v]

    def has_edge(self, u: int, v: int) -> bool:
        if u > v:
            u, v = v, u
        return (u, v) in self._edge_set

    def linear_density(self) -> float:
        return self.m / self.node_count

    def relabel(self, perm: Sequence[int], id: Optional[str] = None) -> "Graph":
        """Return the graph with node ``v`` renamed to ``perm[v]``."""
        return new_graph(self.node_count, [(perm[u], perm[v]) for u, v in self.edges], id=id)

    def edge_hash(self) -> str:
        h = hashlib.sha256(f"{self.node_count}:".encode())
        h.update(",".join(f"{u}-{v}" for u, v in self.edges).encode())
        return h.hexdigest()


def new_graph(node_count: int, edges: Iterable[Sequence[int]], id: Optional[str] = None) -> Graph:
    """Validate ``edges`` and build a canonical :class:`Graph`."""
    if not isinstance(node_count, int) or node_count < 1:
        raise GraphError(f"node_count must be a positive integer, got {node_count!r}")
    seen: set[tuple[int, int]] = set()
    for e in edges:
        u, v = int(e[0]), int(e[1])
        if not (0 <= u < node_count and 0 <= v < node_count):
            raise EndpointOutOfRange(f"edge ({u}, {v}) has an endpoint outside 0..{node_count - 1}")
        if u == v:
            raise SelfLoopError(f"self-loop at node {u}")
        key = (u, v) if u < v else (v, u)
        if key in seen:
            raise DuplicateEdgeError(f"duplicate edge {key}")
        seen.add(key)
    return Graph(node_count, tuple(sorted(seen)), id)


def degree_sequence(g: Graph) -> list[int]:
    return [len(a) for a in g.adjacency]


def is_connected(g: Graph) -> bool:
    seen = [False] * g.node_count
    seen[0] = True
    queue = deque([0])
    reached = 1
    while queue:
        v = queue.popleft()
        for w in g.adjacency[v]:
            if not seen[w]:
                seen[w] = True
                reached += 1
                queue.append(w)
    return reached == g.node_count


def components(g: Graph) -> list[list[int]]:
    """Connected components, each sorted, ordered by smallest member."""
    label = [-1] * g.node_count
    out: list[list[int]] = []
    for s in range(g.node_count):
        if label[s] >= 0:
            continue
        label[s] = len(out)
        comp = [s]
        queue = deque([s])
        while queue:
            v = queue.popleft()
            for w in g.adjacency[v]:
                if label[w] < 0:
                    label[w] = label[s]
                    comp.append(w)
                    queue.append(w)
        out.append(sorted(comp))
    return out


# -- files -----------------------------------------------------------------


@dataclass(frozen=True)
class GraphFile:
    graph: Graph
    generator: str
    size_class: str
    density_class: str
    seed: int

    @property
    def id(self) -> str:
        return self.graph.id or ""


def dumps_graph_file(gf: GraphFile) -> str:
    doc = {
        "id": gf.id,
        "generator": gf.generator,
        "size_class": gf.size_class,
        "density_class": gf.density_class,
        "seed": gf.seed,
        "n": gf.graph.node_count,
        "edges": [list(e) for e in gf.graph.edges],
    }
    # key order is fixed by the dict literal; no whitespace variance
    return json.dumps(doc, separators=(",", ":")) + "\n"


def loads_graph_file(text: str) -> GraphFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFileError(f"not valid JSON: {exc}") from exc
    required = ("id", "generator", "size_class", "density_class", "seed", "n", "edges")
    if not isinstance(doc, dict) or any(k not in doc for k in required):
        raise GraphFileError(f"graph file must be an object with keys {required}")
    if doc["generator"] not in GENERATORS:
        raise GraphFileError(f"unknown generator {doc['generator']!r}")
    seed = doc["seed"]
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise GraphFileError("seed must be a 64-bit unsigned integer")
    edges = doc["edges"]
    if not isinstance(edges, list) or any(not isinstance(e, list) or len(e) != 2 for e in edges):
        raise GraphFileError("edges must be a list of [u, v] pairs")
    g = new_graph(doc["n"], edges, id=doc["id"])
    return GraphFile(g, doc["generator"], doc["size_class"], doc["density_class"], seed)


def save_graph(path: str | Path, gf: GraphFile) -> None:
    Path(path).write_text(dumps_graph_file(gf), encoding="utf-8")


def load_graph(path: str | Path) -> GraphFile:
    return loads_graph_file(Path(path).read_text(encoding="utf-8"))
