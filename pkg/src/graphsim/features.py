"""Per-graph structural features: degrees, clustering, betweenness, communities."""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .canonical import canonical_form
from .graph import Graph, degree_sequence

FEATURE_VERSION = "features-1"


class UndefinedModularity(ValueError):
    pass


# -- clustering / betweenness -------------------------------------------------


def local_clustering(g: Graph) -> list[float]:
    out = []
    for v in range(g.node_count):
        nbrs = g.neighbors(v)
        d = len(nbrs)
        if d < 2:
            out.append(0.0)
            continue
        t = 0
        for i in range(d):
            a = nbrs[i]
            for j in range(i + 1, d):
                if g.has_edge(a, nbrs[j]):
                    t += 1
        out.append(2.0 * t / (d * (d - 1)))
    return out


def betweenness_brandes(g: Graph, normalized: bool = True) -> list[float]:
    """Brandes accumulation over unweighted shortest paths.

    Normalised values are the undirected pair-dependencies scaled by
    ``2/((n-1)(n-2))``; graphs with fewer than three nodes return zeros.
    """
    n = g.node_count
    adj = g.adjacency
    cb = [0.0] * n
    for s in range(n):
        stack = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = [0] * n
        dist = [-1] * n
        sigma[s] = 1
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        while stack:
            w = stack.pop()
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                cb[w] += delta[w]
    # each unordered pair was counted from both endpoints
    if not normalized:
        return [c / 2.0 for c in cb]
    if n <= 2:
        return [0.0] * n
    scale = 1.0 / ((n - 1) * (n - 2))
    return [min(1.0, c * scale) for c in cb]


# -- communities -------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    community_of: tuple[int, ...]
    levels: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        ids = set(self.community_of)
        if ids != set(range(len(ids))):
            raise ValueError("community ids must be dense 0..c-1")

    @property
    def n_communities(self) -> int:
        return len(set(self.community_of))

    def communities(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n_communities)]
        for v, c in enumerate(self.community_of):
            out[c].append(v)
        return out

    def sizes(self) -> list[int]:
        return sorted((len(c) for c in self.communities()), reverse=True)


def dense_partition(labels, levels=()) -> Partition:
    remap: dict = {}
    for c in labels:
        remap.setdefault(c, len(remap))
    return Partition(tuple(remap[c] for c in labels), tuple(levels))


def modularity(g: Graph, partition: Partition) -> float:
    m = g.m
    if m == 0:
        raise UndefinedModularity("modularity is undefined for a graph without edges")
    comm = partition.community_of
    if len(comm) != g.node_count:
        raise ValueError("partition size does not match graph")
    c = partition.n_communities
    inner = [0] * c
    deg = [0] * c
    for u, v in g.edges:
        deg[comm[u]] += 1
        deg[comm[v]] += 1
        if comm[u] == comm[v]:
            inner[comm[u]] += 1
    return sum(inner[i] / m - (deg[i] / (2.0 * m)) ** 2 for i in range(c))


def structure_seed(g: Graph) -> int:
    text = f"{g.node_count}:" + ",".join(f"{u}-{v}" for u, v in g.edges)
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "big")


def _weighted_modularity(nbrs: list[dict[int, float]], loops: list[float], comm: list[int], m2: float) -> float:
    inner: dict[int, float] = {}
    tot: dict[int, float] = {}
    for i, row in enumerate(nbrs):
        c = comm[i]
        k = 2 * loops[i] + sum(row.values())
        tot[c] = tot.get(c, 0.0) + k
        inner[c] = inner.get(c, 0.0) + 2 * loops[i]
        for j, w in row.items():
            if comm[j] == c:
                inner[c] += w
    return sum(inner[c] / m2 - (tot[c] / m2) ** 2 for c in tot)


def _one_level(nbrs, loops, rng, m2) -> tuple[list[int], bool]:
    n = len(nbrs)
    comm = list(range(n))
    k = [2 * loops[i] + sum(nbrs[i].values()) for i in range(n)]
    tot = list(k)
    order = rng.permutation(n).tolist()
    moved_any = False
    improved = True
    while improved:
        improved = False
        for i in order:
            own = comm[i]
            links: dict[int, float] = {}
            for j, w in nbrs[i].items():
                links[comm[j]] = links.get(comm[j], 0.0) + w
            tot[own] -= k[i]
            # gain of inserting i into community c, up to a shared factor 2/m2
            own_gain = links.get(own, 0.0) - tot[own] * k[i] / m2
            best, best_gain = own, float("-inf")
            for c in sorted(set(links) | {own}):
                gain = links.get(c, 0.0) - tot[c] * k[i] / m2
                if gain > best_gain + 1e-12:
                    best, best_gain = c, gain
            if best_gain <= own_gain + 1e-12:
                best = own
            tot[best] += k[i]
            if best != own:
                comm[i] = best
                improved = True
                moved_any = True
    return comm, moved_any


def louvain(g: Graph, seed: Optional[int] = None, tol: float = 1e-7) -> Partition:
    """Two-phase Louvain modularity maximisation at resolution 1.

    ``seed`` drives the node visit order; it defaults to a hash of the edge
    list so the result is a function of ``g`` alone.  The returned partition
    records the modularity reached after each aggregation level.
    """
    n = g.node_count
    if g.m == 0:
        return dense_partition(range(n))
    if seed is None:
        seed = structure_seed(g)
    rng = np.random.Generator(np.random.PCG64(seed))
    nbrs: list[dict[int, float]] = [dict.fromkeys(g.neighbors(v), 1.0) for v in range(n)]
    loops = [0.0] * n
    m2 = 2.0 * g.m
    member = list(range(n))  # original node -> current super-node
    q = _weighted_modularity(nbrs, loops, list(range(n)), m2)
    levels = []
    while True:
        comm, moved = _one_level(nbrs, loops, rng, m2)
        if not moved:
            break
        new_q = _weighted_modularity(nbrs, loops, comm, m2)
        remap: dict[int, int] = {}
        for c in comm:
            remap.setdefault(c, len(remap))
        comm = [remap[c] for c in comm]
        member = [comm[s] for s in member]
        size = len(remap)
        agg: list[dict[int, float]] = [{} for _ in range(size)]
        agg_loops = [0.0] * size
        for i, row in enumerate(nbrs):
            ci = comm[i]
            agg_loops[ci] += loops[i]
            for j, w in row.items():
                cj = comm[j]
                if ci == cj:
                    if i < j:
                        agg_loops[ci] += w
                else:
                    agg[ci][cj] = agg[ci].get(cj, 0.0) + w
        nbrs, loops = agg, agg_loops
        levels.append(new_q)
        gained = new_q - q
        q = new_q
        if gained < tol:
            break
    return dense_partition(member, levels)


# -- profile -----------------------------------------------------------------


@dataclass(frozen=True)
class FeatureProfile:
    degree_dist: tuple[float, ...]
    clustering_values: tuple[float, ...]
    betweenness_values: tuple[float, ...]
    community_sizes: tuple[int, ...]
    modularity: float

    def to_json(self) -> dict:
        return {
            "degree_dist": list(self.degree_dist),
            "clustering_values": list(self.clustering_values),
            "betweenness_values": list(self.betweenness_values),
            "community_sizes": list(self.community_sizes),
            "modularity": self.modularity,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureProfile":
        return cls(
            tuple(doc["degree_dist"]),
            tuple(doc["clustering_values"]),
            tuple(doc["betweenness_values"]),
            tuple(doc["community_sizes"]),
            doc["modularity"],
        )


def degree_distribution(g: Graph) -> list[float]:
    degs = degree_sequence(g)
    counts = [0] * (max(degs) + 1)
    for d in degs:
        counts[d] += 1
    return [c / g.node_count for c in counts]


def extract_features(g: Graph) -> FeatureProfile:
    """Compute every feature on the canonical relabelling of ``g``.

    Per-node lists are returned in ``g``'s own node order.
    """
    h, pos = canonical_form(g)
    cc = local_clustering(h)
    bc = betweenness_brandes(h)
    part = louvain(h)
    q = modularity(h, part) if h.m else 0.0
    return FeatureProfile(
        tuple(degree_distribution(h)),
        tuple(cc[pos[v]] for v in range(g.node_count)),
        tuple(bc[pos[v]] for v in range(g.node_count)),
        tuple(part.sizes()),
        q,
    )


def save_profile(path: str | Path, g: Graph, profile: FeatureProfile) -> None:
    doc = {"graph_id": g.id, "version": FEATURE_VERSION, "graph_hash": g.edge_hash(), **profile.to_json()}
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def load_profile(path: str | Path, g: Graph) -> Optional[FeatureProfile]:
    """Cached profile for ``g``, or None if missing or stale."""
    p = Path(path)
    if not p.exists():
        return None
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return None
    if doc.get("version") != FEATURE_VERSION or doc.get("graph_hash") != g.edge_hash():
        return None
    return FeatureProfile.from_json(doc)


def cached_features(path: str | Path, g: Graph) -> FeatureProfile:
    profile = load_profile(path, g)
    if profile is None:
        profile = extract_features(g)
        save_profile(path, g, profile)
    return profile
