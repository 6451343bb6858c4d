"""Label-independent node ordering by colour refinement plus individualization.

Feature extraction runs on the canonically relabelled graph so that every
structural feature, including the seeded Louvain run, is bit-identical for
isomorphic inputs.  The search explores at most ``max_leaves`` leaves of the
individualization tree; when every cell it branches on is an automorphism
orbit (trees, vertex-transitive rings, almost all random graphs) the result
does not depend on the budget.
"""

from __future__ import annotations

from .graph import Graph, new_graph


def _refine(adj: tuple[tuple[int, ...], ...], colors: list[int]) -> list[int]:
    """Refine ``colors`` to the coarsest equitable colouring it contains.

    Colours stay canonical integers: each round ranks the signatures
    ``(old colour, sorted neighbour colours)``.
    """
    n_colors = len(set(colors))
    while True:
        sigs = [(colors[v], tuple(sorted(colors[w] for w in adj[v]))) for v in range(len(adj))]
        rank = {s: i for i, s in enumerate(sorted(set(sigs)))}
        colors = [rank[s] for s in sigs]
        if len(rank) == n_colors:
            return colors
        n_colors = len(rank)


def _individualize(colors: list[int], v: int) -> list[int]:
    keyed = [(c, 0 if u == v else 1) for u, c in enumerate(colors)]
    rank = {k: i for i, k in enumerate(sorted(set(keyed)))}
    return [rank[k] for k in keyed]


def _target_cell(colors: list[int]) -> list[int]:
    cells: dict[int, list[int]] = {}
    for v, c in enumerate(colors):
        cells.setdefault(c, []).append(v)
    multi = [(len(vs), c) for c, vs in cells.items() if len(vs) > 1]
    if not multi:
        return []
    _, c = min(multi)
    return cells[c]


def canonical_order(g: Graph, max_leaves: int = 32) -> list[int]:
    """Return ``pos`` with ``pos[v]`` the canonical index of node ``v``."""
    adj = g.adjacency
    start = _refine(adj, [len(a) for a in adj])
    best: list = [None, None]  # certificate, colouring
    leaves = [0]

    def certificate(colors: list[int]) -> tuple:
        return tuple(sorted((min(colors[u], colors[v]), max(colors[u], colors[v])) for u, v in g.edges))

    def search(colors: list[int]) -> None:
        cell = _target_cell(colors)
        if not cell:
            leaves[0] += 1
            cert = certificate(colors)
            if best[0] is None or cert < best[0]:
                best[0], best[1] = cert, colors
            return
        for v in cell:
            if leaves[0] >= max_leaves:
                return
            search(_refine(adj, _individualize(colors, v)))

    search(start)
    return best[1]


def canonical_form(g: Graph, max_leaves: int = 32) -> tuple[Graph, list[int]]:
    """Relabelled graph and the node map ``pos`` used to build it."""
    pos = canonical_order(g, max_leaves)
    h = new_graph(g.node_count, [(pos[u], pos[v]) for u, v in g.edges], id=g.id)
    return h, pos
