"""Independent reference computations used only by the tests.

None of these share code with the package's own algorithms.
"""

from __future__ import annotations

import itertools
import math


def adjacency_sets(n, edges):
    adj = [set() for _ in range(n)]
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    return adj


def union_find_connected(n, edges) -> bool:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        parent[find(u)] = find(v)
    return len({find(v) for v in range(n)}) == 1


def all_shortest_paths(adj, s, t):
    """Every shortest s-t path, found by iterative deepening over simple paths."""
    n = len(adj)
    for length in range(1, n):
        found = []

        def walk(path):
            if len(path) - 1 == length:
                if path[-1] == t:
                    found.append(list(path))
                return
            for w in adj[path[-1]]:
                if w not in path:
                    path.append(w)
                    walk(path)
                    path.pop()

        walk([s])
        if found:
            return found
    return []


def betweenness_bruteforce(n, edges):
    adj = adjacency_sets(n, edges)
    raw = [0.0] * n
    for s, t in itertools.combinations(range(n), 2):
        paths = all_shortest_paths(adj, s, t)
        if not paths:
            continue
        for v in range(n):
            if v in (s, t):
                continue
            raw[v] += sum(1 for p in paths if v in p) / len(paths)
    if n <= 2:
        return [0.0] * n
    return [r * 2.0 / ((n - 1) * (n - 2)) for r in raw]


def clustering_by_triangles(n, edges):
    adj = adjacency_sets(n, edges)
    out = []
    for v in range(n):
        d = len(adj[v])
        if d < 2:
            out.append(0.0)
            continue
        tri = sum(1 for a, b in itertools.combinations(sorted(adj[v]), 2) if b in adj[a])
        out.append(2.0 * tri / (d * (d - 1)))
    return out


def set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def modularity_direct(n, edges, blocks):
    m = len(edges)
    label = {}
    for i, b in enumerate(blocks):
        for v in b:
            label[v] = i
    deg = [0] * n
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    # Newman's A_ij - k_i k_j / 2m form, summed over all ordered node pairs
    adj = adjacency_sets(n, edges)
    q = 0.0
    for i in range(n):
        for j in range(n):
            if label[i] == label[j]:
                q += (1.0 if j in adj[i] else 0.0) - deg[i] * deg[j] / (2.0 * m)
    return q / (2.0 * m)


def best_partition_exhaustive(n, edges):
    best = None
    for blocks in set_partitions(list(range(n))):
        q = modularity_direct(n, edges, blocks)
        if best is None or q > best[0] + 1e-12:
            best = (q, blocks)
    return best


def jsd_direct(p, q):
    total = 0.0
    for a, b in zip(p, q):
        m = (a + b) / 2
        if a > 0:
            total += 0.5 * a * math.log(a / m, 2)
        if b > 0:
            total += 0.5 * b * math.log(b / m, 2)
    return total


def pearson_mp(x, y, dps=60):
    import mpmath

    with mpmath.workdps(dps):
        xs = [mpmath.mpf(v) for v in x]
        ys = [mpmath.mpf(v) for v in y]
        n = len(xs)
        mx = mpmath.fsum(xs) / n
        my = mpmath.fsum(ys) / n
        sxy = mpmath.fsum((a - mx) * (b - my) for a, b in zip(xs, ys))
        sxx = mpmath.fsum((a - mx) ** 2 for a in xs)
        syy = mpmath.fsum((b - my) ** 2 for b in ys)
        return float(sxy / mpmath.sqrt(sxx * syy))
