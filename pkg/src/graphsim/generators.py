"""Synthetic graph families at a targeted size and linear density.

All randomness flows through numpy's PCG64 bit generator seeded by a
``SeedSequence`` built from ``(seed, attempt)``, so a corpus is reproducible
from its manifest alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .graph import Graph, components, is_connected, new_graph

RNG_ALGORITHM = "numpy.PCG64 via SeedSequence([seed, attempt])"


class GeneratorError(ValueError):
    """Parameters outside a generator's valid range."""


class InfeasibleConfiguration(GeneratorError):
    """A density class cannot be reached by a family under its constraints."""


class GenerationFailure(RuntimeError):
    def __init__(self, spec: "GraphSpec", attempts: int):
        super().__init__(f"no connected draw for {spec.id} after {attempts} attempts")
        self.spec = spec
        self.attempts = attempts


def make_rng(seed: int, attempt: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(attempt)])))


# -- class grid --------------------------------------------------------------


@dataclass(frozen=True)
class ClassGrid:
    size_classes: dict[str, int] = field(
        default_factory=lambda: {"S1": 25, "S2": 50, "S3": 100, "S4": 250}
    )
    density_classes: dict[str, float] = field(
        default_factory=lambda: {"D1": 1.2, "D2": 2.0, "D3": 3.5}
    )
    tolerance: float = 0.2

    def __post_init__(self) -> None:
        if len(self.size_classes) != 4 or len(self.density_classes) != 3:
            raise ValueError("class grid needs exactly 4 size classes and 3 density classes")
        sizes = list(self.size_classes.values())
        dens = list(self.density_classes.values())
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("size classes must be strictly increasing")
        if any(b <= a for a, b in zip(dens, dens[1:])):
            raise ValueError("density classes must be strictly increasing")
        if sizes[0] < 3 or dens[0] <= 0:
            raise ValueError("sizes must be >= 3 and densities positive")
        if not 0 < self.tolerance < 1:
            raise ValueError("tolerance must lie in (0, 1)")

    def within_tolerance(self, density_class: str, achieved: float) -> bool:
        target = self.density_classes[density_class]
        return abs(achieved - target) <= self.tolerance * target + 1e-12


@dataclass(frozen=True)
class GeneratorParams:
    generator: str
    target_n: int
    target_linear_density: float
    m: Optional[int] = None
    attach_m: Optional[int] = None
    ring_k: Optional[int] = None
    shortcut_p: Optional[float] = None
    block_sizes: Optional[tuple[int, ...]] = None
    p_in: Optional[float] = None
    p_out: Optional[float] = None


@dataclass(frozen=True)
class GraphSpec:
    id: str
    generator: str
    size_class: str
    density_class: str
    seed: int


# -- families ----------------------------------------------------------------


def _unrank_pairs(idx: np.ndarray, n: int) -> list[tuple[int, int]]:
    # row-major enumeration of the strict upper triangle
    pairs = []
    row_start = [0] * n
    acc = 0
    for u in range(n):
        row_start[u] = acc
        acc += n - 1 - u
    starts = np.array(row_start)
    us = np.searchsorted(starts, idx, side="right") - 1
    for k, u in zip(idx.tolist(), us.tolist()):
        v = u + 1 + (k - row_start[u])
        pairs.append((u, v))
    return pairs


def gen_gnm(n: int, m: int, seed: int, attempt: int = 0) -> Graph:
    total = n * (n - 1) // 2
    if n < 1 or not 0 <= m <= total:
        raise GeneratorError(f"GNM needs 0 <= m <= C(n,2)={total}, got n={n}, m={m}")
    rng = make_rng(seed, attempt)
    idx = np.sort(rng.choice(total, size=m, replace=False)) if m else np.array([], dtype=int)
    return new_graph(n, _unrank_pairs(idx, n))


def gen_bba(n: int, attach_m: int, seed: int, attempt: int = 0) -> Graph:
    if not 1 <= attach_m < n:
        raise GeneratorError(f"BBA needs 1 <= attach_m < n, got n={n}, attach_m={attach_m}")
    rng = make_rng(seed, attempt)
    edges = [(i, i + 1) for i in range(attach_m - 1)]  # path core
    deg = np.zeros(n, dtype=float)
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    for new in range(attach_m, n):
        weights = deg[:new]
        total = weights.sum()
        if new == attach_m:
            targets = np.arange(attach_m)
        elif total == 0:
            targets = rng.choice(new, size=attach_m, replace=False)
        else:
            targets = rng.choice(new, size=attach_m, replace=False, p=weights / total)
        for t in sorted(int(t) for t in targets):
            edges.append((t, new))
            deg[t] += 1
            deg[new] += 1
    return new_graph(n, edges)


def gen_nws(n: int, ring_k: int, shortcut_p: float, seed: int, attempt: int = 0) -> Graph:
    if ring_k % 2 or not 2 <= ring_k < n:
        raise GeneratorError(f"NWS needs even 2 <= ring_k < n, got n={n}, ring_k={ring_k}")
    if not 0.0 <= shortcut_p <= 1.0:
        raise GeneratorError(f"shortcut_p must lie in [0, 1], got {shortcut_p}")
    rng = make_rng(seed, attempt)
    ring = []
    for u in range(n):
        for j in range(1, ring_k // 2 + 1):
            ring.append((u, (u + j) % n))
    adj = [set() for _ in range(n)]
    for u, v in ring:
        adj[u].add(v)
        adj[v].add(u)
    edges = [tuple(sorted(e)) for e in ring]
    coins = rng.random(len(ring))
    for (u, _), c in zip(ring, coins):
        if c >= shortcut_p:
            continue
        free = [w for w in range(n) if w != u and w not in adj[u]]
        if not free:
            continue
        w = free[int(rng.integers(len(free)))]
        adj[u].add(w)
        adj[w].add(u)
        edges.append((min(u, w), max(u, w)))
    return new_graph(n, edges)


def gen_sbm(
    block_sizes: Sequence[int], p_in: float, p_out: float, seed: int, attempt: int = 0
) -> Graph:
    if not block_sizes or any(int(b) < 1 for b in block_sizes):
        raise GeneratorError("block sizes must be positive")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise GeneratorError("probabilities must lie in [0, 1]")
    n = int(sum(block_sizes))
    block = np.repeat(np.arange(len(block_sizes)), block_sizes)
    iu, ju = np.triu_indices(n, k=1)
    same = block[iu] == block[ju]
    prob = np.where(same, p_in, p_out)
    rng = make_rng(seed, attempt)
    keep = rng.random(len(iu)) < prob
    return new_graph(n, zip(iu[keep].tolist(), ju[keep].tolist()))


# -- targeting ---------------------------------------------------------------


def equal_blocks(n: int, c: int) -> tuple[int, ...]:
    base, extra = divmod(n, c)
    return tuple(base + (1 if i < extra else 0) for i in range(c))


def sbm_expected_edges(block_sizes: Sequence[int], p_in: float, p_out: float) -> float:
    n = sum(block_sizes)
    within = sum(b * (b - 1) // 2 for b in block_sizes)
    return p_in * within + p_out * (n * (n - 1) // 2 - within)


def params_for_target(
    generator: str,
    size_class: str,
    density_class: str,
    grid: ClassGrid,
    sbm_ratio: float = 8.0,
) -> GeneratorParams:
    if size_class not in grid.size_classes or density_class not in grid.density_classes:
        raise GeneratorError(f"unknown class label {size_class}/{density_class}")
    n = grid.size_classes[size_class]
    d = grid.density_classes[density_class]
    base = dict(generator=generator, target_n=n, target_linear_density=d)

    def check(expected_d: float) -> None:
        if abs(expected_d - d) > grid.tolerance * d + 1e-12:
            raise InfeasibleConfiguration(
                f"{generator} cannot reach density {d} at n={n} (expected {expected_d:.3f})"
            )

    if generator == "GNM":
        m = round(d * n)
        if m > n * (n - 1) // 2:
            raise InfeasibleConfiguration(f"GNM: m={m} exceeds C({n},2)")
        check(m / n)
        return GeneratorParams(**base, m=m)
    if generator == "BBA":
        attach = max(1, round(d))
        if attach >= n:
            raise InfeasibleConfiguration(f"BBA: attach_m={attach} must be < n={n}")
        check((attach * (n - attach) + attach - 1) / n)
        return GeneratorParams(**base, attach_m=attach)
    if generator == "NWS":
        k = 2 * max(1, math.floor(d))
        if k >= n:
            raise InfeasibleConfiguration(f"NWS: ring_k={k} must be < n={n}")
        p = min(1.0, max(0.0, d / (k / 2) - 1.0))
        check(k / 2 * (1 + p))
        return GeneratorParams(**base, ring_k=k, shortcut_p=p)
    if generator == "SBM":
        c = max(2, round(n / 25))
        blocks = equal_blocks(n, c)
        within = sum(b * (b - 1) // 2 for b in blocks)
        between = n * (n - 1) // 2 - within
        p_out = d * n / (sbm_ratio * within + between)
        p_in = sbm_ratio * p_out
        if p_in > 1.0:
            raise InfeasibleConfiguration(f"SBM: p_in={p_in:.3f} exceeds 1 at n={n}, d={d}")
        return GeneratorParams(**base, block_sizes=blocks, p_in=p_in, p_out=p_out)
    raise GeneratorError(f"unknown generator {generator!r}")


def draw(params: GeneratorParams, seed: int, attempt: int = 0) -> Graph:
    g = params.generator
    if g == "GNM":
        return gen_gnm(params.target_n, params.m, seed, attempt)
    if g == "BBA":
        return gen_bba(params.target_n, params.attach_m, seed, attempt)
    if g == "NWS":
        return gen_nws(params.target_n, params.ring_k, params.shortcut_p, seed, attempt)
    if g == "SBM":
        return gen_sbm(params.block_sizes, params.p_in, params.p_out, seed, attempt)
    raise GeneratorError(f"unknown generator {g!r}")


@dataclass(frozen=True)
class Generated:
    graph: Graph
    attempts: int
    repaired: bool = False


def repair_connectivity(g: Graph, seed: int) -> Graph:
    """Join components while keeping ``|V|`` and ``|E|`` fixed.

    Each step deletes one edge that lies on a cycle (so no component splits)
    and adds an edge between the two smallest-indexed components.
    """
    rng = make_rng(seed, 2**32)
    edges = set(g.edges)
    n = g.node_count
    while True:
        cur = new_graph(n, edges)
        comps = components(cur)
        if len(comps) == 1:
            return cur
        order = sorted(edges)
        victim = None
        for i in rng.permutation(len(order)).tolist():
            if not _is_bridge(cur, order[i]):
                victim = order[i]
                break
        if victim is None:
            raise GeneratorError("graph has too few edges to be made connected")
        edges.discard(victim)
        a = comps[0][int(rng.integers(len(comps[0])))]
        b = comps[1][int(rng.integers(len(comps[1])))]
        edges.add((min(a, b), max(a, b)))


def _is_bridge(g: Graph, e: tuple[int, int]) -> bool:
    u, v = e
    seen = {u}
    stack = [u]
    while stack:
        x = stack.pop()
        for y in g.adjacency[x]:
            if (x == u and y == v) or (x == v and y == u):
                continue
            if y == v:
                return False
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return True


def generate_connected(
    spec: GraphSpec,
    grid: ClassGrid,
    max_attempts: int = 100,
    repair: bool = False,
    params: Optional[GeneratorParams] = None,
) -> Generated:
    """Draw sub-seeded samples until one is connected and on-density.

    With ``repair`` set, a family that never yields a connected draw falls
    back to :func:`repair_connectivity` on its first on-density draw.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    if params is None:
        params = params_for_target(spec.generator, spec.size_class, spec.density_class, grid)
    first_on_density: Optional[tuple[int, Graph]] = None
    for attempt in range(max_attempts):
        g = draw(params, spec.seed, attempt)
        if not grid.within_tolerance(spec.density_class, g.linear_density()):
            continue
        if is_connected(g):
            return Generated(_with_id(g, spec.id), attempt + 1)
        if first_on_density is None:
            first_on_density = (attempt, g)
    if repair and first_on_density is not None:
        attempt, g = first_on_density
        fixed = repair_connectivity(g, spec.seed)
        return Generated(_with_id(fixed, spec.id), max_attempts, repaired=True)
    raise GenerationFailure(spec, max_attempts)


def _with_id(g: Graph, id: str) -> Graph:
    return Graph(g.node_count, g.edges, id)
