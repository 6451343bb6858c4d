"""Graph builders, strategies and config writers shared by the tests."""

from __future__ import annotations

import itertools
import textwrap
from pathlib import Path

import numpy as np
from hypothesis import strategies as st

from graphsim.graph import Graph, new_graph

FIXTURES = Path(__file__).parent / "fixtures"


# -- small named graphs --------------------------------------------------------


def path_graph(n: int) -> Graph:
    return new_graph(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    return new_graph(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> Graph:
    return new_graph(n, itertools.combinations(range(n), 2))


def star_graph(leaves: int) -> Graph:
    return new_graph(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def triangle() -> Graph:
    return complete_graph(3)


def bridge_graph() -> Graph:
    """Two triangles joined by the edge (2, 3)."""
    return new_graph(6, [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)])


def random_graph(rng: np.random.Generator, n: int, p: float) -> Graph:
    edges = [(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < p]
    return new_graph(n, edges)


def random_connected_graph(rng: np.random.Generator, n: int, p: float) -> Graph:
    """Random spanning tree plus independent extra edges."""
    order = rng.permutation(n)
    edges = {tuple(sorted((int(order[i]), int(order[rng.integers(0, i)])))) for i in range(1, n)}
    for u, v in itertools.combinations(range(n), 2):
        if rng.random() < p:
            edges.add((u, v))
    return new_graph(n, sorted(edges))


@st.composite
def graphs(draw, min_n: int = 1, max_n: int = 12, connected: bool = False):
    n = draw(st.integers(min_n, max_n))
    pairs = list(itertools.combinations(range(n), 2))
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    if connected:
        parents = [draw(st.integers(0, i - 1)) for i in range(1, n)]
        chosen = set(chosen) | {(p, i) for i, p in enumerate(parents, 1)}
    return new_graph(n, sorted(chosen))


@st.composite
def prob_vectors(draw, length: int):
    w = draw(st.lists(st.floats(0, 1, allow_nan=False), min_size=length, max_size=length))
    if sum(w) <= 0:
        w = [1.0] + [0.0] * (length - 1)
    total = sum(w)
    return [x / total for x in w]


# -- configs -------------------------------------------------------------------


def write_config(directory: Path, body: str = "", name: str = "test.toml", instances: int = 1) -> Path:
    """A run config with ``instances`` graphs per cell and any extra TOML appended."""
    directory.mkdir(parents=True, exist_ok=True)
    text = textwrap.dedent(
        f"""
        version = 1
        output_dir = "out"

        [corpus]
        instances_per_cell = {instances}
        """
    ) + textwrap.dedent(body)
    path = directory / name
    path.write_text(text, encoding="utf-8")
    return path


FAST = """
[corpus.layout]
iterations = 60

[corpus.style]
canvas = 96
"""


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def clone_corpus(cfg_path: Path, dest: Path) -> Path:
    """Copy a config and its built corpus (not records or reports) under ``dest``."""
    import shutil

    dest.mkdir(parents=True, exist_ok=True)
    new_cfg = dest / cfg_path.name
    shutil.copy(cfg_path, new_cfg)
    shutil.copytree(cfg_path.parent / "out" / "corpus", dest / "out" / "corpus")
    return new_cfg
