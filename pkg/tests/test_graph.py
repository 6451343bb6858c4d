import json

import numpy as np
import pytest
from hypothesis import given, settings

from graphsim.graph import (
    DuplicateEdgeError,
    EndpointOutOfRange,
    GraphFile,
    GraphFileError,
    SelfLoopError,
    components,
    degree_sequence,
    dumps_graph_file,
    is_connected,
    load_graph,
    loads_graph_file,
    new_graph,
    save_graph,
)
from helpers import graphs, path_graph, random_graph, star_graph, triangle
from oracles import union_find_connected


def test_edges_are_canonical():
    g = new_graph(4, [(3, 2), (1, 0), (2, 0)])
    assert g.edges == ((0, 1), (0, 2), (2, 3))
    assert g.n == 4 and g.m == 3


@pytest.mark.parametrize(
    "n, edges, exc",
    [
        (3, [(0, 3)], EndpointOutOfRange),
        (3, [(-1, 0)], EndpointOutOfRange),
        (3, [(1, 1)], SelfLoopError),
        (3, [(0, 1), (1, 0)], DuplicateEdgeError),
    ],
)
def test_invalid_edges_rejected(n, edges, exc):
    with pytest.raises(exc):
        new_graph(n, edges)


def test_node_count_must_be_positive():
    with pytest.raises(ValueError):
        new_graph(0, [])


def test_degree_sequences():
    assert degree_sequence(star_graph(3)) == [3, 1, 1, 1]
    assert degree_sequence(path_graph(4)) == [1, 2, 2, 1]


def test_connectivity_examples():
    assert is_connected(triangle())
    assert not is_connected(new_graph(4, [(0, 1), (2, 3)]))
    assert is_connected(new_graph(1, []))
    assert components(new_graph(4, [(0, 1), (2, 3)])) == [[0, 1], [2, 3]]


def test_connectivity_matches_union_find():
    rng = np.random.default_rng(7)
    for _ in range(500):
        n = int(rng.integers(1, 21))
        g = random_graph(rng, n, float(rng.uniform(0.0, 0.4)))
        assert is_connected(g) == union_find_connected(g.n, g.edges)


@given(graphs(max_n=15))
def test_edge_count_bounds_and_degree_sum(g):
    assert 0 <= g.m <= g.n * (g.n - 1) // 2
    assert sum(degree_sequence(g)) == 2 * g.m


@settings(max_examples=100)
@given(graphs(max_n=15))
def test_load_save_identity(g):
    gf = GraphFile(g.relabel(range(g.n), id="G"), "GNM", "S1", "D1", 5)
    back = loads_graph_file(dumps_graph_file(gf))
    assert back.graph.n == g.n and back.graph.edges == g.edges
    assert back.graph.id == "G"
    assert (back.generator, back.size_class, back.density_class, back.seed) == ("GNM", "S1", "D1", 5)


def test_save_twice_is_byte_identical(tmp_path):
    gf = GraphFile(new_graph(5, [(0, 1), (1, 2), (3, 4), (2, 4)], id="x"), "NWS", "S2", "D3", 99)
    save_graph(tmp_path / "a.json", gf)
    save_graph(tmp_path / "b.json", gf)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    doc = json.loads((tmp_path / "a.json").read_text())
    assert list(doc) == ["id", "generator", "size_class", "density_class", "seed", "n", "edges"]
    assert load_graph(tmp_path / "a.json").graph.edges == gf.graph.edges


def test_load_rejects_self_loop(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"id": "b", "generator": "GNM", "size_class": "S1", "density_class": "D1",
                             "seed": 1, "n": 6, "edges": [[5, 5]]}))
    with pytest.raises(SelfLoopError):
        load_graph(p)


@pytest.mark.parametrize("text", ["not json", "[]", '{"id": "x"}'])
def test_load_rejects_malformed(text):
    with pytest.raises(GraphFileError):
        loads_graph_file(text)


def test_edge_hash_ignores_id():
    g = path_graph(4)
    assert g.edge_hash() == g.relabel(range(4), id="other").edge_hash()
    h = g.relabel([3, 2, 1, 0])
    assert h.edges == g.edges  # reversal maps a path onto itself
