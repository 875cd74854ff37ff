import math

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pirpath.graph import (
    NetworkError,
    ParseError,
    Path,
    RoadNetwork,
    dijkstra,
    dijkstra_restricted,
    format_network,
    parse_network,
    path_cost,
    read_network,
    single_source_costs,
    write_network,
)
from pirpath.synth import BENCHMARK_SIZES, benchmark_like, synthetic_road_network

from conftest import nx_costs, to_nx

COORDS = """\
# two nodes
v 0 0.0 0.0
v 1 3.0 4.0
"""
EDGES = """\
p undirected 2 1
e 0 1 5.0
"""


def test_parse_two_nodes():
    net = parse_network(COORDS, EDGES)
    assert net.num_nodes == 2 and net.num_edges == 1
    assert net.coords[1] == (3.0, 4.0)
    p = dijkstra(net, 0, 1)
    assert p.nodes == (0, 1) and p.cost == 5.0


def test_parse_single_node_no_edges():
    net = parse_network("v 7 1 1\n", "p undirected 1 0\n")
    assert net.num_nodes == 1 and net.num_edges == 0
    assert dijkstra(net, 7, 7) == Path((7,), 0.0)


@pytest.mark.parametrize("coords,edges,line", [
    ("v 0 0 0\nv 1 1 x\n", "p undirected 2 0\n", 2),
    ("v 0 0 0\nv 0 1 1\n", "p undirected 2 0\n", 2),
    ("v 0 0 0\nv 1 1 1\n", "e 0 1 1.0\n", 1),
    ("v 0 0 0\nv 1 1 1\n", "p undirected 2 1\ne 0 1 -2\n", 2),
    ("v 0 0 0\nv 1 1 1\n", "p sideways 2 0\n", 1),
])
def test_parse_errors_carry_line(coords, edges, line):
    with pytest.raises(ParseError) as exc:
        parse_network(coords, edges)
    assert exc.value.line == line


def test_parse_count_mismatch():
    with pytest.raises(ParseError, match="declares 2 edges"):
        parse_network(COORDS, "p undirected 2 2\ne 0 1 1\n")


def test_dangling_endpoint():
    with pytest.raises(NetworkError, match="dangling"):
        parse_network(COORDS, "p undirected 2 1\ne 0 9 1\n")


def test_round_trip_text(tmp_path):
    net = synthetic_road_network(200, 230, seed=3)
    write_network(net, tmp_path / "n.coords", tmp_path / "n.edges")
    back = read_network(tmp_path / "n.coords", tmp_path / "n.edges")
    assert back.coords == net.coords and back.edges == net.edges
    assert format_network(back) == format_network(net)


def test_t16_counts(t16):
    assert t16.num_nodes == 16 and t16.num_edges == 24


def test_t16_corner_to_corner(t16):
    p = dijkstra(t16, 0, 15)
    assert p.cost == 6.0 and len(p.edges) == 6
    assert path_cost(t16, p) == 6.0
    assert nx.dijkstra_path_length(to_nx(t16), 0, 15) == 6.0


def test_same_node_is_empty_path(t16):
    p = dijkstra(t16, 5, 5)
    assert p.nodes == (5,) and p.cost == 0.0 and p.edges == []


def test_restricted_vacuous(t16):
    everything = set(t16.coords)
    for s, t in [(0, 15), (3, 12), (6, 9)]:
        assert dijkstra_restricted(t16, everything, s, t) == dijkstra(t16, s, t)


def test_restricted_to_a_row(t16):
    row = {4, 5, 6, 7}
    p = dijkstra_restricted(t16, row, 4, 7)
    assert p.nodes == (4, 5, 6, 7) and p.cost == 3.0


def test_restricted_cut_unreachable(t16):
    assert dijkstra_restricted(t16, {0, 1, 2, 3, 15}, 0, 15) is None


def test_directed_one_way():
    net = RoadNetwork({0: (0, 0), 1: (1, 0)}, [(0, 1, 2.0)], directed=True)
    assert dijkstra(net, 0, 1).cost == 2.0
    assert dijkstra(net, 1, 0) is None


def test_zero_weight_rejected_by_default():
    with pytest.raises(NetworkError):
        RoadNetwork({0: (0, 0), 1: (1, 0)}, [(0, 1, 0.0)])
    RoadNetwork({0: (0, 0), 1: (1, 0)}, [(0, 1, 0.0)], allow_zero_weights=True)


def test_synthetic_sizes_match_benchmark_table():
    net = benchmark_like("oldenburg")
    assert (net.num_nodes, net.num_edges) == BENCHMARK_SIZES["oldenburg"] == (6105, 7029)


@settings(max_examples=30, deadline=None)
@given(st.integers(20, 80), st.integers(0, 10_000), st.booleans())
def test_dijkstra_matches_networkx(n, seed, directed):
    net = synthetic_road_network(n, int(n * 1.3), seed=seed)
    if directed:
        net = RoadNetwork(net.coords, net.edges + [(v, u, w * 1.5) for u, v, w in net.edges[::3]],
                          directed=True)
    ref = nx_costs(net)
    nodes = net.node_ids()
    s = nodes[seed % n]
    costs = single_source_costs(net, s)
    assert costs.keys() == ref[s].keys()
    for t in nodes[::7]:
        p = dijkstra(net, s, t)
        if t not in ref[s]:
            assert p is None
        else:
            assert math.isclose(p.cost, ref[s][t], rel_tol=1e-9)
            assert math.isclose(path_cost(net, p), p.cost, rel_tol=1e-9)
