import networkx as nx
import pytest

from pirpath.database import BuildOptions, Precomputed, build_database, precompute
from pirpath.partition import PartitionConfig, extract_border_nodes, kdtree_from_splits
from pirpath.synth import benchmark_like, grid_network

SMALL_PAGE = 256  # four T16 records per page


@pytest.fixture
def t16():
    return grid_network(4, 4)


@pytest.fixture
def t16_halves(t16):
    """T16 cut once by the vertical line x = 1.5."""
    tree = kdtree_from_splits(t16, (0, 1.5, None, None))
    aug, borders = extract_border_nodes(t16, tree)
    return t16, tree, aug, borders


def halves_precomputed(net, page_size=SMALL_PAGE):
    tree = kdtree_from_splits(net, (0, 1.5, None, None))
    aug, _ = extract_border_nodes(net, tree)
    return Precomputed(tree, PartitionConfig.for_network(net, page_size), aug)


def to_nx(net):
    g = nx.DiGraph() if net.directed else nx.MultiGraph()
    g.add_nodes_from(net.coords)
    for u, v, w in net.edges:
        g.add_edge(u, v, weight=w)
    return g


def nx_costs(net):
    """All-pairs costs from networkx, independent of the package's searches."""
    return {s: d for s, d in nx.all_pairs_dijkstra_path_length(to_nx(net), weight="weight")}


@pytest.fixture(scope="session")
def oldenburg():
    return benchmark_like("oldenburg")


@pytest.fixture(scope="session")
def oldenburg_pre(oldenburg):
    pre = precompute(oldenburg)
    pre.ensure_closure()
    return pre


@pytest.fixture(scope="session")
def oldenburg_dbs(oldenburg, oldenburg_pre):
    """One default build per scheme, shared across acceptance tests."""
    out = {}
    for scheme in ("CI", "PI", "HY"):
        out[scheme] = build_database(oldenburg, scheme, BuildOptions(), pre=oldenburg_pre)
    for scheme in ("PI*", "LM", "AF"):
        out[scheme] = build_database(oldenburg, scheme, BuildOptions())
    return out


# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


def record(n: int, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE[n] = (bool(passed), detail)
    print(f"criterion {n}: {'PASS' if passed else 'FAIL'} {detail}")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
