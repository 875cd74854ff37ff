import math

import pytest

from pirpath.database import (
    BuildOptions,
    Database,
    PlanDerivationError,
    build_database,
    network_from_database,
    precompute,
)
from pirpath.pir import CapacityExceeded, CostModel
from pirpath.synth import grid_network, synthetic_road_network

from conftest import SMALL_PAGE, nx_costs
from test_precompute import directed_variant


@pytest.fixture(scope="module")
def small():
    return synthetic_road_network(80, seed=3)


@pytest.fixture(scope="module")
def medium():
    return synthetic_road_network(600, seed=3)


@pytest.mark.parametrize("scheme", ["CI", "PI", "PI*", "HY", "LM", "AF"])
def test_save_load_round_trip(tmp_path, small, scheme):
    db = build_database(small, scheme, BuildOptions(page_size=1024))
    db.save(tmp_path)
    back = Database.load(tmp_path)
    assert back.scheme == scheme and back.file_bytes() == db.file_bytes()
    assert all(back.files[f].data == db.files[f].data for f in db.files)
    assert back.manifest == db.manifest
    assert (tmp_path / "manifest.txt").read_text().strip()


@pytest.mark.parametrize("scheme", ["CI", "HY", "LM"])
@pytest.mark.parametrize("directed", [False, True])
def test_network_read_back(small, scheme, directed):
    net = directed_variant(small, 1) if directed else small
    db = build_database(net, scheme, BuildOptions(page_size=1024))
    back = network_from_database(db)
    assert back.directed == directed and back.num_nodes == net.num_nodes
    assert back.num_edges == net.num_edges
    want, got = nx_costs(net), nx_costs(back)
    for s in list(want)[:10]:
        assert want[s].keys() == got[s].keys()
        assert all(math.isclose(want[s][t], got[s][t], rel_tol=1e-6) for t in want[s])


def test_builds_are_deterministic(small):
    opts = BuildOptions(page_size=1024)
    pre = precompute(small, 1024)
    for scheme in ("CI", "PI", "HY"):
        a = build_database(small, scheme, opts, pre=pre)
        b = build_database(small, scheme, opts)
        assert {f: x.data for f, x in a.files.items()} == {f: x.data for f, x in b.files.items()}


def test_precompute_must_match(small):
    pre = precompute(small, 1024)
    with pytest.raises(ValueError, match="pages per region"):
        build_database(small, "PI*", BuildOptions(page_size=1024), pre=pre)
    with pytest.raises(ValueError, match="unknown scheme"):
        build_database(small, "XY")


def test_capacity_rejection(medium):
    tight = CostModel(max_file_bytes=256 * 1024)
    with pytest.raises(CapacityExceeded) as exc:
        build_database(medium, "PI", BuildOptions(page_size=1024), model=tight)
    assert exc.value.file_id == "Fi"
    loose = build_database(medium, "PI", BuildOptions(page_size=1024, enforce_capacity=False), model=tight)
    assert loose.file_bytes()["Fi"] > 256 * 1024
    # region sets are far smaller than passage subgraphs
    build_database(medium, "CI", BuildOptions(page_size=1024), model=tight)


def test_plan_modes():
    net = grid_network(4, 4)
    with pytest.raises(PlanDerivationError, match="sampled"):
        build_database(net, "LM", BuildOptions(page_size=SMALL_PAGE, plan_mode="exact", exact_limit=10))
    exact = build_database(net, "AF", BuildOptions(page_size=SMALL_PAGE, plan_mode="exact"))
    assert exact.manifest["plan_pairs"] == 256 and "plan_warning" not in exact.manifest
    sampled = build_database(net, "AF", BuildOptions(page_size=SMALL_PAGE, plan_mode="sampled", plan_samples=50))
    assert "privacy" in sampled.manifest["plan_warning"]
    assert sampled.manifest["search_rounds"] == math.ceil(1.25 * sampled.manifest["plan_observed_max"])


def test_manifest_fields(medium):
    db = build_database(medium, "CI", BuildOptions(page_size=1024))
    man = db.manifest
    assert 0.9 <= man["fd_utilization"] <= 1.0
    assert man["fd_max_slack_except_last"] <= man["max_record_bytes"]
    assert man["packing_fallbacks"] == 0
    assert man["fi_pages"] <= man["fi_pages_uncompressed"]
    assert man["plan"] == [list(map(list, r)) for r in db.header.plan]


def test_file_size_order(medium):
    db = build_database(medium, "PI", BuildOptions(page_size=1024))
    b = db.file_bytes()
    assert b["Fl"] < b["Fi"]
    assert b["Fh"] < sum(b.values()) / 4


def test_verified_build(small):
    for scheme in ("CI", "PI", "HY"):
        build_database(small, scheme, BuildOptions(page_size=1024, verify_pairs=200))
