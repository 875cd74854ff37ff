import csv
import io
import math

import pytest

from pirpath.bench import (
    CSV_COLUMNS,
    WorkloadError,
    WorkloadSpec,
    rows_to_csv,
    run_workload,
    sweep_parameter,
    verify_uniform_traces,
)
from pirpath.database import BuildOptions, build_database
from pirpath.pir import AccessTrace, CapacityExceeded
from pirpath.synth import grid_network

from conftest import SMALL_PAGE, nx_costs


def make_trace(rounds):
    tr = AccessTrace()
    for rnd in rounds:
        tr.begin_round()
        for fid, c in rnd:
            tr.add(fid, c)
    return tr


PLAN = [[("Fh", 1)], [("Fl", 1)], [("Fi", 1), ("Fd", 2)]]


def test_uniform_traces_pass():
    assert verify_uniform_traces([])
    assert verify_uniform_traces([make_trace(PLAN) for _ in range(5)])


def test_forged_page_is_caught():
    forged = [list(r) for r in PLAN]
    forged[2] = [("Fi", 1), ("Fd", 3)]
    check = verify_uniform_traces([make_trace(PLAN), make_trace(PLAN), make_trace(forged)])
    assert not check and check.index == 2 and check.round == 3


def test_extra_round_is_caught():
    check = verify_uniform_traces([make_trace(PLAN), make_trace(PLAN + [[("Fd", 1)]])])
    assert not check and check.round == 4


@pytest.fixture(scope="module")
def t16_dbs():
    net = grid_network(4, 4)
    return net, {s: build_database(net, s, BuildOptions(page_size=SMALL_PAGE))
                 for s in ("CI", "PI", "PI*", "HY", "LM", "AF")}


def test_two_schemes_differ(t16_dbs):
    net, dbs = t16_dbs
    spec = WorkloadSpec(5, seed=1)
    a = run_workload(dbs["CI"], spec, net).traces
    b = run_workload(dbs["PI"], spec, net).traces
    assert not verify_uniform_traces(a + b)


def test_empty_workload(t16_dbs):
    net, dbs = t16_dbs
    rep = run_workload(dbs["CI"], WorkloadSpec(0), net)
    assert rep.rows == [] and rep.check


@pytest.mark.parametrize("scheme", ["CI", "PI", "PI*", "HY", "LM", "AF"])
def test_exhaustive_workload(t16_dbs, scheme):
    net, dbs = t16_dbs
    want = nx_costs(net)
    oracle = {(s, t): want[s][t] for s in want for t in want[s]}
    rep = run_workload(dbs[scheme], WorkloadSpec(sampling="exhaustive"), net, oracle=oracle)
    assert len(rep.traces) == 256 and rep.check
    (row,) = rep.rows
    assert row["pairs"] == 256 and row["status"] == "ok"
    assert row["total_time"] == row["pir_time"] + row["comm_time"] + row["client_time"]
    assert row["client_time"] == 0.0
    assert row["pir_accesses"] == dbs[scheme].plan.pir_accesses
    assert row["rounds"] == len(dbs[scheme].plan.rounds)


def test_wrong_oracle_is_reported(t16_dbs):
    net, dbs = t16_dbs
    with pytest.raises(WorkloadError, match=r"pair \(0, 15\)"):
        run_workload(dbs["CI"], WorkloadSpec(sampling="exhaustive"), net, oracle={(0, 15): 5.0})


def test_default_network_comes_from_database(t16_dbs):
    _, dbs = t16_dbs
    rep = run_workload(dbs["HY"], WorkloadSpec(20, seed=4))
    assert rep.rows[0]["pairs"] == 20


def test_csv_is_seeded(t16_dbs):
    net, dbs = t16_dbs
    spec = WorkloadSpec(30, seed=9)
    a = run_workload(dbs["AF"], spec, net).to_csv()
    b = run_workload(dbs["AF"], spec, net).to_csv()
    assert a == b
    rows = list(csv.DictReader(io.StringIO(a)))
    assert list(rows[0]) == CSV_COLUMNS and rows[0]["schema_version"] == "1"
    assert math.isclose(float(rows[0]["total_time"]),
                        sum(float(rows[0][k]) for k in ("pir_time", "comm_time", "client_time")), abs_tol=1e-5)


def test_sweep_rows_and_nil():
    net = grid_network(4, 4)
    spec = WorkloadSpec(10, seed=2)

    def build(th):
        if th == 99:
            raise CapacityExceeded("Fi", "over the cap")
        return build_database(net, "HY", BuildOptions(page_size=SMALL_PAGE, hy_threshold=th))

    rows = sweep_parameter(build, [None, 0, 99], spec, net, "hy_threshold", "HY")
    assert [r["value"] for r in rows] == [None, 0, 99]
    assert [r["status"] for r in rows] == ["ok", "ok", "Nil"]
    assert "over the cap" in rows[2]["note"]
    one = sweep_parameter(build, [1], spec, net, "hy_threshold", "HY")
    assert len(one) == 1
    with pytest.raises(ValueError):
        sweep_parameter(build, [], spec, net)
    text = rows_to_csv(rows)
    assert text.count("\n") == 4 and ",Nil," in text
