import csv
import io

import pytest

from pirpath.cli import main
from pirpath.pir import parse_traces


@pytest.fixture
def grid_files(tmp_path):
    prefix = tmp_path / "t16"
    assert main(["synth", "--out", str(prefix), "--grid", "4x4"]) == 0
    return str(prefix) + ".coords", str(prefix) + ".edges"


def build(tmp_path, grid_files, scheme, name=None, *extra):
    coords, edges = grid_files
    out = tmp_path / (name or scheme.replace("*", "star"))
    code = main(["build", "--coords", coords, "--edges", edges, "--scheme", scheme,
                 "--out", str(out), "--page-size", "256", *extra])
    return code, out


def test_synth_sizes(tmp_path, capsys):
    prefix = tmp_path / "rand"
    assert main(["synth", "--out", str(prefix), "--nodes", "50", "--edge-count", "60", "--seed", "2"]) == 0
    assert "50 nodes, 60 edges" in capsys.readouterr().out


def test_build_and_query(tmp_path, grid_files, capsys):
    code, out = build(tmp_path, grid_files, "CI")
    assert code == 0 and (out / "Fh.bin").exists() and (out / "manifest.json").exists()
    capsys.readouterr()
    trace = tmp_path / "q.trace"
    assert main(["query", "--db", str(out), "--source", "0,0", "--target", "3,3", "--trace", str(trace),
                 "--seed", "1"]) == 0
    text = capsys.readouterr().out
    assert "cost 6.0" in text and text.splitlines()[0].startswith("path 0 ")
    assert "total" in text
    (tr,) = parse_traces(trace.read_text())
    assert tr.view()[0] == (("Fh", 1),)


def test_query_scheme_mismatch(tmp_path, grid_files):
    _, out = build(tmp_path, grid_files, "PI")
    assert main(["query", "--db", str(out), "--scheme", "CI", "--source", "0,0", "--target", "1,1"]) != 0


def test_build_rejected_over_cap(tmp_path, grid_files, capsys):
    code, _ = build(tmp_path, grid_files, "PI", "tiny", "--max-file-bytes", "512")
    assert code == 2 and "rejected" in capsys.readouterr().err


def test_bench_and_audit(tmp_path, grid_files, capsys):
    _, hy = build(tmp_path, grid_files, "HY")
    _, ci = build(tmp_path, grid_files, "CI")
    report = tmp_path / "hy.csv"
    traces = tmp_path / "hy.traces"
    assert main(["bench", "--db", str(hy), "--exhaustive", "--out", str(report), "--traces", str(traces)]) == 0
    rows = list(csv.DictReader(io.StringIO(report.read_text())))
    assert len(rows) == 1 and rows[0]["pairs"] == "256" and rows[0]["scheme"] == "HY"
    assert len(parse_traces(traces.read_text())) == 256
    capsys.readouterr()
    assert main(["audit", str(traces), "--db", str(hy)]) == 0
    assert capsys.readouterr().out.startswith("PASS 256")
    ci_traces = tmp_path / "ci.traces"
    main(["bench", "--db", str(ci), "--pairs", "3", "--traces", str(ci_traces), "--out", str(tmp_path / "ci.csv")])
    capsys.readouterr()
    assert main(["audit", str(traces), str(ci_traces)]) == 1
    assert capsys.readouterr().out.startswith("FAIL")
    assert main(["audit", str(ci_traces), "--db", str(hy)]) == 1


def test_sweep(tmp_path, grid_files, capsys):
    coords, edges = grid_files
    grid = tmp_path / "grid.ini"
    grid.write_text("[sweep]\nscheme = HY\nparam = hy_threshold\nvalues = none, 0, -1\npage_size = 256\n")
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--grid", str(grid), "--coords", coords, "--edges", edges, "--pairs", "20",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert [r["value"] for r in rows] == ["", "0", "-1"]
    assert all(r["status"] == "ok" for r in rows)
    bad = tmp_path / "bad.ini"
    bad.write_text("[sweep]\nscheme = HY\nparam = warp\nvalues = 1\n")
    with pytest.raises(SystemExit):
        main(["sweep", "--grid", str(bad), "--coords", coords, "--edges", edges])


@pytest.mark.parametrize("fid", ["Fh", "Fl", "Fi", "Fd"])
def test_describe(tmp_path, grid_files, capsys, fid):
    _, out = build(tmp_path, grid_files, "CI")
    capsys.readouterr()
    assert main(["describe", str(out / f"{fid}.bin"), "--limit", "3"]) == 0
    assert capsys.readouterr().out.strip()
