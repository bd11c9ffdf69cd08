from __future__ import annotations

import json

import pytest

from capstore.cli import main
from capstore.corpus import save_corpus
from capstore.synth import SynthParams, synth_corpus, synth_world

FILES = ("report.json", "sessions.csv", "summary.csv")


def run_twice(tmp_path, argv):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(argv + ["--out", str(out)]) == 0
        outs.append(out)
    return outs


@pytest.mark.parametrize("argv", [
    ["simulate", "--seed", "3", "--sessions", "30"],
    ["extract", "--seed", "3", "--sessions", "200"],
    ["omission", "--seed", "3", "--sessions", "40", "--independence"],
])
def test_subcommands_deterministic(tmp_path, argv, capsys):
    a, b = run_twice(tmp_path, argv)
    for name in FILES:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert capsys.readouterr().out


def test_simulate_report_contents(tmp_path, capsys):
    assert main(["simulate", "--seed", "1", "--sessions", "30", "--method", "no_cache,cas_pab",
                 "--coverage", "1,0.5", "--delta-star", "4", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert {r["method"] for r in doc["session_cost"]} == {"no_cache", "cas_pab"}
    assert [r["coverage"] for r in doc["coverage_sweep"]] == [1.0, 0.5]
    assert "hit_rate_bound" in doc and "reference" in doc
    assert main(["report", "--in", str(tmp_path)]) == 0
    assert "Coverage sweep" in capsys.readouterr().out


def test_simulate_native_corpus(tmp_path):
    w = synth_world()
    p = tmp_path / "c.json"
    save_corpus(synth_corpus(w, SynthParams(n_sessions=10), 1), p)
    assert main(["simulate", "--seed", "1", "--corpus", str(p), "--out", str(tmp_path / "o")]) == 0


def test_extract_then_simulate_with_graph(tmp_path, capsys):
    assert main(["extract", "--seed", "2", "--sessions", "300", "--out", str(tmp_path / "x")]) == 0
    doc = json.loads((tmp_path / "x" / "report.json").read_text())
    assert doc["defect"]["total"] >= 0 and (tmp_path / "x" / "soundness.csv").exists()
    assert main(["simulate", "--seed", "2", "--sessions", "20", "--hypergraph", str(tmp_path / "x" / "hypergraph.json"),
                 "--method", "cas_only", "--out", str(tmp_path / "y")]) == 1
    # the extracted graph has no info nodes, so the synthetic follow-ups are rejected
    assert "unknown capability" in capsys.readouterr().err


def test_unsound_demo_cli(tmp_path, capsys):
    assert main(["unsound-demo", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("result: PASS") == 3
    assert json.loads((tmp_path / "unsound_demo.json").read_text())["runs"][0]["semantic_unsafe_hits"] == 1


def test_antichain_cli(tmp_path, capsys):
    assert main(["antichain", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "antichain.json").read_text())
    assert doc["minimal_unsafe_sets"] == [["gen", "read_PII"]] and doc["defect"]["total"] == 1


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["simulate", "--seed", "1", "--corpus", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert main(["report", "--in", str(tmp_path / "missing.json")]) == 1
    assert main(["simulate", "--seed", "1", "--method", "lru", "--out", str(tmp_path / "o")]) == 1
    assert main(["unsound-demo", "--tau", "1.0"]) == 1
    with pytest.raises(SystemExit):
        main(["simulate", "--out", str(tmp_path)])
    assert "error:" in capsys.readouterr().err
