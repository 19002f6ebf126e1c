from __future__ import annotations

import pytest

from oocalc import oracle as O
from oocalc.cli import main

from conftest import PROGRAMS

REV = str(PROGRAMS / "reverse.oo")


def test_prove_ok(capsys):
    assert main(["prove", REV, "--routine", "reverse"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("STEP 1:") and out.rstrip().endswith("VERDICT: PROVED")


def test_prove_trace_file(tmp_path, capsys):
    trace = tmp_path / "t.txt"
    assert main(["prove", REV, "--routine", "reverse", "--trace", str(trace)]) == 0
    assert capsys.readouterr().out.strip() == "VERDICT: PROVED"
    assert "ICX/34" in trace.read_text()


def test_prove_failed(capsys):
    assert main(["prove", str(PROGRAMS / "reverse_swapped.oo"), "--routine", "reverse"]) == 1
    assert "VERDICT: FAILED" in capsys.readouterr().out


def test_prove_residual(capsys):
    assert main(["prove", str(PROGRAMS / "cyclic_walk.oo"), "--routine", "walk"]) == 2
    out = capsys.readouterr().out
    assert "VERDICT: RESIDUAL 1 obligations" in out and "OBLIGATION: variant" in out


def test_run(tmp_path, capsys):
    heap = tmp_path / "h.heap"
    heap.write_text(O.format_heap(*O.chain_heap(3)))
    assert main(["run", REV, "--routine", "reverse", "--heap", str(heap)]) == 0
    out = capsys.readouterr().out
    assert "first -> c3" in out and "RESULT: all assertions hold" in out


def test_run_violation(tmp_path, capsys):
    heap = tmp_path / "h.heap"
    heap.write_text("object L : LIST { first -> A ; }\nobject A : LINKABLE { right -> A ; item = 1 }\n"
                    "current = L\n")
    assert main(["run", REV, "--routine", "reverse", "--heap", str(heap)]) == 1
    assert "precondition violated" in capsys.readouterr().out


def test_alias(capsys):
    assert main(["alias", REV, "--routine", "reverse", "--at", "i4", "--query", "previous ~ next"]) == 0
    assert capsys.readouterr().out.strip() == "NEVER"


def test_difftest_cli(tmp_path, capsys):
    assert main(["difftest", "--rules", "PAX,IA", "--cases", "60", "--report-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "fixture IA: vacuous with raw violation" in out
    assert (tmp_path / "summary.csv").exists() and (tmp_path / "summary.png").exists()


@pytest.mark.parametrize("argv", [
    ["prove", "/nonexistent.oo", "--routine", "reverse"],
    ["prove", REV, "--routine", "missing"],
    ["prove", REV],
    ["frobnicate"],
    ["difftest", "--rules", "NOPE", "--cases", "1"],
    ["alias", REV, "--routine", "reverse", "--at", "zz", "--query", "previous ~ next"],
])
def test_usage_errors(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 3
