from __future__ import annotations

import pytest
from hypothesis import given, settings

from oocalc import alias_query, parse, parse_file, prove, run
from oocalc import oracle as O
from oocalc import terms as T
from oocalc.driver import ProofError
from oocalc.program import Cut, walk

from conftest import PROGRAMS
from strategies import list_heaps


def test_prove_reverse(reverse_unit):
    v = prove(reverse_unit, "reverse")
    assert v.status == "PROVED" and v.exit_code == 0
    assert v.trace.verdict == "PROVED" and v.trace.replay()
    assert not v.assumptions_used and not v.obligations
    assert not any(isinstance(i, Cut) for i in walk(reverse_unit.find_routine("reverse").body))
    assert v.trace.format().rstrip().endswith("VERDICT: PROVED")


def test_prove_swapped_fails(swapped_unit):
    v = prove(swapped_unit, "reverse")
    assert v.status == "FAILED" and v.exit_code == 1
    assert "preservation" in v.reason


def test_prove_trivial():
    v = prove(parse_file(PROGRAMS / "trivial.oo"), "idle")
    assert v.status == "PROVED"


def test_prove_cyclic_variant_is_residual():
    v = prove(parse_file(PROGRAMS / "cyclic_walk.oo"), "walk")
    assert v.status == "RESIDUAL" and v.exit_code == 2
    assert v.line == "RESIDUAL 1 obligations"


def test_loop_without_invariant():
    unit = parse("class C\nfeature\n n: INTEGER\n f\n do\n from until true loop end\n end\nend")
    with pytest.raises(ProofError):
        prove(unit, "f")


def test_qualified_routine_name(reverse_unit):
    assert prove(reverse_unit, "LIST.reverse").status == "PROVED"
    with pytest.raises(KeyError):
        prove(reverse_unit, "LIST.nothing")


def test_unneeded_cut_keeps_proof():
    src = (PROGRAMS / "reverse.oo").read_text().replace(
        "previous.set_right(temp)   -- i4", "cut previous, next\n        previous.set_right(temp)   -- i4")
    v = prove(parse(src), "reverse")
    assert v.status == "PROVED" and not v.assumptions_used


def test_assumed_facts_downgrade():
    src = (PROGRAMS / "reverse.oo").read_text()
    src = src.replace("    require\n      first.acyclic(right)\n", "")
    src = src.replace("      from\n", "      check first.acyclic(right)\n      from\n", 1)
    v = prove(parse(src), "reverse")
    assert v.status == "RESIDUAL" and v.assumptions_used
    assert "proof relies on cut/check assumptions" in v.obligations


@pytest.mark.parametrize("n", [0, 1, 5])
def test_run_reverse(reverse_unit, n):
    h, env = O.chain_heap(n)
    rep = run(reverse_unit, "reverse", h, env)
    assert rep.ok
    assert rep.heap.objects["L"].refs["first"] == (f"c{n}" if n else None)
    seq = O.eval_term(T.Integral(T.Attr("first", "LIST"), T.Attr("right", "LINKABLE")), rep.heap, rep.env)
    assert seq == tuple(f"c{k}" for k in range(n, 0, -1))
    if n:
        assert rep.variant_values == list(range(n - 1, -2, -1))


def test_run_cyclic_precondition(reverse_unit):
    h = O.Heap({"L": O.Obj("LIST", {"first": "c1"}),
                "c1": O.Obj("LINKABLE", {"right": "c2"}, {"item": 1}),
                "c2": O.Obj("LINKABLE", {"right": "c1"}, {"item": 2})})
    rep = run(reverse_unit, "reverse", h, O.Env("L"))
    assert [v.kind for v in rep.violations] == ["precondition"]
    assert rep.heap.objects["c1"].refs["right"] == "c2"


def test_run_swapped_breaks_invariant(swapped_unit):
    h, env = O.chain_heap(3)
    rep = run(swapped_unit, "reverse", h, env)
    assert not rep.ok and rep.violations[0].kind == "invariant"
    assert rep.violations[0].iteration == 1


@pytest.mark.parametrize("query, answer", [
    ("previous ~ next", "NEVER"),
    ("next ~ next", "MAY"),
    ("acyclic(next, right)", "YES"),
    ("acyclic(previous, right)", "YES"),
])
def test_alias_query(reverse_unit, query, answer):
    assert alias_query(reverse_unit, "reverse", "i4", query) == answer


def test_alias_query_unknown_acyclic():
    unit = parse_file(PROGRAMS / "cyclic_walk.oo")
    assert alias_query(unit, "walk", "pl2", "acyclic(p, right)") == "UNKNOWN"


def test_alias_query_malformed(reverse_unit):
    from oocalc.lang import LangError
    with pytest.raises(LangError):
        alias_query(reverse_unit, "reverse", "i4", "previous next")


_REVERSE = parse_file(PROGRAMS / "reverse.oo")


@settings(max_examples=200, deadline=None)
@given(list_heaps(max_cells=8))
def test_prove_and_run_agree(state):
    """A PROVED routine never violates an assertion on heaps satisfying its precondition."""
    h, env = state
    rep = run(_REVERSE, "reverse", h, O.Env("L"))
    acyclic = O.eval_term(T.Acyclic(T.Attr("first", "LIST"), T.Attr("right", "LINKABLE")), h, O.Env("L"))
    if acyclic:
        assert rep.ok, [str(v) for v in rep.violations]
    else:
        assert [v.kind for v in rep.violations] == ["precondition"]
