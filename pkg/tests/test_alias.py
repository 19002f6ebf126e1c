from __future__ import annotations

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from oocalc import oracle as O
from oocalc import parse, parse_term
from oocalc import terms as T
from oocalc.alias import AnalysisConfig, acyclic, analyze, cycle_free, may_alias
from oocalc.program import Loop, walk

LINK_SOURCE = """\
class LINKABLE
feature
  right: detachable LINKABLE
  left: detachable LINKABLE
  set_right (f: detachable LINKABLE)
    do
      right := f
    ensure
      right = f
    end
  loopy
    require
      acyclic(right)
    local
      x, y: detachable LINKABLE
    do
      x := y
      cut x, y
      set_right(Current)
    end
  open (x, y: detachable LINKABLE)
    do
      x := x
    end
  sever (x, y: detachable LINKABLE)
    require
      x /= y
    do
      x := x
    end
  walk (x: detachable LINKABLE)
    require
      x.acyclic(right)
      x /= Current
      x.right /= Current
    do
      x := x
    end
  bare (x: detachable LINKABLE)
    do
      x := x
    end
end
"""


@pytest.fixture(scope="module")
def link():
    return parse(LINK_SOURCE)


def _facts(unit, name):
    r = unit.cls("LINKABLE").routine(name)
    return analyze(unit, r), (lambda s: parse_term(s, unit, "LINKABLE", name))


def test_assignment_creates_alias(link):
    facts, t = _facts(link, "loopy")
    assert may_alias(t("x"), t("y"), "pl2", facts)


def test_cut_removes_pair(link):
    facts, t = _facts(link, "loopy")
    assert not may_alias(t("x"), t("y"), "pl3", facts)
    assert facts.evidence("pl3", lambda rel: not rel.may_alias(t("x"), t("y"))) == "assumed-fact"


def test_self_alias(link, reverse_unit):
    facts, t = _facts(link, "open")
    assert may_alias(t("x"), t("x"), "pl1", facts)


def test_formals_without_and_with_precondition(link):
    facts, t = _facts(link, "open")
    assert may_alias(t("x"), t("y"), "pl1", facts)
    facts, t = _facts(link, "sever")
    assert not may_alias(t("x"), t("y"), "pl1", facts)


def test_widened_long_paths(link):
    facts, t = _facts(link, "sever")
    long = t("x.right.right.right.right.right")
    assert may_alias(long, t("y"), "pl1", facts)


def test_acyclic_requires_a_fact(link):
    facts, t = _facts(link, "bare")
    assert not acyclic(t("x"), "right", "pl1", facts)
    facts, t = _facts(link, "walk")
    assert acyclic(t("x"), "right", "pl1", facts)


def test_self_link_breaks_acyclicity(link):
    facts, _ = _facts(link, "loopy")
    assert acyclic(T.CURRENT, "right", "pl1", facts)
    assert not acyclic(T.CURRENT, "right", "@exit", facts)


def test_cycle_free(link):
    facts, t = _facts(link, "bare")
    assert cycle_free("left", t("x"), ["right", "right"], "pl1", facts)
    assert not cycle_free("right", t("x"), ["right", "right"], "pl1", facts)
    facts, t = _facts(link, "walk")
    assert cycle_free("right", t("x"), ["right", "right"], "pl1", facts)


def test_reverse_facts(reverse_unit, rterm):
    r = reverse_unit.find_routine("reverse")
    facts = analyze(reverse_unit, r)
    assert not may_alias(rterm("previous"), rterm("next"), "i4", facts)
    assert may_alias(rterm("next"), rterm("next"), "i4", facts)
    for label in ("i1", "i2", "i3", "i4"):
        assert acyclic(rterm("next"), "right", label, facts)
    assert acyclic(rterm("previous"), "right", "i1", facts)


def test_unknown_label(reverse_unit, rterm):
    facts = analyze(reverse_unit, reverse_unit.find_routine("reverse"))
    with pytest.raises(KeyError):
        facts.at("nowhere")


def test_loop_transfer_is_a_fixpoint(reverse_unit):
    from oocalc.alias import transfer
    r = reverse_unit.find_routine("reverse")
    facts = analyze(reverse_unit, r)
    loop = next(i for i in r.body if isinstance(i, Loop))
    head = facts.at(loop.label + "@head")
    rel = head
    for i in loop.body:
        rel = transfer(i, rel)
    assert rel.may <= head.may and head.acyc <= rel.acyc


# ----------------------------------------------------------------------
# soundness against the oracle on generated straight-line programs

NODE_HEAD = """\
class NODE
feature
  a: detachable NODE
  b: detachable NODE
  set_a (f: detachable NODE)
    do
      a := f
    ensure
      a = f
    end
  prog (p, q: detachable NODE)
    local
      x, y, z: detachable NODE
    do
"""

VARS = ["p", "q", "x", "y", "z"]

instr = st.one_of(
    st.builds(lambda v, w: f"{v} := {w}", st.sampled_from(VARS[2:]), st.sampled_from(VARS + ["Void", "a", "b"])),
    st.builds(lambda v, w, f: f"{v} := {w}.{f}", st.sampled_from(VARS[2:]), st.sampled_from(VARS),
              st.sampled_from(["a", "b"])),
    st.builds(lambda w: f"set_a({w})", st.sampled_from(VARS + ["Current"])),
    st.builds(lambda v, w: f"{v}.set_a({w})", st.sampled_from(VARS), st.sampled_from(VARS + ["Current"])),
)


@st.composite
def node_heap(draw):
    n = draw(st.integers(1, 5))
    ids = [f"o{k}" for k in range(n)]
    ref = st.one_of(st.none(), st.sampled_from(ids))
    h = O.Heap({o: O.Obj("NODE", {"a": draw(ref), "b": draw(ref)}) for o in ids})
    env = O.Env(draw(st.sampled_from(ids)), {"p": draw(ref), "q": draw(ref)})
    return h, env


QUERIES = ["p", "q", "x", "y", "z", "Current", "a", "x.a", "y.b", "p.a.a"]


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(instr, min_size=1, max_size=6), node_heap())
def test_never_alias_is_sound(lines, state):
    unit = parse(NODE_HEAD + "".join(f"      {ln}\n" for ln in lines) + "    end\nend\n")
    r = unit.cls("NODE").routine("prog")
    facts = analyze(unit, r, AnalysisConfig())
    h, env = state
    frame = O.snapshot(h, O.Env(env.current, {**env.vars, "x": None, "y": None, "z": None}))
    seen = {}

    def on_step(i, hh, ee):
        seen.setdefault(i.label, (hh.copy(), ee.copy()))

    try:
        O.exec_instrs(r.body, h, frame, unit, O.Hooks(on_step=on_step))
    except O.OracleError:
        pass
    terms = [parse_term(q, unit, "NODE", "prog") for q in QUERIES]
    for label, (hh, ee) in seen.items():
        vals = [O.eval_term(t, hh, ee, unit) for t in terms]
        for i, e in enumerate(terms):
            for j, f in enumerate(terms):
                if vals[i] is not None and vals[i] == vals[j] and i != j:
                    assert facts.may_alias(e, f, label), (label, QUERIES[i], QUERIES[j])


@pytest.mark.parametrize("label", ["i1", "i2", "i3", "i4"])
def test_reverse_never_alias_holds_on_chains(reverse_unit, rterm, label):
    facts = analyze(reverse_unit, reverse_unit.find_routine("reverse"))
    r = reverse_unit.find_routine("reverse")
    names = ["previous", "next", "temp", "first"]
    for n in range(0, 7):
        h, env = O.chain_heap(n)
        seen = []

        def on_step(i, hh, ee):
            if i.label == label:
                seen.append((hh.copy(), ee.copy()))

        env = O.snapshot(h, O.Env("L", {"previous": None, "next": None, "temp": None}))
        O.exec_instrs(r.body, h, env, reverse_unit, O.Hooks(on_step=on_step))
        for hh, ee in seen:
            for a in names:
                for b in names:
                    va, vb = O.eval_term(rterm(a), hh, ee), O.eval_term(rterm(b), hh, ee)
                    if a != b and va is not None and va == vb:
                        assert facts.may_alias(rterm(a), rterm(b), label)
