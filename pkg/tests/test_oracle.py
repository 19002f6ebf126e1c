from __future__ import annotations

import random

import pytest
from hypothesis import given, settings

from oocalc import oracle as O
from oocalc import terms as T
from oocalc.difftest import A, NODE_SHAPE, UNIT, V, ia_fixture, path
from oocalc.program import Assign, QualifiedCall

from strategies import RIGHT, list_heaps, paths, seq_terms


def _three() -> tuple[O.Heap, O.Env]:
    h = O.Heap({
        "o0": O.Obj("NODE", {"a": "o1", "b": None}, {"val": 0}),
        "o1": O.Obj("NODE", {"a": "o2", "b": "o2"}, {"val": 1}),
        "o2": O.Obj("NODE", {"a": None, "b": None}, {"val": 2}),
    })
    return h, O.Env("o0", {"x": "o1", "y": None, "z": None})


def test_eval_path():
    h, env = _three()
    assert O.eval_path([], h, env) == "o0"
    assert O.eval_path(["a", "a"], h, env) == "o2"
    # the c-link (here a) of a.b's target is void: same as a.b
    assert O.eval_path(["a", "b", "a"], h, env) == O.eval_path(["a", "b"], h, env) == "o2"


def test_eval_dot_on_void_is_void():
    h, env = _three()
    assert O.eval_term(T.Dot(V("y"), A("a")), h, env, UNIT) is None
    assert O.eval_term(T.IntPlus(T.Dot(V("y"), A("val")), T.IntConst(1)), h, env, UNIT) is None


def test_chain_integral_and_depth():
    h, env = O.chain_heap(5)
    first = T.Attr("first", "LIST")
    assert O.eval_term(T.Integral(first, RIGHT), h, env) == ("c1", "c2", "c3", "c4", "c5")
    assert O.eval_term(T.Depth(first, RIGHT), h, env) == 4
    assert O.eval_term(T.Acyclic(first, RIGHT), h, env) is True


def test_ia_fixture_values():
    inst, h, env = ia_fixture()
    pre = O.eval_term(T.Concat(T.Singleton(T.CURRENT), T.Integral(V("y"), A("a"))), h, env, UNIT)
    h2, env2 = O.exec_instrs(list(inst.instrs), h, env, UNIT)
    post = O.eval_term(T.Integral(None, A("a")), h2, env2, UNIT)
    assert pre == ("O", "O2", "O", "O1")
    assert post == ("O", "O2")


def test_rev_singleton():
    h, env = _three()
    assert O.eval_term(T.Rev(T.Singleton(V("x"))), h, env) == O.eval_term(T.Singleton(V("x")), h, env)


def test_qualified_setter_call():
    h, env = _three()
    call = QualifiedCall(V("x"), "set_a", (V("x"),))
    pre_c = O.eval_term(V("x"), h, env, UNIT)
    h2, env2 = O.exec_instr(call, h, env, UNIT)
    assert O.eval_term(T.Dot(V("x"), A("a")), h2, env2, UNIT) == pre_c
    assert h.objects["o1"].refs["a"] == "o2"  # input heap untouched


def test_field_write_inside_routine_hits_current():
    h, env = _three()
    h2, _ = O.exec_instr(Assign(A("a"), V("x")), h, env, UNIT)
    assert h2.objects["o0"].refs["a"] == "o1"
    h3, _ = O.exec_instr(Assign(A("b"), V("x")), h, env, UNIT)
    assert h3.objects["o0"].refs["b"] == "o1"


def test_empty_body_leaves_state():
    h, env = _three()
    h2, env2 = O.exec_instrs([], h, env, UNIT)
    assert h2 == h and env2.vars == env.vars


def test_call_on_void_target():
    h, env = _three()
    with pytest.raises(O.OracleError):
        O.exec_instr(QualifiedCall(V("y"), "bump", ()), h, env, UNIT)


def test_negvar_without_client():
    h, env = _three()
    with pytest.raises(O.OracleError):
        O.eval_term(T.NegVar(V("x")), h, env, UNIT)


def test_random_heap_single_object():
    h, env = O.random_heap(7, 1, NODE_SHAPE)
    assert list(h.objects) == ["O0"]
    assert all(v is None for v in h.objects["O0"].refs.values())


def test_random_heap_deterministic():
    a = O.random_heap(42, 10, NODE_SHAPE, {"x": "NODE"})
    b = O.random_heap(42, 10, NODE_SHAPE, {"x": "NODE"})
    assert a == b


def test_random_heap_shape_mix():
    cyclic = acyclic = 0
    for seed in range(1000):
        h, env = O.random_heap(seed, 10, NODE_SHAPE)
        ok = all(O.eval_term(T.Acyclic(None, A(a)), h, O.Env(o)) for o in h.objects for a in ("a", "b"))
        cyclic += not ok
        acyclic += ok
    assert cyclic > 0 and acyclic > 0


def test_heap_file_round_trip():
    h, env = _three()
    h2, env2 = O.parse_heap(O.format_heap(h, env))
    assert h2 == h and env2.vars == env.vars and env2.current == env.current


@pytest.mark.parametrize("text", [
    "object A : NODE { a -> B ; }\ncurrent = A\n",  # dangling reference
    "object A : NODE { a -> Void ; }\n",            # no current
    "garbage\n",
])
def test_heap_file_errors(text):
    with pytest.raises(ValueError):
        O.parse_heap(text)


def test_depth_probe():
    h, env = O.chain_heap(4)
    env = O.Env("L", {})
    first = T.Attr("first", "LIST")
    assert O.depth_decrease_probe(h, env, first, RIGHT) == "pass"
    h0, env0 = O.chain_heap(0)
    assert O.depth_decrease_probe(h0, env0, first, RIGHT) == "vacuous"
    # a 2-cycle: advancing does not lower the depth
    hc = O.Heap({"L": O.Obj("LIST", {"first": "c1"}),
                 "c1": O.Obj("LINKABLE", {"right": "c2"}), "c2": O.Obj("LINKABLE", {"right": "c1"})})
    assert O.depth_decrease_probe(hc, O.Env("L"), first, RIGHT) == "fail"


@settings(max_examples=300)
@given(list_heaps(acyclic=True), paths())
def test_depth_probe_on_acyclic_chains(state, p):
    h, env = state
    if isinstance(p, T.Dot):
        return
    assert O.depth_decrease_probe(h, env, p, RIGHT) in ("pass", "vacuous")


@settings(max_examples=300)
@given(list_heaps(), paths())
def test_integral_length_is_depth_plus_one(state, p):
    h, env = state
    if O.eval_term(p, h, env) is None:
        return
    seq = O.eval_term(T.Integral(p, RIGHT), h, env)
    assert len(seq) == O.eval_term(T.Depth(p, RIGHT), h, env) + 1
    assert len(set(seq)) == len(seq)


def test_self_integral_starts_at_current():
    rng = random.Random(3)
    for _ in range(200):
        h, env = O.random_heap(rng, 10, NODE_SHAPE)
        seq = O.eval_term(T.Integral(None, A("a")), h, env)
        assert seq[0] == env.current and len(set(seq)) == len(seq)


def test_sie_nie_pointwise():
    rng = random.Random(5)
    for _ in range(300):
        h, env = O.random_heap(rng, 10, NODE_SHAPE, {"x": "NODE"})
        a = A("a")
        sie_l = O.eval_term(T.Integral(None, a), h, env)
        sie_r = O.eval_term(T.Concat(T.Singleton(T.CURRENT), T.Integral(a, a)), h, env)
        if O.eval_term(a, h, env) is None or not O.eval_term(T.Acyclic(None, a), h, env):
            continue
        assert sie_l == sie_r
        if O.eval_term(V("x"), h, env) is None or O.eval_term(path(V("x"), "a"), h, env) is None:
            continue
        if O.eval_term(T.Acyclic(V("x"), a), h, env):
            assert O.eval_term(T.Integral(V("x"), a), h, env) == O.eval_term(
                T.Concat(T.Singleton(V("x")), T.Integral(path(V("x"), "a"), a)), h, env)


@settings(max_examples=300)
@given(list_heaps(), seq_terms(), seq_terms())
def test_rev_anti_distribution(state, s1, s2):
    h, env = state
    assert O.eval_term(T.Rev(T.Concat(s1, s2)), h, env) == O.eval_term(T.Concat(T.Rev(s2), T.Rev(s1)), h, env)
