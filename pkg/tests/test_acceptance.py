"""Acceptance criteria: each test prints one ``CRITERION n: PASS|FAIL`` line."""

from __future__ import annotations

import itertools
import random
import time

import pytest
from hypothesis import given, settings

from oocalc import alias_query, parse, parse_file, parse_term, prove, run, wp
from oocalc import oracle as O
from oocalc import terms as T
from oocalc.difftest import differential_check, difftest, ia_fixture, pax_fixture
from oocalc.program import Assign, Cut, walk
from oocalc.rewrite import RuleId

from conftest import PROGRAMS
from strategies import list_heaps, seq_terms

RIGHT = T.Attr("right", "LINKABLE")
FIRST = T.Attr("first", "LIST")


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    return emit


def _ordered(terms: list[T.Term], targets: list[tuple[str, T.Term]]) -> list[str]:
    """Names of targets found as subterms of strictly later intermediate terms, in order."""
    found, k = [], -1
    for name, want in targets:
        k = next((j for j in range(k + 1, len(terms)) if any(s == want for s in T.subterms(terms[j]))), None)
        if k is None:
            break
        found.append(name)
    return found


def test_criterion_1_proof_reproduction(report):
    t0 = time.perf_counter()
    unit = parse_file(PROGRAMS / "reverse.oo")
    v = prove(unit, "reverse")
    elapsed = time.perf_counter() - t0
    p = lambda s: parse_term(s, unit, "LIST", "reverse")  # noqa: E731
    targets = [
        ("p3", p("<<previous>> ++ temp.integral(right)")),
        ("p2", p("<<previous>> ++ temp.integral(right)")),
        ("p1", p("<<next>> ++ temp.integral(right)")),
        ("bp", p("<<next>> ++ previous.integral(right)")),
        ("n3", p("next.integral(right)")),
        ("n2", p("next.right.integral(right)")),
        ("bn", p("next.right.integral(right)")),
        ("bp1", p("rev(previous.integral(right)) ++ <<next>> ++ next.right.integral(right)")),
        ("fold", p("rev(previous.integral(right)) ++ next.integral(right)")),
    ]
    seg = v.trace.segment("preserve")
    inter = v.trace.intermediates(seg)
    found = _ordered(inter, targets)
    fold_step = any(s.rule in (RuleId.NIE, RuleId.SIE) for s in v.trace.steps[seg.lo:seg.hi])
    cuts = sum(isinstance(i, Cut) for i in walk(unit.find_routine("reverse").body))
    ok = (v.status == "PROVED" and found == [n for n, _ in targets] and fold_step and seg.end == targets[-1][1]
          and cuts == 0 and not v.assumptions_used and v.trace.replay() and elapsed < 1.0)
    report(1, ok, f"verdict={v.line} found={','.join(found)} cuts={cuts} time={elapsed:.3f}s")
    assert ok


def test_criterion_2_alias_automation(report):
    unit = parse_file(PROGRAMS / "reverse.oo")
    answer = alias_query(unit, "reverse", "i4", "previous ~ next")
    r = unit.find_routine("reverse")
    only_pre = [T.pretty(t) for t in r.precondition] == ["first.acyclic(right)"]
    no_assume = not any(isinstance(i, Cut) or type(i).__name__ == "Check" for i in walk(r.body))
    ok = answer == "NEVER" and only_pre and no_assume
    report(2, ok, f"previous ~ next at i4 = {answer}")
    assert ok


def test_criterion_3_differential_soundness(report):
    t0 = time.perf_counter()
    s = difftest(seed=1, cases=10_000, max_objects=10)
    elapsed = time.perf_counter() - t0
    again = difftest(seed=1, cases=10_000, max_objects=10)
    covered = {name for name, *_ in s.rows()}
    missing = [r.value[0] for r in RuleId if r.value[0] not in covered]
    fails = s.outcomes["fail"]
    ok = fails == 0 and not missing and s.rows() == again.rows() and s.outcomes == again.outcomes and elapsed < 60
    report(3, ok, f"cases=10000 fails={fails} rules={len(covered)}/{len(RuleId)} missing={missing} "
                  f"deterministic={s.rows() == again.rows()} time={elapsed:.1f}s")
    assert ok


def test_criterion_4_counterexample_fidelity(report):
    pax = differential_check(*pax_fixture())
    ia = differential_check(*ia_fixture())
    ok = (pax.outcome == "vacuous" and pax.raw_violation and (pax.post_value, pax.pre_value) == ("O2", "O1")
          and ia.outcome == "vacuous" and ia.raw_violation
          and ia.post_value == ("O", "O2") and ia.pre_value == ("O", "O2", "O", "O1"))
    report(4, ok, f"PAX {pax.outcome} post={pax.post_value} pre={pax.pre_value}; "
                  f"IA {ia.outcome} post={ia.post_value} pre={ia.pre_value}")
    assert ok


def _random_chain(rng: random.Random, n: int) -> tuple[O.Heap, O.Env]:
    ids = rng.sample([f"o{k}" for k in range(20)], n)
    h = O.Heap({"L": O.Obj("LIST", {"first": ids[0]})})
    for k, oid in enumerate(ids):
        h.objects[oid] = O.Obj("LINKABLE", {"right": ids[k + 1] if k + 1 < n else None}, {"item": k})
    for extra in rng.sample([f"x{k}" for k in range(5)], rng.randint(0, 3)):
        h.objects[extra] = O.Obj("LINKABLE", {"right": rng.choice(ids)}, {"item": -1})
    return h, O.Env("L")


def test_criterion_5_oracle_invariant_variant(report):
    unit = parse_file(PROGRAMS / "reverse.oo")
    rng = random.Random(2024)
    bad = []
    runs = 0
    for n in range(1, 11):
        for _ in range(20):
            h, env = _random_chain(rng, n)
            before = O.eval_term(T.Integral(FIRST, RIGHT), h, env)
            rep = run(unit, "reverse", h, env)
            runs += 1
            invs = [vals[0] for vals in rep.invariant_values]
            steps = [a - b for a, b in zip(rep.variant_values, rep.variant_values[1:])]
            after = O.eval_term(T.Integral(FIRST, RIGHT), rep.heap, rep.env)
            if not (rep.ok and all(v == before for v in invs) and all(d == 1 for d in steps)
                    and len(invs) == n + 1 and after == tuple(reversed(before))):
                bad.append(n)
    ok = not bad
    report(5, ok, f"{runs} runs over chains of 1..10 cells, bad={bad[:5]}")
    assert ok


def test_criterion_6_sequence_algebra(report):
    count = [0]
    failures = []

    @settings(max_examples=1200, deadline=None, database=None)
    @given(list_heaps(max_cells=8), seq_terms(), seq_terms(), seq_terms())
    def props(state, s1, s2, s3):
        h, env = state
        ev = lambda t: O.eval_term(t, h, env)  # noqa: E731
        count[0] += 1
        assert ev(T.Rev(T.Rev(s1))) == ev(s1)
        assert ev(T.Rev(T.Concat(s1, s2))) == ev(T.Concat(T.Rev(s2), T.Rev(s1)))
        assert ev(T.Concat(T.Concat(s1, s2), s3)) == ev(T.Concat(s1, T.Concat(s2, s3)))
        for v in ("previous", "next", "temp"):
            if env.vars.get(v) is not None:
                single = T.Singleton(T.Var(v))
                assert ev(T.Rev(single)) == ev(single)
                assert len(ev(T.Integral(T.Var(v), RIGHT))) == ev(T.Depth(T.Var(v), RIGHT)) + 1

    try:
        props()
    except AssertionError as exc:
        failures.append(str(exc))
    ok = not failures and count[0] >= 1000
    report(6, ok, f"{count[0]} generated cases, failures={len(failures)}")
    assert ok


def test_criterion_7_negative(report):
    unit = parse_file(PROGRAMS / "reverse_swapped.oo")
    v = prove(unit, "reverse")
    rep = run(unit, "reverse", *O.chain_heap(3))
    broke = [x for x in rep.violations if x.kind == "invariant"]
    ok = v.status == "FAILED" and "preservation" in v.reason and bool(broke)
    report(7, ok, f"prove: {v.line[:60]}...; oracle: {broke[0] if broke else 'no violation'}")
    assert ok


INT_SOURCE = """\
class S
feature
  n: INTEGER
  scratch
    local
      i, j, k: INTEGER
    do
    end
end
"""


def _int_suite(rng: random.Random, count: int):
    vs = [T.Var("i"), T.Var("j"), T.Var("k")]

    def expr(depth=0):
        match rng.randrange(4 if depth < 1 else 2):
            case 0:
                return T.IntConst(rng.randint(0, 3))
            case 1:
                return rng.choice(vs)
            case 2:
                return T.IntPlus(expr(depth + 1), expr(depth + 1))
            case _:
                return T.IntMinus(expr(depth + 1), expr(depth + 1))

    def cond(depth=0):
        match rng.randrange(4 if depth < 1 else 2):
            case 0:
                return T.Eq(expr(), expr())
            case 1:
                return T.Neq(expr(), expr())
            case 2:
                return T.And(cond(depth + 1), cond(depth + 1))
            case _:
                return T.Or(cond(depth + 1), T.Not(cond(depth + 1)))

    for _ in range(count):
        instrs = [Assign(rng.choice(vs), expr(), f"w{m}") for m in range(rng.randint(1, 3))]
        yield instrs, cond()


def test_criterion_8_wp_correspondence(report):
    unit = parse(INT_SOURCE)
    r = unit.find_routine("scratch")
    h = O.Heap({"S0": O.Obj("S", {}, {"n": 0})})
    mismatches, checks = [], 0
    for instrs, q in _int_suite(random.Random(8), 300):
        pre = wp(instrs, q, unit=unit, routine=r)
        for i, j, k in itertools.product(range(4), repeat=3):
            env = O.Env("S0", {"i": i, "j": j, "k": k})
            h2, env2 = O.exec_instrs(instrs, h, env, unit)
            checks += 1
            if bool(O.eval_term(pre, h, env, unit)) != bool(O.eval_term(q, h2, env2, unit)):
                mismatches.append((T.pretty(q), (i, j, k)))
    ok = not mismatches
    report(8, ok, f"{checks} (program, state) checks, mismatches={len(mismatches)}")
    assert ok
