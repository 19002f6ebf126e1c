"""Differential testing: every rule application is checked against the heap oracle."""

from __future__ import annotations

import dataclasses
import random
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import oracle as O
from . import terms as T
from .lang import parse
from .program import Assign, Check, QualifiedCall, UnqualifiedCall
from .rewrite import (
    Attached,
    NeverAlias,
    NoRuleApplies,
    RuleId,
    Rewriter,
    SideCondition,
    freeze_old,
)

NODE_SOURCE = """\
class NODE
feature
  val: INTEGER
  a: detachable NODE
  b: detachable NODE
  set_a (f: detachable NODE)
    do
      a := f
    ensure
      a = f
    end
  set_b (f: detachable NODE)
    do
      b := f
    ensure
      b = f
    end
  set_ab (f: detachable NODE; g: detachable NODE)
    do
      a := f ; b := g
    ensure
      a = f
      b = g
    end
  bump
    do
      val := val + 1
    end
  relink (f: detachable NODE)
    do
      set_a(f) ; val := 0
    ensure
      a = f
    end
  harness
    local
      x, y, z: detachable NODE
    do
    end
end
"""

NODE_SHAPE = {"NODE": O.ClassShape((("a", "NODE"), ("b", "NODE")), ("val",))}
VARS = ("x", "y", "z")
ATTRS = ("a", "b")


def _unit():
    u = parse(NODE_SOURCE)
    return u, u.cls("NODE").routine("harness")


UNIT, HARNESS = _unit()


def A(n: str) -> T.Attr:
    return T.Attr(n, "NODE")


def V(n: str) -> T.Var:
    return T.Var(n)


def path(root: T.Term, *names: str) -> T.Term:
    return T.path_of(root, [A(n) for n in names])


# ----------------------------------------------------------------------
# instances


@dataclass
class Instance:
    kind: str  # apply | equation
    hint: str  # rule the generator aimed at
    instrs: tuple = ()
    term: Optional[T.Term] = None
    lhs: Optional[T.Term] = None
    rhs: Optional[T.Term] = None
    conds: tuple = ()
    rules: tuple = ()  # for equations: rules the equation instantiates

    def describe(self) -> str:
        if self.kind == "apply":
            ins = " ; ".join(_show_instr(i) for i in self.instrs)
            return f"{ins} ; {T.pretty(self.term)}"
        cs = ", ".join(str(c) for c in self.conds)
        return f"{T.pretty(self.lhs)} = {T.pretty(self.rhs)}" + (f" given {cs}" if cs else "")


def _show_instr(i) -> str:
    match i:
        case Assign(t, s):
            return f"{T.pretty(t)} := {T.pretty(s)}"
        case QualifiedCall(t, r, args):
            return f"call {T.pretty(t)}.{r}({', '.join(T.pretty(x) for x in args)})"
        case UnqualifiedCall(r, args):
            return f"call {r}({', '.join(T.pretty(x) for x in args)})"
        case Check(c):
            return f"check {T.pretty(c)}"
    return repr(i)


class Gen:
    """Random terms and instructions over the NODE harness."""

    def __init__(self, rng: random.Random):
        self.r = rng

    def var(self) -> T.Var:
        return V(self.r.choice(VARS))

    def attr_name(self) -> str:
        return self.r.choice(ATTRS)

    def root(self) -> T.Term:
        k = self.r.random()
        if k < 0.55:
            return self.var()
        if k < 0.9:
            return A(self.attr_name())
        return T.CURRENT

    def ref(self, max_len: int = 2) -> T.Term:
        root = self.root()
        n = self.r.randint(0, max_len)
        if isinstance(root, T.CurrentK):
            n = 0
        return path(root, *[self.attr_name() for _ in range(n)])

    def source(self) -> T.Term:
        return T.VOID if self.r.random() < 0.1 else self.ref(1)

    def chain(self) -> T.Term:
        op = self.r.choice((T.Integral, T.Integral, T.Depth, T.Acyclic))
        pre = None if self.r.random() < 0.2 else self.ref(1)
        return op(pre, A(self.attr_name()))

    def int_term(self, d: int = 1) -> T.Term:
        k = self.r.random()
        if k < 0.25:
            return T.IntConst(self.r.randint(0, 3))
        if k < 0.55:
            return path(self.ref(1), "val") if self.r.random() < 0.7 else A("val")
        if k < 0.7:
            return T.Depth(self.ref(1), A(self.attr_name()))
        if d <= 0:
            return A("val")
        op = self.r.choice((T.IntPlus, T.IntMinus))
        return op(self.int_term(d - 1), self.int_term(d - 1))

    def seq_term(self, d: int = 1) -> T.Term:
        k = self.r.random()
        if k < 0.45 or d <= 0:
            return T.Integral(None if self.r.random() < 0.2 else self.ref(1), A(self.attr_name()))
        if k < 0.6:
            return T.Singleton(self.ref())
        if k < 0.8:
            return T.Concat(self.seq_term(d - 1), self.seq_term(d - 1))
        return T.Rev(self.seq_term(d - 1))

    def bool_term(self, d: int = 1) -> T.Term:
        k = self.r.random()
        if k < 0.3:
            return self.r.choice((T.Eq, T.Neq))(self.ref(), self.ref())
        if k < 0.45:
            return T.Eq(self.int_term(0), self.int_term(0))
        if k < 0.6:
            return T.Acyclic(self.ref(1), A(self.attr_name()))
        if d <= 0:
            return T.TRUE
        if k < 0.75:
            return T.Not(self.bool_term(d - 1))
        return self.r.choice((T.And, T.Or))(self.bool_term(d - 1), self.bool_term(d - 1))

    def any_term(self) -> T.Term:
        return self.r.choice((self.ref, self.chain, self.int_term, self.seq_term, self.bool_term))()

    def assign(self) -> Assign:
        k = self.r.random()
        if k < 0.45:
            return Assign(self.var(), self.source())
        if k < 0.85:
            return Assign(A(self.attr_name()), self.source())
        return Assign(A("val"), self.int_term(0))

    def call(self) -> QualifiedCall:
        target = self.var() if self.r.random() < 0.8 else A(self.attr_name())
        name = self.r.choice(("set_a", "set_a", "set_b", "set_ab", "bump", "relink"))
        args = {"set_a": 1, "set_b": 1, "set_ab": 2, "bump": 0, "relink": 1}[name]
        return QualifiedCall(target, name, tuple(self.source() for _ in range(args)))

    def ucall(self) -> UnqualifiedCall:
        name = self.r.choice(("set_a", "set_b", "set_ab", "bump", "relink"))
        args = {"set_a": 1, "set_b": 1, "set_ab": 2, "bump": 0, "relink": 1}[name]
        return UnqualifiedCall(name, tuple(self.source() for _ in range(args)))

    def instr(self):
        k = self.r.random()
        if k < 0.5:
            return self.assign()
        if k < 0.8:
            return self.call()
        if k < 0.95:
            return self.ucall()
        return Check(T.TRUE)


def _label(instrs) -> tuple:
    return tuple(dataclasses.replace(i, label=f"h{n}") for n, i in enumerate(instrs, 1))


def _apply(hint: str, instrs, term) -> Instance:
    return Instance("apply", hint, _label(instrs), term)


def _eq(hint: str, lhs, rhs, conds=(), rules=None) -> Instance:
    return Instance("equation", hint, lhs=lhs, rhs=rhs, conds=tuple(conds),
                    rules=tuple(rules) if rules else (RuleId[hint],))


def _set_call(g: Gen, name: str = "set_a") -> QualifiedCall:
    args = 2 if name == "set_ab" else 1
    return QualifiedCall(g.var(), name, tuple(g.source() for _ in range(args)))


def _setter_name(g: Gen) -> tuple[str, str]:
    name = g.r.choice(("set_a", "set_a", "set_ab", "set_b"))
    return name, "b" if name == "set_b" else "a"


def _norm_instance(hint: str, lhs: T.Term, conds=()) -> Instance:
    rhs, steps = T.normalize_traced(lhs)
    rules = {RuleId[name] for name, _, _ in steps}
    return _eq(hint, lhs, rhs, conds, sorted(rules, key=lambda r: r.name) or [RuleId[hint]])


def _template(rule: str, g: Gen) -> Instance:
    r = g.r
    match rule:
        case "CONST":
            return _apply(rule, [g.instr()], r.choice((T.IntConst(r.randint(0, 3)), T.TRUE, T.VOID, T.EMPTY)))
        case "CUR":
            return _apply(rule, [g.instr()], T.CURRENT)
        case "BL":
            return _apply(rule, [g.instr()], T.NegVar(g.var()))
        case "AX":
            i = g.assign()
            return _apply(rule, [i], i.target)
        case "AY":
            return _apply(rule, [g.assign()], g.root())
        case "DIST":
            return _apply(rule, [g.instr()], r.choice((g.seq_term, g.bool_term, g.int_term))(2))
        case "ASSOC":
            return _apply(rule, [g.instr() for _ in range(r.randint(2, 3))], g.any_term())
        case "OLD":
            return _apply(rule, [g.instr()], T.Old(r.choice((g.ref, g.int_term))()))
        case "UC":
            name = r.choice(("bump", "set_ab", "relink"))
            args = {"bump": 0, "set_ab": 2, "relink": 1}[name]
            return _apply(rule, [UnqualifiedCall(name, tuple(g.source() for _ in range(args)))],
                          r.choice((A("val"), A("a"), A("b"), T.IntPlus(A("val"), T.IntConst(1)))))
        case "US":
            name, a = _setter_name(g)
            args = 2 if name == "set_ab" else 1
            return _apply(rule, [UnqualifiedCall(name, tuple(g.source() for _ in range(args)))], A(a))
        case "QC":
            c = QualifiedCall(g.var(), "relink", (g.source(),))
            return _apply(rule, [c], T.Dot(c.target, A("a")))
        case "QCp":
            t = g.var()
            c = QualifiedCall(t, "bump", ())
            e = r.choice((path(t, "val"), T.Dot(T.Old(t), A("val")), T.IntPlus(path(t, "val"), g.int_term(0))))
            return _apply(rule, [c], e)
        case "QS" | "QSN" | "ICX" | "PCX" | "NP":
            name, a = _setter_name(g)
            c = _set_call(g, name)
            x = c.target
            head = T.Old(x) if rule in ("QS", "ICX", "PCX") and r.random() < 0.7 else x
            match rule:
                case "QS" | "QSN":
                    e = T.Dot(head, A(a))
                case "ICX":
                    e = T.Integral(head, A(a))
                case _:
                    e = r.choice((T.Integral(head, A(a)),
                                  path(T.Dot(head, A(a)), *[g.attr_name() for _ in range(r.randint(1, 2))])))
            return _apply(rule, [c], e)
        case "PCY" | "ICY":
            name, a = _setter_name(g)
            c = _set_call(g, name)
            if rule == "PCY":
                e = g.ref(3) if r.random() < 0.8 else A("val")
            else:
                e = g.chain()
            return _apply(rule, [c], e)
        case "PAX" | "PAY" | "IAX" | "IAY" | "IA" | "IAP":
            x = g.attr_name() if r.random() < 0.8 else None
            target = A(x) if x else g.var()
            i = Assign(target, g.source())
            w = x or g.attr_name()
            tail = [g.attr_name() for _ in range(r.randint(1, 3))]
            match rule:
                case "PAX":
                    e = path(target, *tail)
                case "PAY":
                    e = path(g.var() if r.random() < 0.7 else A(g.attr_name()), *tail)
                case "IAX":
                    e = T.Integral(path(target, *tail[:-1]), A(r.choice(ATTRS)))
                case "IAY":
                    e = r.choice((T.Integral, T.Depth, T.Acyclic))(path(g.var(), *tail[:-1]), A(r.choice(ATTRS)))
                case "IA":
                    e = T.Integral(None, A(w))
                case _:
                    e = T.Integral(target, A(w))
            return _apply(rule, [i], e)
        case "NEG1":
            x = g.var() if r.random() < 0.6 else A(g.attr_name())
            pre = [A(g.attr_name())] if r.random() < 0.3 else []
            tail = [A(g.attr_name())] if r.random() < 0.5 else []
            lhs = T.build_dot(pre + [x, T.NegVar(x)] + tail)
            return _norm_instance(rule, lhs, [Attached(T.build_dot(pre + [x]))])
        case "NEG2":
            tail = [A(g.attr_name()) for _ in range(r.randint(0, 2))]
            return _norm_instance(rule, T.build_dot([T.NegVar(V("x")), T.Old(V("x"))] + tail))
        case "CUR1":
            e = r.choice((g.ref(), g.chain(), A("val")))
            return _norm_instance(rule, T.Dot(T.CURRENT, e))
        case "CUR2":
            return _norm_instance(rule, T.Dot(g.ref(), T.CURRENT))
        case "SIE":
            a = A(g.attr_name())
            return _eq(rule, T.Integral(None, a), T.Concat(T.Singleton(T.CURRENT), T.Integral(a, a)),
                       [NeverAlias(T.CURRENT, T.Integral(a, a))])
        case "NIE":
            p, a = g.ref(1), A(g.attr_name())
            return _eq(rule, T.Integral(p, a), T.Concat(T.Singleton(p), T.Integral(T.Dot(p, a), a)),
                       [NeverAlias(p, T.Integral(T.Dot(p, a), a))])
        case "DOT":
            x = g.var()
            return _norm_instance(rule, T.Dot(x, g.any_term()), [Attached(x)])
        case "SEQ":
            return _norm_instance(rule, g.seq_term(3))
        case "VOID":
            e = r.choice((path(T.VOID, g.attr_name()), T.Singleton(T.VOID), T.Integral(T.VOID, A("a")),
                          T.Depth(T.VOID, A("b")), T.Acyclic(T.VOID, A("a"))))
            return _norm_instance(rule, e)
        case "BOOL":
            return _norm_instance(rule, g.bool_term(3))
        case "NOP":
            return _apply(rule, [Check(T.TRUE)], g.any_term())
    raise KeyError(rule)


TEMPLATES = [r.name for r in RuleId]


# ----------------------------------------------------------------------
# concrete side conditions


def _objs(v) -> Optional[set]:
    if v is None:
        return set()
    if isinstance(v, tuple):
        return set(v)
    if isinstance(v, str):
        return {v}
    return None


def holds(c: SideCondition, h: O.Heap, env: O.Env) -> Optional[bool]:
    """Truth of an alias-level condition in a concrete state; None if not evaluable."""
    try:
        match c.kind:
            case "NeverAlias":
                s1, s2 = (_objs(O.eval_term(t, h, env)) for t in c.args)
                if s1 is None or s2 is None:
                    return None
                return not (s1 & s2)
            case "CycleFree":
                attrs, e, p, anchor = c.args
                anc = O.eval_term(anchor, h, env)
                for j, n in enumerate(p):
                    if n in attrs:
                        q = O.eval_term(T.path_of(e, [A(m) for m in p[:j]]), h, env)
                        if q is not None and q == anc:
                            return False
                return True
            case "AcyclicAfter":
                p, a = c.args
                return bool(O.eval_term(T.Acyclic(p, A(a)), h, env))
            case "Attached":
                return O.eval_term(c.args[0], h, env) is not None
    except O.OracleError:
        return None
    return None


# ----------------------------------------------------------------------
# the differential check


@dataclass
class CaseResult:
    outcome: str  # pass | fail | vacuous | stuck
    rules: frozenset = frozenset()
    raw_violation: bool = False
    post_value: object = None
    pre_value: object = None
    detail: str = ""


def make_env(h: O.Heap, env: O.Env, rng: random.Random) -> O.Env:
    """Wrap a random state as a call frame whose client holds ``x`` bound to the current object."""
    client_obj = rng.choice(sorted(h.objects))
    cvars = {v: env.vars.get(v) for v in VARS}
    cvars["x"] = env.current
    client = O.Env(client_obj, cvars, None, O.Snapshot(h.copy(), dict(cvars)))
    frame = O.Env(env.current, {v: env.vars.get(v) for v in VARS}, client)
    return O.snapshot(h, frame)


def _callee_frame(i, h: O.Heap, env: O.Env):
    if isinstance(i, QualifiedCall):
        o = O.eval_term(i.target, h, env, UNIT)
        if o is None:
            return None
        r = UNIT.cls(h.objects[o].cls).routine(i.routine)
        vars_ = {}
        client = env.copy()
    else:
        o = env.current
        r = UNIT.cls(h.objects[o].cls).routine(i.routine)
        vars_ = dict(env.vars)  # caller names stay visible for conditions on caller terms
        client = env.client
    args = [O.eval_term(a, h, env, UNIT) for a in i.actuals]
    vars_.update({n: v for (n, _), v in zip(r.formals, args)})
    vars_.update({n: O.default_value(ty) for n, ty in r.locals})
    return r, O.Env(o, vars_, client, env.entry)


def _states(instrs, h: O.Heap, env: O.Env) -> dict:
    """Pre-states of every top-level instruction and of the bodies of directly called routines."""
    out: dict = {}
    callee_seen: Counter = Counter()

    def on_step(i, hh, ee):
        out[(None, i.label)] = (hh.copy(), ee.copy())
        if isinstance(i, (QualifiedCall, UnqualifiedCall)):
            fr = _callee_frame(i, hh, ee)
            if fr is None:
                return
            r, frame = fr
            callee_seen[r.name] += 1

            def inner(j, h2, e2):
                out[(r.name, j.label)] = (h2.copy(), e2.copy())

            try:
                O.exec_instrs(list(r.body), hh, frame, UNIT, O.Hooks(on_step=inner))
            except O.OracleError:
                pass

    O.exec_instrs(list(instrs), h, env, UNIT, O.Hooks(on_step=on_step))
    for name, k in callee_seen.items():
        if k > 1:  # ambiguous: the same routine runs in several frames
            for key in [key for key in out if key[0] == name]:
                del out[key]
    return out


def differential_check(inst: Instance, h: O.Heap, env: O.Env) -> CaseResult:
    """Run the rule and the oracle on one state and classify the outcome."""
    if inst.kind == "equation":
        try:
            lv = O.eval_term(inst.lhs, h, env, UNIT)
            rv = O.eval_term(inst.rhs, h, env, UNIT)
        except O.OracleError as exc:
            return CaseResult("vacuous", frozenset(inst.rules), detail=str(exc))
        ok = [holds(c, h, env) for c in inst.conds]
        rules = frozenset(inst.rules)
        if not all(v is True for v in ok):
            return CaseResult("vacuous", rules, lv != rv, lv, rv)
        return CaseResult("pass" if lv == rv else "fail", rules, lv != rv, lv, rv)

    term = inst.term
    if len(inst.instrs) > 1:
        term = freeze_old(term)[0]
    rw = Rewriter(UNIT, HARNESS, None, mode="deferred")
    seg = rw.trace.open("case", T.Semi(inst.instrs, term))
    try:
        out = rw.seq_apply(inst.instrs, term)
    except (NoRuleApplies, ValueError) as exc:
        return CaseResult("stuck", detail=str(exc))
    rw.trace.close(seg, out)
    rules = frozenset(rw.trace.rules())
    if not rw.trace.replay():
        return CaseResult("fail", rules, detail="trace does not replay")
    try:
        h2, env2 = O.exec_instrs(list(inst.instrs), h, env, UNIT)
        post = O.eval_term(term, h2, env2, UNIT)
        pre = O.eval_term(out, h, env, UNIT)
    except O.OracleError as exc:
        return CaseResult("vacuous", rules, detail=str(exc))
    raw = post != pre
    if rw.deferred:
        try:
            states = _states(inst.instrs, h, env)
        except O.OracleError:
            states = {}
        for cond, routine, depth in rw.deferred:
            st = states.get((None if depth == 0 else routine, cond.at))
            if depth > 1 or st is None or holds(cond, *st) is not True:
                return CaseResult("vacuous", rules, raw, post, pre, detail=f"premise {cond}")
    return CaseResult("fail" if raw else "pass", rules, raw, post, pre)


# ----------------------------------------------------------------------
# minimization


def _drop_object(h: O.Heap, env: O.Env, oid: str) -> tuple[O.Heap, O.Env]:
    h2 = h.copy()
    del h2.objects[oid]
    for o in h2.objects.values():
        for a, v in list(o.refs.items()):
            if v == oid:
                o.refs[a] = None
    return h2, _scrub(env, h2)


def _scrub(env: O.Env, h: O.Heap) -> O.Env:
    """Rebuild a frame so that no variable or snapshot refers to a missing object."""
    def fix(vars_):
        return {k: (v if not isinstance(v, str) or v in h.objects else None) for k, v in vars_.items()}
    client = None
    if env.client is not None:
        c = env.client
        cur = c.current if c.current in h.objects else env.current
        cv = fix(c.vars)
        client = O.Env(cur, cv, None, O.Snapshot(h.copy(), dict(cv)))
    frame = O.Env(env.current, fix(env.vars), client)
    return O.snapshot(h, frame)


def minimize(inst: Instance, h: O.Heap, env: O.Env) -> tuple[O.Heap, O.Env]:
    """Greedy object and edge deletion while the case still fails."""
    def fails(hh, ee) -> bool:
        try:
            return differential_check(inst, hh, ee).outcome == "fail"
        except Exception:
            return False

    changed = True
    while changed:
        changed = False
        protect = {env.current} | ({env.client.current} if env.client else set())
        for oid in sorted(h.objects):
            if oid in protect:
                continue
            h2, e2 = _drop_object(h, env, oid)
            if fails(h2, e2):
                h, env, changed = h2, e2, True
                break
        if changed:
            continue
        for oid in sorted(h.objects):
            for a, v in sorted(h.objects[oid].refs.items()):
                if v is None:
                    continue
                h2 = h.copy()
                h2.objects[oid].refs[a] = None
                e2 = _scrub(env, h2)
                if fails(h2, e2):
                    h, env, changed = h2, e2, True
                    break
            if changed:
                break
    return h, env


# ----------------------------------------------------------------------
# fixtures: the two published counterexamples


def pax_fixture() -> tuple[Instance, O.Heap, O.Env]:
    """``(a := y) ; a.b.a``: the path re-enters Current through b, so PAX does not hold."""
    h = O.Heap({
        "O": O.Obj("NODE", {"a": "O1", "b": None}, {"val": 0}),
        "O1": O.Obj("NODE", {"a": None, "b": None}, {"val": 1}),
        "O2": O.Obj("NODE", {"a": None, "b": "O"}, {"val": 2}),
    })
    env = O.snapshot(h, O.Env("O", {"x": None, "y": "O2", "z": None}, O.Env("O", {"x": "O"})))
    return _apply("PAX", [Assign(A("a"), V("y"))], path(A("a"), "b", "a")), h, env


def ia_fixture() -> tuple[Instance, O.Heap, O.Env]:
    """``(a := y) ; integral(a)`` where y's chain returns to Current: IA does not hold."""
    h = O.Heap({
        "O": O.Obj("NODE", {"a": "O1", "b": None}, {"val": 0}),
        "O1": O.Obj("NODE", {"a": None, "b": None}, {"val": 1}),
        "O2": O.Obj("NODE", {"a": "O", "b": None}, {"val": 2}),
    })
    env = O.snapshot(h, O.Env("O", {"x": None, "y": "O2", "z": None}, O.Env("O", {"x": "O"})))
    return _apply("IA", [Assign(A("a"), V("y"))], T.Integral(None, A("a"))), h, env


FIXTURES: dict[str, Callable] = {"PAX": pax_fixture, "IA": ia_fixture}


# ----------------------------------------------------------------------
# driver


@dataclass
class Failure:
    instance: str
    heap: str
    detail: str


@dataclass
class Summary:
    seed: int
    cases: int
    per_rule: dict[str, Counter] = field(default_factory=dict)
    outcomes: Counter = field(default_factory=Counter)
    failures: list[Failure] = field(default_factory=list)
    fixtures: dict[str, CaseResult] = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures

    def rows(self) -> list[tuple[str, int, int, int]]:
        return [(name, c["pass"], c["fail"], c["vacuous"]) for name, c in self.per_rule.items()]

    def format(self) -> str:
        lines = [f"difftest seed={self.seed} cases={self.cases} "
                 f"pass={self.outcomes['pass']} fail={self.outcomes['fail']} "
                 f"vacuous={self.outcomes['vacuous']} stuck={self.outcomes['stuck']} "
                 f"time={self.elapsed:.1f}s"]
        lines.append(f"{'rule':<8} {'pass':>7} {'fail':>6} {'vacuous':>8}")
        for name, p, f, v in self.rows():
            lines.append(f"{name:<8} {p:>7} {f:>6} {v:>8}")
        for name, res in self.fixtures.items():
            raw = "with raw violation" if res.raw_violation else "without raw violation"
            lines.append(f"fixture {name}: {res.outcome} {raw}; post={res.post_value} pre={res.pre_value}")
        for fl in self.failures:
            lines.append(f"FAIL {fl.instance}: {fl.detail}\n{fl.heap}")
        return "\n".join(lines)


def _rule_key(r: RuleId) -> str:
    return r.value[0]


def difftest(seed: int = 1, cases: int = 10_000, max_objects: int = 10,
             rules: Optional[list[str]] = None) -> Summary:
    """Randomized differential testing of the rewrite rules against the oracle."""
    rng = random.Random(seed)
    gen = Gen(rng)
    wanted = [r for r in TEMPLATES if rules is None or r in rules]
    if rules is not None:
        unknown = set(rules) - set(TEMPLATES)
        if unknown:
            raise ValueError(f"unknown rules: {', '.join(sorted(unknown))}")
    summary = Summary(seed, cases)
    order = {r.value[0]: k for k, r in enumerate(RuleId)}
    start = time.perf_counter()
    if cases > 0 and any(name in FIXTURES for name in wanted):
        for name, make in FIXTURES.items():
            inst, h, env = make()
            summary.fixtures[name] = differential_check(inst, h, env)
    for k in range(cases):
        hint = wanted[k % len(wanted)] if wanted else rng.choice(TEMPLATES)
        inst = _template(hint, gen)
        h, env = O.random_heap(rng, max_objects, NODE_SHAPE, {v: "NODE" for v in VARS})
        env = make_env(h, env, rng)
        res = differential_check(inst, h, env)
        summary.outcomes[res.outcome] += 1
        for r in res.rules:
            if rules is not None and _rule_key(r) not in rules:
                continue
            summary.per_rule.setdefault(_rule_key(r), Counter())[res.outcome] += 1
        if res.outcome == "fail":
            mh, menv = minimize(inst, h, env)
            summary.failures.append(Failure(inst.describe(), O.format_heap(mh, menv), res.detail))
    summary.per_rule = dict(sorted(summary.per_rule.items(), key=lambda kv: order[kv[0]]))
    summary.elapsed = time.perf_counter() - start
    return summary
