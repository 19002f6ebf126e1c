"""Symbolic computation of ``i ; e`` by named rules, with replayable traces."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

from . import terms as T
from .alias import FactBase, analyze
from .lang import Resolver, directly_affected, indirectly_affects
from .program import (
    Assign,
    Check,
    Cut,
    Instr,
    Loop,
    QualifiedCall,
    RoutineDef,
    SourceUnit,
    UnqualifiedCall,
    walk,
)


class RuleId(Enum):
    CONST = ("CONST", 3)
    CUR = ("CUR", 4)
    AX = ("AX", 5)
    AY = ("AY", 6)
    DIST = ("DIST", 7)
    ASSOC = ("ASSOC", 8)
    OLD = ("OLD", 9)
    UC = ("UC", 11)
    US = ("US", 13)
    NEG1 = ("NEG1", 15)
    NEG2 = ("NEG2", 16)
    CUR1 = ("CUR1", 17)
    CUR2 = ("CUR2", 18)
    NP = ("NP", 19)
    BL = ("BL", 20)
    QC = ("QC", 21)
    QCp = ("QCp", 22)
    QS = ("QS", 23)
    QSN = ("QSN", 24)
    SIE = ("SIE", 25)
    NIE = ("NIE", 26)
    PAX = ("PAX", 27)
    PAY = ("PAY", 28)
    IAX = ("IAX", 29)
    IAY = ("IAY", 30)
    IA = ("IA", 31)
    IAP = ("IAP", 32)
    PCX = ("PCX", 33)
    ICX = ("ICX", 34)
    PCY = ("PCY", 35)
    ICY = ("ICY", 36)
    # structural laws used by the normalizer and the engine
    DOT = ("DOT", None)
    SEQ = ("SEQ", None)
    VOID = ("VOID", None)
    BOOL = ("BOOL", None)
    NOP = ("NOP", None)

    def __str__(self) -> str:
        name, num = self.value
        return f"{name}/{num}" if num is not None else name

    @classmethod
    def parse(cls, text: str) -> RuleId:
        name = text.split("/")[0]
        for r in cls:
            if r.value[0] == name:
                return r
        raise ValueError(f"unknown rule {text!r}")


CALCULUS_RULES = [r for r in RuleId if r.value[1] is not None]

_FAMILY_RULE = {
    "DOT": RuleId.DOT, "CUR1": RuleId.CUR1, "CUR2": RuleId.CUR2, "NEG1": RuleId.NEG1,
    "NEG2": RuleId.NEG2, "VOID": RuleId.VOID, "SEQ": RuleId.SEQ, "BOOL": RuleId.BOOL,
    "SIE": RuleId.SIE, "NIE": RuleId.NIE,
}

STATIC_KINDS = ("IsSetterFor", "NoIndirectAffect", "Nonprodigal")
EVIDENCE = ("alias-engine", "assumed-fact", "setter-classification", "trivial")


@dataclass(frozen=True)
class SideCondition:
    """A rule premise; ``at`` names the program location where it must hold."""

    kind: str
    args: tuple
    at: str = ""

    def __str__(self) -> str:
        def show(a) -> str:
            if isinstance(a, T.Term):
                return T.pretty(a)
            if isinstance(a, frozenset):
                return "{" + ", ".join(sorted(a)) + "}"
            if isinstance(a, tuple):
                return ".".join(a) if a else "<>"
            return str(a)

        args = self.args[1:] if self.kind in STATIC_KINDS else self.args
        body = f"{self.kind}({', '.join(show(a) for a in args)})"
        return f"{body} @{self.at}" if self.at else body


def NeverAlias(e: T.Term, f: T.Term, at: str = "") -> SideCondition:
    return SideCondition("NeverAlias", (e, f), at)


def AcyclicAfter(p: T.Term, a: str, at: str = "") -> SideCondition:
    return SideCondition("AcyclicAfter", (p, a), at)


def CycleFree(attrs, e: T.Term, p, anchor: T.Term = T.CURRENT, at: str = "") -> SideCondition:
    """No prefix q.w of path p (w in attrs) has e.q possibly aliased to anchor."""
    return SideCondition("CycleFree", (frozenset(attrs), e, tuple(p), anchor), at)


def IsSetterFor(r: RoutineDef, a: str) -> SideCondition:
    return SideCondition("IsSetterFor", (r.owner, r.name, a))


def NoIndirectAffect(r: RoutineDef, a: str) -> SideCondition:
    return SideCondition("NoIndirectAffect", (r.owner, r.name, a))


def Nonprodigal(r: RoutineDef) -> SideCondition:
    return SideCondition("Nonprodigal", (r.owner, r.name))


def Attached(e: T.Term, at: str = "") -> SideCondition:
    return SideCondition("Attached", (e,), at)


@dataclass(frozen=True)
class ProofStep:
    rule: RuleId
    before: T.Term
    after: T.Term
    sides: tuple = ()  # ((SideCondition, evidence), ...)

    def format(self, n: int) -> str:
        line = f"STEP {n}: {self.rule} : {T.pretty(self.before)} ==> {T.pretty(self.after)}"
        for cond, ev in self.sides:
            line += f" [side: {cond} BY {ev}]"
        return line


@dataclass
class Segment:
    name: str
    start: T.Term
    lo: int
    hi: int = -1
    end: Optional[T.Term] = None


class ReplayError(Exception):
    pass


@dataclass
class ProofTrace:
    steps: list[ProofStep] = field(default_factory=list)
    segments: list[Segment] = field(default_factory=list)
    verdict: str = ""

    def open(self, name: str, start: T.Term) -> Segment:
        seg = Segment(name, start, len(self.steps))
        self.segments.append(seg)
        return seg

    def close(self, seg: Segment, end: T.Term) -> None:
        seg.hi, seg.end = len(self.steps), end

    def rules(self) -> list[RuleId]:
        return [s.rule for s in self.steps]

    def format(self) -> str:
        lines = [s.format(n) for n, s in enumerate(self.steps, 1)]
        if self.verdict:
            lines.append(f"VERDICT: {self.verdict}")
        return "\n".join(lines) + "\n"

    def segment(self, name: str) -> Segment:
        for seg in self.segments:
            if seg.name == name:
                return seg
        raise KeyError(f"no segment {name!r}")

    def intermediates(self, seg: Segment) -> list[T.Term]:
        """Whole terms of a segment: its start, then the term after each step."""
        t, out = seg.start, [seg.start]
        for k in range(seg.lo, seg.hi):
            st = self.steps[k]
            nt = replace_first(t, st.before, st.after)
            if nt is None:
                raise ReplayError(f"step {k + 1}: {T.pretty(st.before)} not found in {T.pretty(t)}")
            t = nt
            out.append(t)
        return out

    def replay_segment(self, seg: Segment) -> T.Term:
        return self.intermediates(seg)[-1]

    def replay(self) -> bool:
        """Re-run every segment from its start; True if each reproduces its recorded end."""
        for seg in self.segments:
            if seg.end is None:
                continue
            if self.replay_segment(seg) != seg.end:
                return False
        return True


def replace_first(t: T.Term, old: T.Term, new: T.Term) -> Optional[T.Term]:
    """Replace the first (pre-order) occurrence of *old* in *t*; None if absent."""
    if t == old:
        return new
    done = [False]

    def go(u: T.Term) -> T.Term:
        if done[0]:
            return u
        if u == old:
            done[0] = True
            return new
        return T.map_children(u, go)

    out = T.map_children(t, go)
    return out if done[0] else None


class NoRuleApplies(Exception):
    def __init__(self, e: T.Term, i, failed: list[SideCondition] = (), note: str = ""):
        self.term, self.instr, self.failed = e, i, list(failed)
        label = getattr(i, "label", "") or "?"
        msg = f"no rule applies to {label} ; {T.pretty(e)}"
        if note:
            msg += f" ({note})"
        if self.failed:
            msg += "; failed: " + ", ".join(str(c) for c in self.failed)
        super().__init__(msg)


# ----------------------------------------------------------------------
# old freezing


def freeze_old(e: T.Term, counter: Optional[Iterator[int]] = None) -> tuple[T.Term, list[tuple[T.Ghost, T.Term]]]:
    """Replace each maximal ``old(u)`` by an entry-snapshot ghost constant."""
    counter = counter if counter is not None else itertools.count(1)
    bindings: list[tuple[T.Ghost, T.Term]] = []

    def go(u: T.Term) -> T.Term:
        if isinstance(u, T.Old):
            if T.contains(u.inner, lambda s: isinstance(s, T.Old)):
                raise ValueError(f"nested old in {T.pretty(u)}")
            g = T.Ghost(next(counter), u.inner)
            bindings.append((g, u.inner))
            return g
        return T.map_children(u, go)

    return go(e), bindings


# ----------------------------------------------------------------------
# the engine

_DIST_OPS = (T.Concat, T.Eq, T.Neq, T.And, T.Or, T.IntPlus, T.IntMinus, T.Not, T.Singleton, T.Rev)


def _rebuild(t: T.Term, kids: list[T.Term]) -> T.Term:
    it = iter(kids)
    return T.map_children(t, lambda _: next(it))


@dataclass
class Candidate:
    rule: RuleId
    after: T.Term
    conds: list[SideCondition] = field(default_factory=list)
    kind: str = "direct"  # direct | np | dist | qc | uc


def _pure_path(t: T.Term) -> Optional[tuple[T.Term, list[str], list[T.Attr]]]:
    """Root, attribute names and attribute terms of a root-plus-attributes path."""
    sp = T.split_path(t)
    if sp is None:
        return None
    root, attrs = sp
    return root, [a.name for a in attrs], list(attrs)


def _is_root(t: T.Term) -> bool:
    return isinstance(t, (T.Var, T.Attr))


class Rewriter:
    """One proof session: computes ``i ; e`` and records every step."""

    def __init__(self, unit: Optional[SourceUnit] = None, routine: Optional[RoutineDef] = None,
                 facts: Optional[FactBase] = None, *, mode: str = "strict",
                 trace: Optional[ProofTrace] = None, depth: int = 0, max_depth: int = 8):
        self.unit, self.routine, self.facts = unit, routine, facts
        self.mode = mode
        self.trace = trace if trace is not None else ProofTrace()
        self.depth, self.max_depth = depth, max_depth
        self.deferred: list[SideCondition] = []
        self.assumed: list[SideCondition] = []
        self._callee_facts: dict = {}

    # -- recording ------------------------------------------------------
    def step(self, rule: RuleId, before: T.Term, after: T.Term, sides=()) -> None:
        self.trace.steps.append(ProofStep(rule, before, after, tuple(sides)))

    def norm(self, t: T.Term) -> T.Term:
        out, steps = T.normalize_traced(t)
        for fam, b, a in steps:
            self.step(_FAMILY_RULE[fam], b, a)
        return out

    # -- side conditions ------------------------------------------------
    def _routine(self, owner: str, name: str) -> RoutineDef:
        return self.unit.cls(owner).routine(name)

    def static_holds(self, c: SideCondition) -> bool:
        r = self._routine(c.args[0], c.args[1])
        match c.kind:
            case "IsSetterFor":
                return r.setter_class.kind != "not-a-setter" and r.setter_class.attr == c.args[2]
            case "NoIndirectAffect":
                return not indirectly_affects(self.unit, r)
            case "Nonprodigal":
                return r.nonprodigal
        return False

    def discharge(self, c: SideCondition) -> Optional[str]:
        if c.kind in STATIC_KINDS:
            return "setter-classification" if self.static_holds(c) else None
        if trivially_true(c):
            return "trivial"
        if self.facts is not None:
            pred = alias_predicate(c)
            if pred is not None:
                try:
                    ev = self.facts.evidence(c.at or None, pred)
                except KeyError:
                    ev = None
                if ev is not None:
                    if ev == "assumed-fact":
                        self.assumed.append(c)
                    return ev
        if self.mode == "deferred" and not syntactically_false(c):
            self.deferred.append((c, self.routine.name if self.routine else None, self.depth))
            return "deferred"
        return None

    def _discharge_all(self, conds):
        sides, failed = [], []
        for c in conds:
            ev = self.discharge(c)
            if ev is None:
                failed.append(c)
            else:
                sides.append((c, ev))
        return not failed, sides, failed

    # -- public entry points ---------------------------------------------
    def apply(self, i: Instr, e: T.Term) -> T.Term:
        e = self.norm(e)
        return self._app(i, e)

    def seq_apply(self, instrs, e: T.Term) -> T.Term:
        instrs = tuple(instrs)
        if not instrs:
            return e
        if len(instrs) == 1:
            return self.apply(instrs[0], e)
        if T.contains(e, lambda s: isinstance(s, T.Old)):
            raise ValueError("freeze old expressions before applying an instruction sequence")
        e = self.norm(e)
        if isinstance(e, _DIST_OPS):
            kids = list(T.children(e))
            spread = _rebuild(e, [T.Semi(instrs, k) for k in kids])
            self.step(RuleId.DIST, T.Semi(instrs, e), spread)
            results = [self.seq_apply(instrs, k) for k in kids]
            return self.norm(_rebuild(e, results))
        cur = e
        for k in range(len(instrs), 0, -1):
            if k > 1:
                self.step(RuleId.ASSOC, T.Semi(instrs[:k], cur),
                          T.Semi(instrs[:k - 1], T.Semi((instrs[k - 1],), cur)))
            cur = self._app(instrs[k - 1], cur)
        return cur

    # -- core -----------------------------------------------------------
    def _app(self, i: Instr, e: T.Term) -> T.Term:
        before = T.Semi((i,), e)
        failures: list[SideCondition] = []
        for cand in self._candidates(i, e):
            ok, sides, failed = self._discharge_all(cand.conds)
            if not ok:
                failures += failed
                continue
            match cand.kind:
                case "direct":
                    self.step(cand.rule, before, cand.after, sides)
                    return self.norm(cand.after)
                case "np":
                    self.step(cand.rule, before, T.Semi((i,), cand.after), sides)
                    return self._app(i, cand.after)
                case "dist":
                    kids = list(T.children(e))
                    self.step(RuleId.DIST, before, _rebuild(e, [T.Semi((i,), k) for k in kids]))
                    return self.norm(_rebuild(e, [self._app(i, k) for k in kids]))
                case "qc":
                    return self._qualified_call(i, e, failures)
                case "uc":
                    return self._unqualified_call(i, e, failures)
        raise NoRuleApplies(e, i, failures)

    def _candidates(self, i: Instr, e: T.Term) -> Iterator[Candidate]:
        # exact-match axioms
        match e:
            case T.IntConst() | T.BoolConst() | T.VoidK() | T.EmptySeq() | T.Ghost():
                yield Candidate(RuleId.CONST, e)
                return
            case T.CurrentK():
                yield Candidate(RuleId.CUR, e)
                return
            case T.NegVar():
                yield Candidate(RuleId.BL, e)
                return
            case T.Old(inner):
                yield Candidate(RuleId.OLD, inner)
                return
        if isinstance(i, (Cut, Check)):
            yield Candidate(RuleId.NOP, e)
            return
        match i:
            case QualifiedCall():
                yield from self._setter_candidates(i, e)
            case UnqualifiedCall():
                r = self._own_routine(i.routine)
                if r is not None and r.setter_class.kind != "not-a-setter":
                    a, k = r.setter_class.attr, r.setter_class.position
                    if isinstance(e, T.Attr) and e.name == a:
                        yield Candidate(RuleId.US, i.actuals[k - 1], [IsSetterFor(r, a)])
            case Assign():
                yield from self._assign_candidates(i, e)
        if isinstance(e, _DIST_OPS):
            yield Candidate(RuleId.DIST, e, kind="dist")
            return
        if isinstance(i, QualifiedCall):
            yield Candidate(RuleId.QC, e, kind="qc")
        elif isinstance(i, UnqualifiedCall):
            yield Candidate(RuleId.UC, e, kind="uc")

    # -- assignments -----------------------------------------------------
    def _assign_candidates(self, i: Assign, e: T.Term) -> Iterator[Candidate]:
        xt, src, at = i.target, i.source, i.label
        var_target = isinstance(xt, T.Var)
        x = getattr(xt, "name", None)

        def prefix_conds(base: T.Term, p: list[str]) -> list[SideCondition]:
            if var_target or x not in p:
                return []
            return [CycleFree({x}, base, p, T.CURRENT, at)]

        if e == xt:
            yield Candidate(RuleId.AX, src)
            return
        if _is_root(e):
            yield Candidate(RuleId.AY, e)
            return
        if isinstance(e, T.Dot):
            pp = _pure_path(e)
            if pp is not None and pp[1]:
                root, p, attrs = pp
                if root == xt:
                    yield Candidate(RuleId.PAX, T.path_of(src, attrs), prefix_conds(src, p))
                elif _is_root(root) or (var_target and isinstance(root, T.NegVar)):
                    yield Candidate(RuleId.PAY, e, prefix_conds(root, p))
            return
        if isinstance(e, T.CHAIN_OPS):
            op, P, a = type(e), e.prefix, e.attr
            same = (not var_target) and a.name == x
            if P is None:
                if not same:
                    yield Candidate(RuleId.IAY, e)
                elif op is T.Integral:
                    yield Candidate(RuleId.IA, T.Concat(T.Singleton(T.CURRENT), T.Integral(src, a)),
                                    [NeverAlias(T.Integral(src, a), T.CURRENT, at)])
                return
            pp = _pure_path(P)
            if pp is None:
                return
            root, p, attrs = pp
            if root == xt:
                newp = T.path_of(src, attrs)
                conds = prefix_conds(src, p)
                if same and not p:
                    if op in (T.Integral, T.Depth):
                        yield Candidate(RuleId.IAP, op(src, a), [NeverAlias(T.Integral(src, a), xt, at)])
                    return
                if same:
                    conds = conds + [NeverAlias(T.Integral(newp, a), T.CURRENT, at)]
                yield Candidate(RuleId.IAX, op(newp, a), conds)
            elif _is_root(root) or (var_target and isinstance(root, T.NegVar)):
                conds = prefix_conds(root, p)
                if same:
                    conds = conds + [NeverAlias(T.Integral(P, a), T.CURRENT, at)]
                yield Candidate(RuleId.IAY, e, conds)

    # -- calls -----------------------------------------------------------
    def type_of(self, t: T.Term) -> Optional[str]:
        if self.unit is None or self.routine is None:
            return None
        try:
            cls = self.unit.cls(self.routine.owner)
            return Resolver(self.unit, cls, self.routine).term(t)[1]
        except Exception:
            return None

    def callee(self, i: QualifiedCall) -> Optional[RoutineDef]:
        ty = self.type_of(i.target)
        c = self.unit.cls(ty) if (self.unit and ty) else None
        return c.routine(i.routine) if c else None

    def _own_routine(self, name: str) -> Optional[RoutineDef]:
        if self.unit is None or self.routine is None:
            return None
        return self.unit.cls(self.routine.owner).routine(name)

    def _target_stable(self, r: RoutineDef, x: T.Term, at: str) -> Optional[list[SideCondition]]:
        """Conditions under which the call leaves the client's ``x`` unchanged (None: not a root)."""
        if isinstance(x, T.Var):
            return []
        if isinstance(x, T.Attr):
            if x.name in directly_affected(self.unit, r):
                return [NeverAlias(x, T.CURRENT, at)]
            return []
        return None

    def _frame_conds(self, r: RoutineDef, x: T.Term, path: Optional[T.Term], at: str):
        """Conditions for ``path`` (a root followed by attributes) to be unchanged by the call."""
        if path is None:
            return []
        pp = _pure_path(path)
        if pp is None or not _is_root(pp[0]):
            return None
        root, p, _ = pp
        w = directly_affected(self.unit, r)
        conds = []
        if isinstance(root, T.Attr) and root.name in w:
            conds.append(NeverAlias(x, T.CURRENT, at))
        if any(n in w for n in p):
            conds.append(CycleFree(w, root, p, x, at))
        return conds

    def _setter_candidates(self, i: QualifiedCall, e: T.Term) -> Iterator[Candidate]:
        r = self.callee(i)
        if r is None or r.setter_class.kind == "not-a-setter":
            return
        a, k = r.setter_class.attr, r.setter_class.position
        c = i.actuals[k - 1]
        x = T.normalize(i.target)
        at = i.label
        s_set, s_ind, s_np = IsSetterFor(r, a), NoIndirectAffect(r, a), Nonprodigal(r)
        w = directly_affected(self.unit, r)
        items = T.spine(e)
        stable = self._target_stable(r, x, at)
        # QS / QSN
        if isinstance(e, T.Dot) and len(items) == 2 and items[0] == T.Old(x) and _attr_named(items[1], a):
            yield Candidate(RuleId.QS, c, [s_set])
        if isinstance(e, T.Dot) and len(items) == 2 and items[0] == x and _attr_named(items[1], a) \
                and stable is not None:
            yield Candidate(RuleId.QSN, c, [s_set, s_np] + stable)
        # ICX / PCX (with NP to move from x to old x)
        if isinstance(e, T.Integral) and _attr_named(e.attr, a):
            if e.prefix == T.Old(x):
                yield Candidate(RuleId.ICX, T.Concat(T.Singleton(x), T.Integral(c, e.attr)),
                                [s_set, s_ind, NeverAlias(x, T.Integral(c, e.attr), at)])
            elif e.prefix == x and stable is not None:
                yield Candidate(RuleId.NP, T.Integral(T.Old(x), e.attr), [s_np] + stable, kind="np")
        if isinstance(e, T.Dot) and len(items) >= 3 and _attr_named(items[1], a) \
                and all(isinstance(s, T.Attr) for s in items[1:]):
            rest = [s.name for s in items[2:]]
            if items[0] == T.Old(x):
                conds = [s_set, s_ind]
                if any(n in w for n in rest):
                    conds.append(CycleFree(w, c, rest, x, at))
                yield Candidate(RuleId.PCX, T.path_of(c, items[2:]), conds)
            elif items[0] == x and stable is not None:
                yield Candidate(RuleId.NP, T.build_dot([T.Old(x)] + items[1:]), [s_np] + stable, kind="np")
        # frame rules
        if isinstance(e, T.CHAIN_OPS):
            fc = self._frame_conds(r, x, e.prefix, at)
            if fc is not None:
                conds = [s_set, s_ind] + fc
                if e.attr.name in w:
                    conds.append(NeverAlias(x, T.Integral(e.prefix, e.attr), at))
                yield Candidate(RuleId.ICY, e, conds)
        elif _is_root(e) or isinstance(e, T.Dot):
            fc = self._frame_conds(r, x, e, at)
            if fc is not None:
                yield Candidate(RuleId.PCY, e, [s_set, s_ind] + fc)

    def _sub(self, routine: RoutineDef) -> Rewriter:
        if self.depth + 1 > self.max_depth:
            raise NoRuleApplies(T.VOID, None, note="call expansion depth exceeded")
        key = (routine.owner, routine.name)
        if key not in self._callee_facts:
            self._callee_facts[key] = analyze(self.unit, routine) if self.unit else None
        sub = Rewriter(self.unit, routine, self._callee_facts[key], mode=self.mode, trace=self.trace,
                       depth=self.depth + 1, max_depth=self.max_depth)
        sub._callee_facts = self._callee_facts
        return sub

    def _finish_sub(self, sub: Rewriter) -> None:
        self.deferred += sub.deferred
        self.assumed += sub.assumed

    def _qualified_call(self, i: QualifiedCall, e: T.Term, failures) -> T.Term:
        r = self.callee(i)
        if r is None or not r.has_body and r.setter_class.kind == "not-a-setter":
            raise NoRuleApplies(e, i, failures, "unknown or deferred routine")
        x = T.normalize(i.target)
        if not isinstance(x, (T.Var, T.Attr)):
            raise NoRuleApplies(e, i, failures, "call target is not a single entity")
        before = T.Semi((i,), e)
        raw = T.Dot(T.NegVar(x), e)
        moved = T.normalize(raw)
        np_ok, np_sides = self._np_rewrite_ok(r, x, i.label)
        e3 = _drop_back_and_forth(moved, x) if np_ok else moved
        shifted = tuple(T.Dot(T.NegVar(x), l) for l in i.actuals)
        inner_call = UnqualifiedCall(r.name, shifted, i.label)
        a = r.setter_class.attr
        use_contract = r.setter_class.kind != "not-a-setter" and isinstance(e3, T.Attr) and e3.name == a
        if use_contract:
            self.step(RuleId.QC, before, T.Dot(x, T.Semi((inner_call,), raw)))
        else:
            if not r.has_body:
                raise NoRuleApplies(e, i, failures, f"{r.name} has no body")
            self.step(RuleId.QCp, before, T.Dot(x, T.Semi(tuple(r.body), raw)))
        moved = self.norm(raw)
        if e3 != moved:
            self.step(RuleId.NP, moved, e3, np_sides)
        sub = self._sub(r)
        if use_contract:
            k = r.setter_class.position
            self.step(RuleId.US, T.Semi((inner_call,), e3), shifted[k - 1], [(IsSetterFor(r, a), "setter-classification")])
            inner = shifted[k - 1]
        else:
            inner = sub.seq_apply(r.body, e3)
            table = {n: s for n, s in zip(r.formal_names, shifted)}
            table.update({n: T.VOID for n, _ in r.locals})
            substituted = _subst_callee(inner, table)
            if substituted != inner:
                self.step(RuleId.UC, inner, substituted)
            inner = substituted
        self._finish_sub(sub)
        out = self.norm(T.Dot(x, inner))
        if T.contains(out, lambda s: isinstance(s, T.NegVar)) and not T.contains(e, lambda s: isinstance(s, T.NegVar)):
            raise NoRuleApplies(e, i, failures, "back-link not eliminated")
        return out

    def _np_rewrite_ok(self, r: RoutineDef, x: T.Term, at: str):
        if isinstance(x, T.Var):
            return True, []
        if isinstance(x, T.Attr):
            conds = [Nonprodigal(r)] + (self._target_stable(r, x, at) or [])
            ok, sides, _ = self._discharge_all(conds)
            return ok, sides
        return False, []

    def _unqualified_call(self, i: UnqualifiedCall, e: T.Term, failures) -> T.Term:
        r = self._own_routine(i.routine)
        if r is None or not r.has_body:
            raise NoRuleApplies(e, i, failures, "unknown or deferred routine")
        clash = {n for n in r.formal_names + [n for n, _ in r.locals]}
        if T.contains(e, lambda s: isinstance(s, T.Var) and s.name in clash):
            raise NoRuleApplies(e, i, failures, "name clash with callee variables")
        self.step(RuleId.UC, T.Semi((i,), e), T.Semi(tuple(r.body), e))
        sub = self._sub(r)
        inner = sub.seq_apply(r.body, e)
        self._finish_sub(sub)
        table = dict(zip(r.formal_names, i.actuals))
        table.update({n: T.VOID for n, _ in r.locals})
        out = _subst_callee(inner, table)
        if out != inner:
            self.step(RuleId.UC, inner, out)
        return self.norm(out)

    # -- folding ---------------------------------------------------------
    def fold(self, t: T.Term, at: str = "") -> T.Term:
        """Fold ``<<p>> ++ p.a.integral(a)`` pairs when p is not on its own tail."""

        def go(u: T.Term) -> T.Term:
            u = T.map_children(u, go)
            if not isinstance(u, T.Concat):
                return u
            items = T.concat_items(u)
            k = 0
            while k < len(items) - 1:
                hit = T.fold_pair(items[k], items[k + 1])
                if hit:
                    rule, folded = hit
                    head = items[k].item
                    cond = NeverAlias(head, T.Integral(items[k + 1].prefix, folded.attr), at)
                    ok, sides, _ = self._discharge_all([cond])
                    if ok:
                        before = T.build_concat(items[k:k + 2])
                        items[k:k + 2] = [folded]
                        self.step(RuleId.SIE if rule == "SIE" else RuleId.NIE, before, folded, sides)
                        k = max(k - 1, 0)
                        continue
                k += 1
            return T.build_concat(items)

        return go(t)


def _attr_named(t: T.Term, a: str) -> bool:
    return isinstance(t, T.Attr) and t.name == a


def _drop_back_and_forth(t: T.Term, x: T.Term) -> T.Term:
    """Rewrite ``x'.x`` to Current (the client's x still denotes the target)."""
    items = T.spine(t)
    xs = T.spine(x)
    if items and items[0] == T.NegVar(x) and items[1:1 + len(xs)] == xs:
        return T.build_dot(items[1 + len(xs):])
    return T.map_children(t, lambda u: _drop_back_and_forth(u, x)) if not isinstance(t, T.Dot) else t


def _subst_callee(t: T.Term, table: dict[str, T.Term]) -> T.Term:
    """Substitute callee variables, leaving client names reached through a back-link alone."""

    def go(u: T.Term) -> T.Term:
        match u:
            case T.Var(n) if n in table:
                return table[n]
            case T.Dot(T.NegVar(), _):
                return u
            case T.Ghost():
                return u
        return T.map_children(u, go)

    return go(t)


# ----------------------------------------------------------------------
# side-condition helpers shared with the differential tester


def trivially_true(c: SideCondition) -> bool:
    match c.kind:
        case "NeverAlias":
            e, f = (T.normalize(a) for a in c.args)
            return any(isinstance(s, (T.VoidK, T.EmptySeq)) for s in (e, f))
        case "CycleFree":
            attrs, _, p, _ = c.args
            return not any(n in attrs for n in p)
        case "AcyclicAfter":
            return isinstance(T.normalize(c.args[0]), T.VoidK)
    return False


def syntactically_false(c: SideCondition) -> bool:
    match c.kind:
        case "NeverAlias":
            e, f = (T.normalize(a) for a in c.args)
            heads = {e}
            if isinstance(e, T.Integral):
                heads.add(T.normalize(e.prefix) if e.prefix is not None else T.CURRENT)
            targets = {f}
            if isinstance(f, T.Integral):
                targets.add(T.normalize(f.prefix) if f.prefix is not None else T.CURRENT)
            return bool(heads & targets)
        case "CycleFree":
            attrs, e, p, anchor = c.args
            for j, n in enumerate(p):
                if n in attrs:
                    q = T.normalize(T.path_of(e, [T.Attr(m) for m in p[:j]]))
                    if T.pretty(q) == T.pretty(T.normalize(anchor)):
                        return True
    return False


def alias_predicate(c: SideCondition):
    match c.kind:
        case "NeverAlias":
            e, f = c.args
            return lambda rel: rel.never(rel.atoms(e), rel.atoms(f))
        case "CycleFree":
            attrs, e, p, anchor = c.args
            return lambda rel: rel.cycle_free("", e, list(p), anchor=anchor, attrs=set(attrs))
        case "AcyclicAfter":
            p, a = c.args
            return lambda rel: rel.acyclic_term(p, a)
    return None


# ----------------------------------------------------------------------
# functional API


def apply(i: Instr, e: T.Term, facts: Optional[FactBase] = None, *, unit: Optional[SourceUnit] = None,
          routine: Optional[RoutineDef] = None, mode: str = "strict") -> tuple[T.Term, ProofTrace]:
    rw = Rewriter(unit, routine, facts, mode=mode)
    seg = rw.trace.open("apply", T.Semi((i,), e))
    out = rw.apply(i, e)
    rw.trace.close(seg, out)
    return out, rw.trace


def seq_apply(instrs, e: T.Term, facts: Optional[FactBase] = None, *, unit: Optional[SourceUnit] = None,
              routine: Optional[RoutineDef] = None, mode: str = "strict") -> tuple[T.Term, ProofTrace]:
    rw = Rewriter(unit, routine, facts, mode=mode)
    instrs = tuple(instrs)
    seg = rw.trace.open("seq", T.Semi(instrs, e) if instrs else e)
    out = rw.seq_apply(instrs, e)
    rw.trace.close(seg, out)
    return out, rw.trace


def apply_call_qualified(target: T.Term, routine: RoutineDef, actuals, e: T.Term,
                         facts: Optional[FactBase] = None, *, unit: SourceUnit,
                         caller: RoutineDef) -> T.Term:
    call = QualifiedCall(target, routine.name, tuple(actuals), "call")
    return apply(call, e, facts, unit=unit, routine=caller)[0]


def wp(i, q: T.Term, facts: Optional[FactBase] = None, **kw) -> T.Term:
    """Weakest precondition: the boolean case of ``i ; q``."""
    instrs = list(i) if isinstance(i, (list, tuple)) else [i]
    return seq_apply(instrs, q, facts, **kw)[0]


# ----------------------------------------------------------------------
# loops


@dataclass
class InvariantResult:
    status: str  # PROVED | FAILED | RESIDUAL
    entry_value: Optional[T.Term] = None
    preserved_value: Optional[T.Term] = None
    reason: str = ""
    obligations: list[str] = field(default_factory=list)


def implied(goal: T.Term, facts_terms) -> bool:
    g = T.normalize(goal)
    if g == T.TRUE:
        return True
    known = {T.normalize(f) for f in facts_terms}
    if g in known:
        return True
    if isinstance(g, T.And):
        return implied(g.left, facts_terms) and implied(g.right, facts_terms)
    return False


def check_invariant(loop: Loop, inv: T.Term, facts: Optional[FactBase], *, unit: SourceUnit,
                    routine: RoutineDef, prefix=(), rewriter: Optional[Rewriter] = None,
                    assumptions=()) -> InvariantResult:
    """Initialization and preservation of one (old-free) invariant."""
    rw = rewriter or Rewriter(unit, routine, facts)
    tr = rw.trace
    init = tuple(prefix) + tuple(loop.init)
    boolean = T.is_boolean(T.normalize(inv))
    res = InvariantResult("PROVED")
    # initialization
    seg = tr.open("init", T.Semi(init, inv) if init else inv)
    try:
        i0 = rw.seq_apply(init, inv)
    except NoRuleApplies as exc:
        tr.close(seg, None)
        return InvariantResult("FAILED", reason=f"stuck at initialization: {exc}")
    tr.close(seg, i0)
    res.entry_value = i0
    if boolean and not implied(i0, assumptions):
        res.status = "RESIDUAL"
        res.obligations.append(f"precondition implies {T.pretty(i0)}")
    # preservation
    seg = tr.open("preserve", T.Semi(tuple(loop.body), inv) if loop.body else inv)
    try:
        b = rw.seq_apply(loop.body, inv)
    except NoRuleApplies as exc:
        tr.close(seg, None)
        return InvariantResult("FAILED", i0, reason=f"stuck at preservation: {exc}")
    head = loop.body[0].label if loop.body else loop.label
    b = rw.norm(rw.fold(b, head))
    tr.close(seg, b)
    res.preserved_value = b
    target = T.normalize(inv)
    if b != target:
        if boolean:
            res.status = "RESIDUAL"
            res.obligations.append(f"invariant and not exit imply {T.pretty(b)}")
        else:
            return InvariantResult("FAILED", i0, b,
                                   reason=f"preservation: {T.pretty(b)} /= {T.pretty(target)}")
    return res


def check_variant(loop: Loop, variant: Optional[T.Term], facts: Optional[FactBase]) -> tuple[str, str]:
    """('PROVED' | 'FAILED' | 'RESIDUAL', explanation) for a ``p.depth(a)`` variant."""
    if variant is None:
        return "PROVED", "no variant declared"
    if not loop.body:
        return "FAILED", "loop body is empty: the variant cannot decrease"
    v = T.normalize(variant)
    if not (isinstance(v, T.Depth) and isinstance(v.prefix, (T.Var, T.Attr))):
        return "RESIDUAL", f"variant {T.pretty(variant)} is not of the form p.depth(a)"
    p, a = v.prefix, v.attr
    ex = T.normalize(loop.exit)
    if ex not in (T.Eq(p, T.VOID), T.Eq(T.VOID, p)):
        return "RESIDUAL", f"exit condition is not {T.pretty(p)} = Void"
    step = [i for i in walk(loop.body) if isinstance(i, Assign) and i.target == p]
    if len(step) != 1 or T.normalize(step[0].source) != T.Dot(p, a):
        return "RESIDUAL", f"body does not advance {T.pretty(p)} := {T.pretty(p)}.{a.name} exactly once"
    head = loop.label + "@head"
    if facts is None or not facts.acyclic(p, a.name, head):
        return "RESIDUAL", f"{T.pretty(p)}.acyclic({a.name}) not established at the loop head"
    for i in walk(loop.body):
        if isinstance(i, Loop):
            return "RESIDUAL", "nested loop in body"
        if isinstance(i, (QualifiedCall, UnqualifiedCall)):
            tgt = i.target if isinstance(i, QualifiedCall) else T.CURRENT
            if facts.may_alias(tgt, T.Integral(p, a), i.label):
                return "RESIDUAL", f"call at {i.label} may modify the chain of {T.pretty(p)}"
        if isinstance(i, Assign) and isinstance(i.target, T.Attr) and i.target.name == a.name:
            if facts.may_alias(T.CURRENT, T.Integral(p, a), i.label):
                return "RESIDUAL", f"assignment at {i.label} may modify the chain of {T.pretty(p)}"
    return "PROVED", f"{T.pretty(v)} decreases: acyclic chain advanced once per iteration"
