"""Orchestration: proofs, oracle runs and alias queries for one source unit."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Optional

from . import oracle as O
from . import terms as T
from .alias import FactBase, analyze
from .lang import LangError, parse_term
from .program import Loop, RoutineDef, SourceUnit
from .rewrite import (
    NoRuleApplies,
    ProofTrace,
    Rewriter,
    SideCondition,
    implied,
    check_invariant,
    check_variant,
    freeze_old,
)


class ProofError(LangError):
    """The routine cannot be submitted for proof (e.g. a loop without invariant)."""


@dataclass
class Verdict:
    routine: str
    status: str  # PROVED | FAILED | RESIDUAL
    obligations: list[str] = field(default_factory=list)
    trace: ProofTrace = field(default_factory=ProofTrace)
    assumptions_used: list[SideCondition] = field(default_factory=list)
    reason: str = ""

    @property
    def line(self) -> str:
        match self.status:
            case "PROVED":
                return "PROVED"
            case "FAILED":
                return f"FAILED {self.reason}"
        return f"RESIDUAL {len(self.obligations)} obligations"

    @property
    def exit_code(self) -> int:
        return {"PROVED": 0, "FAILED": 1, "RESIDUAL": 2}[self.status]


def _routine(unit: SourceUnit, name: str) -> RoutineDef:
    if "." in name:
        cls, r = name.split(".", 1)
        c = unit.cls(cls)
        found = c.routine(r) if c else None
        if found is None:
            raise KeyError(f"no routine {name!r}")
        return found
    return unit.find_routine(name)


def _equation_forms(eq: T.Eq) -> set[T.Term]:
    """The equation, its mirror, and both with rev applied to each side."""
    l, r = eq.left, eq.right
    forms = {T.Eq(l, r), T.Eq(r, l)}
    if T.is_sequence(l) or T.is_sequence(r):
        rl, rr = T.normalize(T.Rev(l)), T.normalize(T.Rev(r))
        forms |= {T.Eq(rl, rr), T.Eq(rr, rl)}
    return {T.normalize(f) for f in forms}


def prove(unit: SourceUnit, routine_name: str, options: Optional[dict] = None) -> Verdict:
    """Check a routine's loop (init, preservation, exit-implies-post, variant) symbolically."""
    options = options or {}
    r = _routine(unit, routine_name)
    facts = analyze(unit, r)
    rw = Rewriter(unit, r, facts, max_depth=options.get("max_depth", 8))
    v = Verdict(r.name, "PROVED", trace=rw.trace)
    counter = itertools.count(1)
    posts = [freeze_old(q, counter)[0] for q in r.postcondition]
    ghosts: dict[T.Term, T.Ghost] = {}
    for q in posts:
        for s in T.subterms(q):
            if isinstance(s, T.Ghost):
                ghosts.setdefault(T.normalize(s.frozen), s)
    pre = [T.normalize(p) for p in r.precondition]
    loops = [k for k, i in enumerate(r.body) if isinstance(i, Loop)]

    def finish(status: str, reason: str = "") -> Verdict:
        v.assumptions_used = list(dict.fromkeys(rw.assumed))
        if status != "FAILED" and v.assumptions_used:
            v.obligations.append("proof relies on cut/check assumptions")
        if status == "PROVED" and v.obligations:
            status = "RESIDUAL"
        if status == "RESIDUAL" and not v.obligations:
            status = "PROVED"
        v.status, v.reason = status, reason
        v.trace.verdict = v.line
        return v

    try:
        if len(loops) > 1:
            v.obligations.append("more than one top-level loop")
            return finish("RESIDUAL")
        if not loops:
            for k, q in enumerate(posts):
                seg = rw.trace.open(f"post:{k}", T.Semi(tuple(r.body), q) if r.body else q)
                out = rw.seq_apply(r.body, q)
                rw.trace.close(seg, out)
                if not implied(out, pre):
                    v.obligations.append(f"precondition implies {T.pretty(out)}")
            return finish("RESIDUAL")
        idx = loops[0]
        loop: Loop = r.body[idx]
        prefix, suffix = r.body[:idx], r.body[idx + 1:]
        if not loop.invariants:
            raise ProofError(f"loop {loop.label} in {r.name} has no invariant")
        exit_facts: list[T.Term] = [T.normalize(loop.exit)]
        equations: list[T.Term] = []
        for inv in loop.invariants:
            inv_f = freeze_old(inv, counter)[0]
            res = check_invariant(loop, inv_f, facts, unit=unit, routine=r, prefix=prefix,
                                  rewriter=rw, assumptions=pre)
            if res.status == "FAILED":
                return finish("FAILED", res.reason)
            v.obligations += res.obligations
            at_exit = T.normalize(_exit_substitute(inv_f, loop.exit))
            if T.is_boolean(T.normalize(inv_f)):
                exit_facts.append(at_exit)
            else:
                entry = T.normalize(res.entry_value)
                g = ghosts.get(entry) or T.Ghost(next(counter), entry)
                equations.append(T.normalize(T.Eq(at_exit, g)))
        exit_facts += equations
        for k, q in enumerate(posts):
            seg = rw.trace.open(f"post:{k}", T.Semi(tuple(suffix), q) if suffix else q)
            out = rw.seq_apply(suffix, q)
            rw.trace.close(seg, out)
            if not _discharged(out, exit_facts, equations):
                v.obligations.append(f"exit state implies {T.pretty(out)}")
        status, why = check_variant(loop, loop.variant, facts)
        if status == "FAILED":
            return finish("FAILED", f"variant: {why}")
        if status == "RESIDUAL":
            v.obligations.append(f"variant: {why}")
        return finish("RESIDUAL")
    except NoRuleApplies as exc:
        return finish("FAILED", f"stuck: {exc}")


def _exit_substitute(inv: T.Term, exit_: T.Term) -> T.Term:
    ex = T.normalize(exit_)
    match ex:
        case T.Eq(v, T.VoidK()) | T.Eq(T.VoidK(), v) if isinstance(v, (T.Var, T.Attr)):
            return _replace(inv, v, T.VOID)
    return inv


def _replace(t: T.Term, old: T.Term, new: T.Term) -> T.Term:
    if t == old:
        return new
    return T.map_children(t, lambda u: _replace(u, old, new))


def _discharged(goal: T.Term, known: list[T.Term], equations: list[T.Term]) -> bool:
    if implied(goal, known):
        return True
    g = T.normalize(goal)
    return isinstance(g, T.Eq) and any(isinstance(e, T.Eq) and g in _equation_forms(e) for e in equations)


# ----------------------------------------------------------------------
# runtime contract checking


@dataclass
class Violation:
    kind: str  # precondition | invariant | variant | postcondition | check | cut | loop-cap | error
    detail: str
    iteration: Optional[int] = None

    def __str__(self) -> str:
        it = f" (iteration {self.iteration})" if self.iteration is not None else ""
        return f"{self.kind} violated: {self.detail}{it}"


@dataclass
class RunReport:
    heap: O.Heap
    env: O.Env
    violations: list[Violation] = field(default_factory=list)
    invariant_values: list[list] = field(default_factory=list)  # per iteration, per clause
    variant_values: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def run(unit: SourceUnit, routine_name: str, heap: O.Heap, env: O.Env) -> RunReport:
    """Execute a routine on a heap, checking its contracts at the prescribed points."""
    r = _routine(unit, routine_name)
    frame = O.Env(env.current, {n: env.vars.get(n, O.default_value(ty)) for n, ty in r.formals})
    frame.vars.update({n: O.default_value(ty) for n, ty in r.locals})
    frame = O.snapshot(heap, frame)
    report = RunReport(heap, frame)
    for p in r.precondition:
        if not O.eval_term(p, heap, frame, unit):
            report.violations.append(Violation("precondition", T.pretty(p)))
    if report.violations:
        return report
    state = {"prev_variant": None}

    def on_iter(loop: Loop, k: int, h: O.Heap, e: O.Env) -> None:
        vals = [O.eval_term(inv, h, e, unit) for inv in loop.invariants]
        report.invariant_values.append(vals)
        for inv, val in zip(loop.invariants, vals):
            if T.is_boolean(T.normalize(inv)) and not val:
                raise O.AssertionViolation("invariant", T.pretty(inv), k)
        if k and any(val != first for val, first in zip(vals, report.invariant_values[0])
                     if not isinstance(val, bool)):
            raise O.AssertionViolation("invariant", "value changed by the loop body", k)
        if loop.variant is not None:
            var = O.eval_term(loop.variant, h, e, unit)
            report.variant_values.append(var)
            if not O.eval_term(loop.exit, h, e, unit):
                prev = state["prev_variant"]
                if var < 0 or (prev is not None and var >= prev):
                    raise O.AssertionViolation("variant", f"{T.pretty(loop.variant)} = {var}", k)
            state["prev_variant"] = var

    try:
        h2, e2 = O.exec_instrs(r.body, heap, frame, unit, O.Hooks(on_iter=on_iter))
    except O.AssertionViolation as exc:
        report.violations.append(Violation(exc.kind, exc.detail, exc.iteration))
        return report
    except O.LoopCapExceeded as exc:
        report.violations.append(Violation("loop-cap", str(exc)))
        return report
    except O.OracleError as exc:
        report.violations.append(Violation("error", str(exc)))
        return report
    report.heap, report.env = h2, e2
    for q in r.postcondition:
        if not O.eval_term(q, h2, e2, unit):
            report.violations.append(Violation("postcondition", T.pretty(q)))
    return report


# ----------------------------------------------------------------------
# alias queries

_ACYC_Q = re.compile(r"^\s*acyclic\s*\(\s*(.+?)\s*,\s*(\w+)\s*\)\s*$")


def alias_query(unit: SourceUnit, routine_name: str, label: str, query: str,
                facts: Optional[FactBase] = None) -> str:
    """Answer ``e ~ f`` with MAY or NEVER, and ``acyclic(p, a)`` with YES or UNKNOWN."""
    r = _routine(unit, routine_name)
    facts = facts or analyze(unit, r)
    at = label or None
    m = _ACYC_Q.match(query)
    if m:
        p = parse_term(m.group(1), unit, r.owner, r.name)
        return "YES" if facts.acyclic(p, m.group(2), at) else "UNKNOWN"
    if "~" not in query:
        raise LangError(f"query must be 'e ~ f' or 'acyclic(p, a)': {query!r}")
    lhs, rhs = query.split("~", 1)
    e = parse_term(lhs.strip(), unit, r.owner, r.name)
    f = parse_term(rhs.strip(), unit, r.owner, r.name)
    return "MAY" if facts.may_alias(e, f, at) else "NEVER"
