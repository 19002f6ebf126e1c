"""Concrete object heaps, term evaluation and an interpreter for the toy language."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from . import terms as T
from .program import (
    BOOLEAN,
    INTEGER,
    Assign,
    Check,
    Cut,
    Instr,
    Loop,
    QualifiedCall,
    RoutineDef,
    SourceUnit,
    UnqualifiedCall,
)

ObjId = str
VOID = None
Value = Union[ObjId, None, int, bool, tuple]


class OracleError(Exception):
    """Evaluation or execution cannot proceed (void call, missing binding...)."""


class AssertionViolation(OracleError):
    def __init__(self, kind: str, detail: str, iteration: Optional[int] = None):
        where = f" (iteration {iteration})" if iteration is not None else ""
        super().__init__(f"{kind} violated{where}: {detail}")
        self.kind, self.detail, self.iteration = kind, detail, iteration


class LoopCapExceeded(OracleError):
    pass


@dataclass
class Obj:
    cls: str
    refs: dict[str, Optional[ObjId]] = field(default_factory=dict)
    ints: dict[str, int] = field(default_factory=dict)

    def copy(self) -> Obj:
        return Obj(self.cls, dict(self.refs), dict(self.ints))


@dataclass
class Heap:
    objects: dict[ObjId, Obj] = field(default_factory=dict)

    def copy(self) -> Heap:
        return Heap({k: o.copy() for k, o in self.objects.items()})

    def get(self, oid: ObjId, attr: str) -> Value:
        o = self.objects[oid]
        if attr in o.refs:
            return o.refs[attr]
        if attr in o.ints:
            return o.ints[attr]
        raise OracleError(f"object {oid} of class {o.cls} has no field {attr!r}")

    def set(self, oid: ObjId, attr: str, value: Value) -> None:
        o = self.objects[oid]
        if attr in o.ints:
            o.ints[attr] = value
        else:
            if value is not None and value not in self.objects:
                raise OracleError(f"dangling reference {value!r}")
            o.refs[attr] = value


@dataclass
class Snapshot:
    heap: Heap
    vars: dict[str, Value]


@dataclass
class Env:
    current: ObjId
    vars: dict[str, Value] = field(default_factory=dict)
    client: Optional[Env] = None
    entry: Optional[Snapshot] = None

    def copy(self) -> Env:
        return Env(self.current, dict(self.vars), self.client, self.entry)


def snapshot(h: Heap, env: Env) -> Env:
    """Return *env* with its entry snapshot set to the current state."""
    return Env(env.current, dict(env.vars), env.client, Snapshot(h.copy(), dict(env.vars)))


# ----------------------------------------------------------------------
# evaluation


def eval_path(attrs: list[str], h: Heap, env: Env) -> ObjId:
    """Follow *attrs* from the current object, stopping at a void link."""
    o = env.current
    for a in attrs:
        nxt = h.get(o, a)
        if nxt is None:
            return o
        o = nxt
    return o


def chain(head: Optional[ObjId], attr: str, h: Heap) -> tuple[tuple[ObjId, ...], bool]:
    """Objects head, head.a, ... up to a void link or a repeat; flag is True if void was reached."""
    if head is None:
        return (), True
    seen: list[ObjId] = []
    o: Optional[ObjId] = head
    while o is not None and o not in seen:
        seen.append(o)
        o = h.get(o, attr)
    return tuple(seen), o is None


def _dot_env(o: ObjId, env: Env) -> Env:
    return Env(o, {}, env, env.entry)


def eval_term(t: T.Term, h: Heap, env: Env, unit: Optional[SourceUnit] = None) -> Value:
    """Value of *t* in state (h, env). A dot on a void target yields void."""
    match t:
        case T.CurrentK():
            return env.current
        case T.VoidK():
            return None
        case T.IntConst(v) | T.BoolConst(v):
            return v
        case T.EmptySeq():
            return ()
        case T.Var(n):
            if n not in env.vars:
                raise OracleError(f"unbound variable {n!r}")
            return env.vars[n]
        case T.Attr(n, _):
            if env.current is None:
                return None
            return h.get(env.current, n)
        case T.NegVar(_):
            if env.client is None:
                raise OracleError("negative variable outside of a call context")
            return env.client.current
        case T.Dot():
            items = T.spine(t)
            return _eval_spine(items, h, env, unit)
        case T.Old(inner) | T.Ghost(_, inner):
            if env.entry is None:
                raise OracleError("old expression without an entry snapshot")
            old_env = Env(env.current, env.entry.vars, env.client, env.entry)
            return eval_term(inner, env.entry.heap, old_env, unit)
        case T.Singleton(item):
            v = eval_term(item, h, env, unit)
            return () if v is None else (v,)
        case T.Concat(l, r):
            return _seq(eval_term(l, h, env, unit)) + _seq(eval_term(r, h, env, unit))
        case T.Rev(s):
            return tuple(reversed(_seq(eval_term(s, h, env, unit))))
        case T.Integral(p, a) | T.Depth(p, a) | T.Acyclic(p, a):
            head = env.current if p is None else eval_term(p, h, env, unit)
            objs, reached_void = chain(head, a.name, h)
            if isinstance(t, T.Integral):
                return objs
            if isinstance(t, T.Depth):
                return len(objs) - 1
            return reached_void
        case T.Eq(l, r):
            return eval_term(l, h, env, unit) == eval_term(r, h, env, unit)
        case T.Neq(l, r):
            return eval_term(l, h, env, unit) != eval_term(r, h, env, unit)
        case T.Not(o):
            return not eval_term(o, h, env, unit)
        case T.And(l, r):
            return bool(eval_term(l, h, env, unit)) and bool(eval_term(r, h, env, unit))
        case T.Or(l, r):
            return bool(eval_term(l, h, env, unit)) or bool(eval_term(r, h, env, unit))
        case T.IntPlus(l, r) | T.IntMinus(l, r):
            lv, rv = eval_term(l, h, env, unit), eval_term(r, h, env, unit)
            if lv is None or rv is None:  # strict void
                return None
            return lv + rv if isinstance(t, T.IntPlus) else lv - rv
        case T.Semi(instrs, body):
            h2, env2 = exec_instrs(list(instrs), h, env, unit)
            return eval_term(body, h2, env2, unit)
    raise OracleError(f"cannot evaluate {t!r}")


def _eval_spine(items: list[T.Term], h: Heap, env: Env, unit) -> Value:
    head, rest = items[0], items[1:]
    if not rest:
        return eval_term(head, h, env, unit)
    if isinstance(head, T.CurrentK):
        return _eval_spine(rest, h, env, unit)
    if isinstance(head, T.NegVar):
        if env.client is None:
            raise OracleError("negative variable outside of a call context")
        return _eval_spine(rest, h, env.client, unit)
    o = eval_term(head, h, env, unit)
    if o is None:
        return None
    if not isinstance(o, str):
        raise OracleError(f"cannot apply '.' to {o!r}")
    return _eval_spine(rest, h, _dot_env(o, env), unit)


def _seq(v: Value) -> tuple:
    if not isinstance(v, tuple):
        raise OracleError(f"expected a sequence, got {v!r}")
    return v


# ----------------------------------------------------------------------
# execution


@dataclass
class Hooks:
    """Observation points: before every instruction and at every loop-head test."""

    on_step: Optional[Callable[[Instr, Heap, Env], None]] = None
    on_iter: Optional[Callable[[Loop, int, Heap, Env], None]] = None
    loop_cap: Optional[int] = None


def default_value(ty: str) -> Value:
    return 0 if ty == INTEGER else False if ty == BOOLEAN else None


def loop_cap_for(h: Heap) -> int:
    return 10 * len(h.objects) + 100


def exec_instr(i: Instr, h: Heap, env: Env, unit: Optional[SourceUnit] = None,
               hooks: Optional[Hooks] = None) -> tuple[Heap, Env]:
    """Execute one instruction, returning a fresh (heap, env); inputs are untouched."""
    return exec_instrs([i], h, env, unit, hooks)


def exec_instrs(instrs: list[Instr], h: Heap, env: Env, unit: Optional[SourceUnit] = None,
                hooks: Optional[Hooks] = None) -> tuple[Heap, Env]:
    h2, env2 = h.copy(), env.copy()
    _run(instrs, h2, env2, unit, hooks or Hooks(), depth=0)
    return h2, env2


def _run(instrs, h: Heap, env: Env, unit, hooks: Hooks, depth: int) -> None:
    for i in instrs:
        if hooks.on_step:
            hooks.on_step(i, h, env)
        _step(i, h, env, unit, hooks, depth)


def _routine(unit: Optional[SourceUnit], cls: str, name: str) -> RoutineDef:
    c = unit.cls(cls) if unit else None
    r = c.routine(name) if c else None
    if r is None:
        raise OracleError(f"no routine {name!r} in class {cls}")
    return r


def _call(r: RoutineDef, target: ObjId, args: list[Value], h: Heap, caller: Env,
          client: Optional[Env], unit, hooks: Hooks, depth: int) -> None:
    if depth > 200:
        raise OracleError("call depth exceeded")
    if not r.has_body:
        raise OracleError(f"routine {r.name} has no body")
    frame_vars = {n: v for (n, _), v in zip(r.formals, args)}
    frame_vars.update({n: default_value(ty) for n, ty in r.locals})
    frame = Env(target, frame_vars, client, caller.entry)
    _run(r.body, h, frame, unit, Hooks(loop_cap=hooks.loop_cap), depth + 1)


def _step(i: Instr, h: Heap, env: Env, unit, hooks: Hooks, depth: int) -> None:
    match i:
        case Assign(T.Var(n), src):
            env.vars[n] = eval_term(src, h, env, unit)
        case Assign(T.Attr(n, _), src):
            h.set(env.current, n, eval_term(src, h, env, unit))
        case Assign():
            raise OracleError("remote field writes are not executable")
        case QualifiedCall(target, name, actuals):
            o = eval_term(target, h, env, unit)
            if o is None:
                raise OracleError(f"call {name} on a void target ({T.pretty(target)})")
            args = [eval_term(a, h, env, unit) for a in actuals]
            caller = env.copy()
            r = _routine(unit, h.objects[o].cls, name)
            _call(r, o, args, h, caller, caller, unit, hooks, depth)
        case UnqualifiedCall(name, actuals):
            args = [eval_term(a, h, env, unit) for a in actuals]
            r = _routine(unit, h.objects[env.current].cls, name)
            _call(r, env.current, args, h, env, env.client, unit, hooks, depth)
        case Loop():
            _run(i.init, h, env, unit, hooks, depth)
            cap = hooks.loop_cap or loop_cap_for(h)
            k = 0
            while True:
                if hooks.on_iter:
                    hooks.on_iter(i, k, h, env)
                if eval_term(i.exit, h, env, unit):
                    return
                if k >= cap:
                    raise LoopCapExceeded(f"loop exceeded {cap} iterations (suspected nontermination)")
                _run(i.body, h, env, unit, hooks, depth)
                k += 1
        case Cut(e, f):
            ve, vf = eval_term(e, h, env, unit), eval_term(f, h, env, unit)
            if ve is not None and ve == vf:
                raise AssertionViolation("cut", f"{T.pretty(e)} and {T.pretty(f)} are aliased")
        case Check(a):
            if not eval_term(a, h, env, unit):
                raise AssertionViolation("check", T.pretty(a))
        case _:
            raise OracleError(f"unknown instruction {i!r}")


# ----------------------------------------------------------------------
# heap files

_OBJ_RE = re.compile(r"object\s+(\w+)\s*:\s*(\w+)\s*\{(.*)\}\s*$")


def parse_heap(text: str) -> tuple[Heap, Env]:
    h = Heap()
    current: Optional[str] = None
    vars_: dict[str, Value] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if m := _OBJ_RE.match(line):
            oid, cls, body = m.groups()
            refs_part, _, ints_part = body.partition(";")
            o = Obj(cls)
            for item in filter(None, (s.strip() for s in refs_part.split(","))):
                a, arrow, tgt = item.partition("->")
                if not arrow:
                    raise ValueError(f"line {n}: expected 'attr -> ID' in {item!r}")
                tgt = tgt.strip()
                o.refs[a.strip()] = None if tgt == "Void" else tgt
            for item in filter(None, (s.strip() for s in ints_part.split(","))):
                a, eq, v = item.partition("=")
                if not eq:
                    raise ValueError(f"line {n}: expected 'attr = int' in {item!r}")
                o.ints[a.strip()] = int(v)
            h.objects[oid] = o
        elif m := re.fullmatch(r"current\s*=\s*(\w+)", line):
            current = m.group(1)
        elif m := re.fullmatch(r"var\s+(\w+)\s*=\s*(-?\w+)", line):
            v = m.group(2)
            vars_[m.group(1)] = None if v == "Void" else int(v) if re.fullmatch(r"-?\d+", v) else v
        else:
            raise ValueError(f"line {n}: cannot parse {raw!r}")
    for oid, o in h.objects.items():
        for a, tgt in o.refs.items():
            if tgt is not None and tgt not in h.objects:
                raise ValueError(f"object {oid}: {a} -> unknown object {tgt}")
    if current is None or current not in h.objects:
        raise ValueError("heap file must set 'current' to an existing object")
    return h, Env(current, vars_)


def format_heap(h: Heap, env: Env) -> str:
    lines = []
    for oid, o in h.objects.items():
        refs = ", ".join(f"{a} -> {'Void' if v is None else v}" for a, v in o.refs.items())
        ints = ", ".join(f"{a} = {v}" for a, v in o.ints.items())
        lines.append(f"object {oid} : {o.cls} {{ {refs} ; {ints} }}".replace("  ", " "))
    lines.append(f"current = {env.current}")
    for n, v in env.vars.items():
        lines.append(f"var {n} = {'Void' if v is None else v}")
    return "\n".join(lines) + "\n"


def read_heap(path) -> tuple[Heap, Env]:
    with open(path, encoding="utf-8") as fh:
        return parse_heap(fh.read())


# ----------------------------------------------------------------------
# random heaps


@dataclass(frozen=True)
class ClassShape:
    refs: tuple[tuple[str, str], ...]  # (attr, target class)
    ints: tuple[str, ...] = ()


def random_heap(seed, max_objects: int, class_shapes: dict[str, ClassShape],
                var_classes: Optional[dict[str, str]] = None,
                cyclic_bias: float = 0.5) -> tuple[Heap, Env]:
    """Deterministic random heap; roughly half the samples only link forward (acyclic)."""
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    n = rng.randint(1, max(1, max_objects))
    names = sorted(class_shapes)
    ids = [f"O{k}" for k in range(n)]
    h = Heap({oid: Obj(rng.choice(names)) for oid in ids})
    forward_only = rng.random() >= cyclic_bias
    for k, oid in enumerate(ids):
        o = h.objects[oid]
        shape = class_shapes[o.cls]
        for a, tcls in shape.refs:
            pool = [x for j, x in enumerate(ids) if h.objects[x].cls == tcls and (not forward_only or j > k)]
            # a lone object keeps its links void
            o.refs[a] = rng.choice(pool) if pool and n > 1 and rng.random() < 0.8 else None
        for a in shape.ints:
            o.ints[a] = k
    env = Env(rng.choice(ids))
    for v, cls in (var_classes or {}).items():
        pool = [x for x in ids if h.objects[x].cls == cls]
        env.vars[v] = rng.choice(pool) if pool and rng.random() < 0.85 else None
    return h, env


def chain_heap(n: int, cls: str = "LINKABLE", attr: str = "right",
               owner_cls: str = "LIST", head_attr: str = "first") -> tuple[Heap, Env]:
    """An owner object whose *head_attr* starts an acyclic chain of *n* cells c1..cn."""
    h = Heap({"L": Obj(owner_cls, {head_attr: "c1" if n else None})})
    for k in range(1, n + 1):
        h.objects[f"c{k}"] = Obj(cls, {attr: f"c{k + 1}" if k < n else None}, {"item": k})
    return h, Env("L")


# ----------------------------------------------------------------------
# variant support


def depth_decrease_probe(h: Heap, env: Env, p: T.Term, a: T.Attr) -> str:
    """Check that ``p := p.a`` lowers ``p.depth(a)``; 'vacuous' when p is void."""
    if not isinstance(p, (T.Var, T.Attr)):
        raise ValueError("probe target must be a variable or attribute")
    if eval_term(p, h, env) is None:
        return "vacuous"
    before = eval_term(T.Depth(p, a), h, env)
    h2, env2 = exec_instr(Assign(p, T.Dot(p, a)), h, env)
    after = eval_term(T.Depth(p, a), h2, env2)
    return "pass" if after < before else "fail"
