"""Symbolic terms over object structures.

Terms are immutable dataclass trees. Paths are built from the binary
``Dot`` node; sequences from ``Singleton``/``Concat``/``Rev`` and the
integral family (``Integral``, ``Depth``, ``Acyclic``).

The canonical form produced by :func:`normalize` has:

* right-spined ``Dot`` chains with dots pushed inside compound operands,
* right-nested ``Concat`` with ``Rev`` pushed onto atoms,
* ``Current`` and negative-variable round trips eliminated.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Callable, Iterable, Optional


class Term:
    """Base class of all term nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return pretty(self)


@dataclass(frozen=True)
class CurrentK(Term):
    pass


@dataclass(frozen=True)
class VoidK(Term):
    pass


@dataclass(frozen=True)
class EmptySeq(Term):
    pass


@dataclass(frozen=True)
class IntConst(Term):
    value: int


@dataclass(frozen=True)
class BoolConst(Term):
    value: bool


@dataclass(frozen=True)
class Var(Term):
    """Local variable or formal argument."""

    name: str


@dataclass(frozen=True)
class Attr(Term):
    """Attribute of the current object, qualified by its class."""

    name: str
    cls: str = ""

    @property
    def qualified(self) -> str:
        return f"{self.cls}_{self.name}" if self.cls else self.name


@dataclass(frozen=True)
class NegVar(Term):
    """Back-link ``x'`` to the client during a call of target ``x``."""

    target: Term


@dataclass(frozen=True)
class Dot(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Old(Term):
    inner: Term


@dataclass(frozen=True)
class Ghost(Term):
    """Entry-snapshot constant standing for a frozen ``old`` expression."""

    id: int
    frozen: Term


@dataclass(frozen=True)
class Singleton(Term):
    item: Term


@dataclass(frozen=True)
class Concat(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Rev(Term):
    seq: Term


@dataclass(frozen=True)
class Integral(Term):
    prefix: Optional[Term]
    attr: Attr


@dataclass(frozen=True)
class Depth(Term):
    prefix: Optional[Term]
    attr: Attr


@dataclass(frozen=True)
class Acyclic(Term):
    prefix: Optional[Term]
    attr: Attr


@dataclass(frozen=True)
class Eq(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Neq(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Not(Term):
    operand: Term


@dataclass(frozen=True)
class And(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Or(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class IntPlus(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class IntMinus(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Semi(Term):
    """``i1 ; ... ; in ; body``: value of *body* after the instructions."""

    instrs: tuple
    body: Term


CURRENT = CurrentK()
VOID = VoidK()
EMPTY = EmptySeq()
TRUE = BoolConst(True)
FALSE = BoolConst(False)

CHAIN_OPS = (Integral, Depth, Acyclic)
BINARY_OPS = (Concat, Eq, Neq, And, Or, IntPlus, IntMinus)
CONSTANTS = (IntConst, BoolConst, VoidK, EmptySeq, Ghost)


# ----------------------------------------------------------------------
# generic traversal


def children(t: Term) -> tuple[Term, ...]:
    if isinstance(t, Semi):
        return (t.body,)
    out = []
    for f in fields(t):
        v = getattr(t, f.name)
        if isinstance(v, Term) and not (isinstance(t, CHAIN_OPS) and f.name == "attr"):
            out.append(v)
    return tuple(out)


def map_children(t: Term, fn: Callable[[Term], Term]) -> Term:
    if isinstance(t, Semi):
        return replace(t, body=fn(t.body))
    if isinstance(t, Ghost):
        return t
    changes = {}
    for f in fields(t):
        v = getattr(t, f.name)
        if isinstance(v, Term) and not (isinstance(t, CHAIN_OPS) and f.name == "attr"):
            nv = fn(v)
            if nv is not v:
                changes[f.name] = nv
    return replace(t, **changes) if changes else t


def subterms(t: Term) -> Iterable[Term]:
    yield t
    for c in children(t):
        yield from subterms(c)


def contains(t: Term, pred: Callable[[Term], bool]) -> bool:
    return any(pred(s) for s in subterms(t))


# ----------------------------------------------------------------------
# paths


def spine(t: Term) -> list[Term]:
    """Flatten a ``Dot`` chain into its components, left to right."""
    if isinstance(t, Dot):
        return spine(t.left) + spine(t.right)
    return [t]


def build_dot(items: list[Term]) -> Term:
    """Inverse of :func:`spine`; empty list means ``Current``."""
    if not items:
        return CURRENT
    out = items[-1]
    for item in reversed(items[:-1]):
        out = Dot(item, out)
    return out


def split_path(t: Term) -> Optional[tuple[Term, list[Attr]]]:
    """Return ``(root, attrs)`` if *t* is a root followed by attributes."""
    items = spine(t)
    root, rest = items[0], items[1:]
    if not all(isinstance(a, Attr) for a in rest):
        return None
    return root, rest


def path_of(root: Term, attrs: list[Attr]) -> Term:
    return build_dot([root, *attrs]) if attrs else root


def append_attr(p: Optional[Term], a: Attr) -> Term:
    return a if p is None else build_dot(spine(p) + [a])


# ----------------------------------------------------------------------
# pretty printing

_PREC = {Or: 0, And: 1, Not: 2, Eq: 3, Neq: 3, Concat: 4, IntPlus: 5, IntMinus: 5}
_POSTFIX = 6
_SYMBOL = {Or: "or", And: "and", Eq: "=", Neq: "/=", Concat: "++", IntPlus: "+", IntMinus: "-"}


def _label(instr) -> str:
    return getattr(instr, "label", None) or "?"


def pretty(t: Term, prec: int = -1) -> str:
    s, p = _pp(t)
    return f"({s})" if p < prec else s


def _pp(t: Term) -> tuple[str, int]:
    match t:
        case CurrentK():
            return "Current", 7
        case VoidK():
            return "Void", 7
        case EmptySeq():
            return "<<>>", 7
        case IntConst(v):
            return (str(v), 7) if v >= 0 else (f"({v})", 7)
        case BoolConst(v):
            return ("true" if v else "false"), 7
        case Var(n) | Attr(n, _):
            return n, 7
        case NegVar(target):
            return pretty(target, _POSTFIX) + "'", 7
        case Old(inner):
            return f"old({pretty(inner)})", 7
        case Ghost(i, frozen):
            return f"old#{i}({pretty(frozen)})", 7
        case Singleton(item):
            return f"<<{pretty(item)}>>", 7
        case Rev(seq):
            return f"rev({pretty(seq)})", 7
        case Integral(None, a) | Depth(None, a) | Acyclic(None, a):
            return f"{_chain_name(t)}({a.name})", 7
        case Integral(p, a) | Depth(p, a) | Acyclic(p, a):
            return f"{pretty(p, _POSTFIX)}.{_chain_name(t)}({a.name})", _POSTFIX
        case Dot(left, right):
            return f"{pretty(left, _POSTFIX)}.{_dot_rhs(right)}", _POSTFIX
        case Not(operand):
            return f"not {pretty(operand, _PREC[Not])}", _PREC[Not]
        case Concat(left, right):
            # right-nested chains print flat; a left-nested operand keeps parens
            p = _PREC[Concat]
            return f"{pretty(left, p + 1)} ++ {pretty(right, p)}", p
        case Semi(instrs, body):
            lead = " ; ".join(_label(i) for i in instrs)
            return f"{lead} ; {pretty(body, 0)}", -1
        case _ if type(t) in _SYMBOL:
            p = _PREC[type(t)]
            op = _SYMBOL[type(t)]
            # comparisons are non-associative; arithmetic and logic associate left
            rp = p + 1
            lp = p + 1 if isinstance(t, (Eq, Neq)) else p
            return f"{pretty(t.left, lp)} {op} {pretty(t.right, rp)}", p
    raise TypeError(f"cannot print {t!r}")


def _chain_name(t: Term) -> str:
    return {Integral: "integral", Depth: "depth", Acyclic: "acyclic"}[type(t)]


def _dot_rhs(t: Term) -> str:
    match t:
        case Attr(n, _) | Var(n):
            return n
        case NegVar(_) | CurrentK() | Old(_):
            return pretty(t)
        case Dot(left, right) if isinstance(left, (Attr, Var, NegVar, Old, CurrentK)):
            return f"{_dot_rhs(left)}.{_dot_rhs(right)}"
        case Integral(None, _) | Depth(None, _) | Acyclic(None, _):
            return pretty(t)
        case Integral(p, a) | Depth(p, a) | Acyclic(p, a) if p is not None:
            return f"{_dot_rhs(p)}.{_chain_name(t)}({a.name})"
    return f"({pretty(t)})"


# ----------------------------------------------------------------------
# normalization

RuleFn = Callable[[Term], Optional[Term]]


def _dot_rules(t: Term) -> Optional[Term]:
    if not isinstance(t, Dot):
        return None
    x, r = t.left, t.right
    if isinstance(x, Dot):
        return Dot(x.left, Dot(x.right, r))
    match r:
        case IntConst() | BoolConst() | EmptySeq() | Ghost():
            return r
        case VoidK():
            return VOID
        case Singleton(item):
            return Singleton(Dot(x, item))
        case Rev(seq):
            return Rev(Dot(x, seq))
        case Not(operand):
            return Not(Dot(x, operand))
        case Integral(p, a) | Depth(p, a) | Acyclic(p, a):
            return type(r)(x if p is None else Dot(x, p), a)
        case _ if isinstance(r, BINARY_OPS):
            return type(r)(Dot(x, r.left), Dot(x, r.right))
    return None


def _void_rules(t: Term) -> Optional[Term]:
    match t:
        case Dot(VoidK(), _):
            return VOID
        case Singleton(VoidK()):
            return EMPTY
        case Integral(VoidK(), _):
            return EMPTY
        case Depth(VoidK(), _):
            return IntConst(-1)
        case Acyclic(VoidK(), _):
            return TRUE
    return None


def _cur1(t: Term) -> Optional[Term]:
    match t:
        case Dot(CurrentK(), r):
            return r
        case Integral(CurrentK(), a) | Depth(CurrentK(), a) | Acyclic(CurrentK(), a):
            return type(t)(None, a)
    return None


def _cur2(t: Term) -> Optional[Term]:
    match t:
        case Dot(left, CurrentK()):
            return left
    return None


def _neg1(t: Term) -> Optional[Term]:
    if not isinstance(t, Dot):
        return None
    items = spine(t)
    for i in range(1, len(items)):
        it, prev = items[i], items[i - 1]
        # a back-link names the client of the innermost call target only
        if isinstance(it, NegVar) and isinstance(prev, (Var, Attr)) and normalize(it.target) == prev:
            return build_dot(items[:i - 1] + items[i + 1:])
    return None


def _neg2(t: Term) -> Optional[Term]:
    match t:
        case Dot(NegVar(x), Old(y)) if x == y:
            return CURRENT
        case Dot(NegVar(x), Dot(Old(y), rest)) if x == y:
            return rest
    return None


def _seq_rules(t: Term) -> Optional[Term]:
    match t:
        case Concat(Concat(a, b), c):
            return Concat(a, Concat(b, c))
        case Concat(EmptySeq(), s) | Concat(s, EmptySeq()):
            return s
        case Rev(Rev(s)):
            return s
        case Rev(Concat(a, b)):
            return Concat(Rev(b), Rev(a))
        case Rev(Singleton() as s):
            return s
        case Rev(EmptySeq()):
            return EMPTY
    return None


def _bool_rules(t: Term) -> Optional[Term]:
    match t:
        case Eq(a, b) if a == b:
            return TRUE
        case Neq(a, b) if a == b:
            return FALSE
        case Not(BoolConst(v)):
            return BoolConst(not v)
        case Not(Not(x)):
            return x
        case And(BoolConst(True), x) | And(x, BoolConst(True)):
            return x
        case And(BoolConst(False), _) | And(_, BoolConst(False)):
            return FALSE
        case Or(BoolConst(False), x) | Or(x, BoolConst(False)):
            return x
        case Or(BoolConst(True), _) | Or(_, BoolConst(True)):
            return TRUE
    return None


# Rule families in the order traced normalization applies them.
FAMILIES: list[tuple[str, RuleFn]] = [
    ("DOT", _dot_rules),
    ("CUR1", _cur1),
    ("CUR2", _cur2),
    ("NEG1", _neg1),
    ("NEG2", _neg2),
    ("VOID", _void_rules),
    ("SEQ", _seq_rules),
    ("BOOL", _bool_rules),
]


def _rewrite(t: Term, rules: list[RuleFn]) -> Term:
    if isinstance(t, Semi):
        return t
    t = map_children(t, lambda c: _rewrite(c, rules))
    for rule in rules:
        r = rule(t)
        if r is not None and r != t:
            return _rewrite(r, rules)
    return t


_ALL_RULES = [fn for _, fn in FAMILIES]


def normalize(t: Term) -> Term:
    """Rewrite *t* to canonical form; idempotent."""
    return _rewrite(t, _ALL_RULES)


def normalize_traced(t: Term) -> tuple[Term, list[tuple[str, Term, Term]]]:
    """Normalize one rule family at a time, recording each family that fired."""
    steps = []
    while True:
        changed = False
        for name, fn in FAMILIES:
            nt = _rewrite(t, [fn])
            if nt != t:
                steps.append((name, t, nt))
                t, changed = nt, True
        if not changed:
            return t, steps


# ----------------------------------------------------------------------
# integral folding


def concat_items(t: Term) -> list[Term]:
    if isinstance(t, Concat):
        return concat_items(t.left) + concat_items(t.right)
    return [t]


def build_concat(items: list[Term]) -> Term:
    if not items:
        return EMPTY
    out = items[-1]
    for it in reversed(items[:-1]):
        out = Concat(it, out)
    return out


def fold_pair(head: Term, tail: Term) -> Optional[tuple[str, Term]]:
    """Fold ``<<p>> ++ p.a.integral(a)`` into ``p.integral(a)``."""
    if not (isinstance(head, Singleton) and isinstance(tail, Integral) and tail.prefix is not None):
        return None
    p, a = head.item, tail.attr
    if isinstance(p, CurrentK):
        if tail.prefix == a:
            return "SIE", Integral(None, a)
        return None
    if normalize(tail.prefix) == normalize(append_attr(p, a)):
        return "NIE", Integral(p, a)
    return None


def fold_integral(t: Term) -> Term:
    """Fold every foldable adjacent pair, anywhere in *t*."""
    return fold_integral_traced(t)[0]


def fold_integral_traced(t: Term) -> tuple[Term, list[tuple[str, Term, Term]]]:
    steps: list[tuple[str, Term, Term]] = []

    def go(u: Term) -> Term:
        u = map_children(u, go)
        if not isinstance(u, Concat):
            return u
        items = concat_items(u)
        i = 0
        while i < len(items) - 1:
            hit = fold_pair(items[i], items[i + 1])
            if hit:
                rule, folded = hit
                before = build_concat(items)
                items[i:i + 2] = [folded]
                steps.append((rule, before, build_concat(items)))
                i = max(i - 1, 0)
            else:
                i += 1
        return build_concat(items)

    return go(t), steps


def unfold_integral(t: Integral) -> Term:
    """``p.integral(a)`` to ``<<p>> ++ p.a.integral(a)`` (and the simple form)."""
    head = CURRENT if t.prefix is None else t.prefix
    return Concat(Singleton(head), Integral(append_attr(t.prefix, t.attr), t.attr))


# ----------------------------------------------------------------------
# substitution and dot distribution


def substitute(t: Term, formals: list[str], actuals: list[Term]) -> Term:
    """Simultaneous replacement of the named variables."""
    if len(formals) != len(actuals):
        raise ValueError(f"arity mismatch: {len(formals)} formals, {len(actuals)} actuals")
    table = dict(zip(formals, actuals))

    def go(u: Term) -> Term:
        if isinstance(u, Var) and u.name in table:
            return table[u.name]
        if isinstance(u, NegVar):
            return NegVar(go(u.target))
        if isinstance(u, Ghost):
            return u
        return map_children(u, go)

    return go(t)


def distribute_dot(x: Term, items: list[Term]) -> list[Term]:
    return [Dot(x, u) for u in items]


def is_boolean(t: Term) -> bool:
    return isinstance(t, (BoolConst, Eq, Neq, Not, And, Or, Acyclic))


def is_sequence(t: Term) -> bool:
    return isinstance(t, (Singleton, Concat, Rev, Integral, EmptySeq))
