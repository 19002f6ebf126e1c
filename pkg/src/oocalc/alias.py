"""Flow-sensitive may-alias analysis over root and chain-tail atoms.

The abstract domain partitions reference values into *atoms*:

* a root atom ``r`` for ``Current``, each reference local/formal and each
  reference attribute of the current class;
* a tail atom ``r+a`` for each root ``r`` and each attribute ``a`` whose type
  is the root's own class: the objects ``r.a^n`` (n >= 1) other than ``r``.

A relation is a set of unordered atom pairs that *may* share an object, plus
must-facts ``acyc(r, a)`` stating that the ``a`` chain from ``r`` reaches void.
``r`` and ``r+a`` never share an object by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional

from . import terms as T
from .lang import directly_affected, has_qualified_calls
from .program import (
    BASIC_TYPES,
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

Atom = tuple[str, Optional[str]]  # (root, tail attribute or None)
CURRENT_ROOT = "Current"


@dataclass(frozen=True)
class AnalysisConfig:
    k: int = 3  # longest chain suffix tracked precisely; longer ones widen to "anything"


@dataclass(frozen=True)
class AccessPath:
    root: str
    attrs: tuple[str, ...] = ()
    tail: bool = False  # True: every r.a^n with n >= 1 other than r

    def __str__(self) -> str:
        base = ".".join((self.root, *self.attrs))
        return base + "+" if self.tail else base


def atom_path(a: Atom) -> AccessPath:
    root = a[0][1:] if a[0].startswith("@") else a[0]
    return AccessPath(root, (a[1],), True) if a[1] else AccessPath(root)


class Domain:
    """Atoms and their types for one routine."""

    def __init__(self, unit: SourceUnit, routine: RoutineDef, config: AnalysisConfig = AnalysisConfig()):
        self.unit, self.routine, self.config = unit, routine, config
        self.owner = routine.owner
        cls = unit.cls(self.owner)
        self.root_type: dict[str, str] = {CURRENT_ROOT: self.owner}
        for n, ty in routine.formals + routine.locals:
            if ty not in BASIC_TYPES:
                self.root_type[n] = ty
        for a in cls.attributes:
            if a.type not in BASIC_TYPES:
                self.root_type["@" + a.name] = a.type
        self.self_attrs: dict[str, list[str]] = {
            c.name: [a.name for a in c.attributes if a.type == c.name] for c in unit.classes
        }
        self.atoms: list[Atom] = []
        for r, ty in self.root_type.items():
            self.atoms.append((r, None))
            self.atoms += [(r, a) for a in self.self_attrs.get(ty, [])]
        self.locals = {n for n, ty in routine.locals if ty not in BASIC_TYPES}
        self.vars = {n for n, ty in routine.formals + routine.locals if ty not in BASIC_TYPES}

    def type_of(self, a: Atom) -> str:
        return self.root_type[a[0]]

    def compatible(self, a: Atom, b: Atom) -> bool:
        """Distinct atoms of one type, excluding a root against its own tail."""
        if a == b or self.type_of(a) != self.type_of(b):
            return False
        return not (a[0] == b[0] and (a[1] is None) != (b[1] is None))

    def all_pairs(self) -> set[frozenset]:
        return {frozenset(p) for p in combinations(self.atoms, 2) if self.compatible(*p)}

    def of_type(self, ty: Optional[str]) -> frozenset:
        return frozenset(a for a in self.atoms if ty is None or self.type_of(a) == ty)

    # -- term to root/chain decomposition ---------------------------------
    def root_of(self, t: T.Term) -> Optional[str]:
        match t:
            case T.CurrentK():
                return CURRENT_ROOT
            case T.Var(n) if n in self.root_type:
                return n
            case T.Attr(n, c) if "@" + n in self.root_type and (not c or c == self.owner):
                return "@" + n
        return None

    def decompose(self, t: T.Term) -> Optional[tuple[str, Optional[str], int]]:
        """``(root, attr, n)`` when *t* is ``root.attr^n``; None if not expressible."""
        items = T.spine(T.normalize(t))
        root = self.root_of(items[0])
        if root is None:
            return None
        rest = items[1:]
        if not rest:
            return root, None, 0
        names = {a.name if isinstance(a, T.Attr) else None for a in rest}
        if len(names) != 1 or None in names:
            return None
        a = names.pop()
        if a not in self.self_attrs.get(self.root_type[root], []):
            return None
        if len(rest) > self.config.k:
            return None
        return root, a, len(rest)


@dataclass(frozen=True)
class AliasRelation:
    """May-alias pairs plus acyclicity must-facts at one program point."""

    domain: Domain = field(compare=False, hash=False, repr=False)
    may: frozenset = frozenset()
    acyc: frozenset = frozenset()  # {(root, attr)}

    # -- queries over atom sets -------------------------------------------
    def pair_may(self, a: Atom, b: Atom) -> bool:
        return a == b or frozenset((a, b)) in self.may

    def never(self, s1: Optional[Iterable[Atom]], s2: Optional[Iterable[Atom]]) -> bool:
        if s1 is None or s2 is None:
            return False
        return not any(self.pair_may(a, b) for a in s1 for b in s2)

    def is_acyc(self, root: str, attr: str) -> bool:
        return (root, attr) in self.acyc

    @property
    def pairs(self) -> set[tuple[AccessPath, AccessPath]]:
        return {tuple(sorted((atom_path(a) for a in p), key=str)) for p in self.may}

    # -- term interpretation ----------------------------------------------
    def atoms(self, t: T.Term) -> Optional[frozenset]:
        """Atoms that may hold the value of *t*; None when not expressible."""
        t = T.normalize(t)
        if isinstance(t, T.VoidK):
            return frozenset()
        if isinstance(t, (T.Integral, T.Acyclic, T.Depth)):
            return self.chain_atoms(t.prefix if t.prefix is not None else T.CURRENT, t.attr.name)
        d = self.domain.decompose(t)
        if d is None:
            return None
        root, a, n = d
        if n == 0:
            return frozenset({(root, None)})
        return self.tail_atoms(root, a, n)

    def tail_atoms(self, root: str, a: str, n: int = 1) -> frozenset:
        s = {(root, a)}
        if not self.is_acyc(root, a):
            s.add((root, None))
        return frozenset(s)

    def chain_atoms(self, p: T.Term, a: str) -> Optional[frozenset]:
        """Atoms covering every element of ``p.integral(a)``."""
        head, tail = self.atoms(p), self.tail(p, a)
        if head is None or tail is None:
            return None
        return head | tail

    def tail(self, p: T.Term, a: str) -> Optional[frozenset]:
        """Atoms covering ``p.a^n`` for n >= 1."""
        p = T.normalize(p)
        if isinstance(p, T.VoidK):
            return frozenset()
        d = self.domain.decompose(p)
        if d is None:
            return None
        root, b, n = d
        if a not in self.domain.self_attrs.get(self.domain.root_type[root], []):
            return None
        if b is not None and b != a:
            return None
        return self.tail_atoms(root, a)

    def acyclic_term(self, p: T.Term, a: str) -> bool:
        p = T.normalize(p)
        if isinstance(p, T.VoidK):
            return True
        d = self.domain.decompose(p)
        if d is None:
            return False
        root, b, _ = d
        return (b is None or b == a) and self.is_acyc(root, a)

    def may_alias(self, e: T.Term, f: T.Term) -> bool:
        if T.normalize(e) == T.normalize(f) and not isinstance(T.normalize(e), T.VoidK):
            return True
        return not self.never(self.atoms(e), self.atoms(f))

    def cycle_free(self, x: str, e: T.Term, p: list[str], anchor: T.Term = T.CURRENT,
                   attrs: Optional[set[str]] = None) -> bool:
        """No prefix ``q.w`` of *p* with ``w`` in *attrs* has ``e.q`` possibly aliased to *anchor*."""
        written = attrs if attrs is not None else {x}
        for j, name in enumerate(p):
            if name in written:
                q = T.path_of(e, [T.Attr(n) for n in p[:j]]) if j else e
                if self.may_alias(q, anchor):
                    return False
        return True

    def join(self, other: AliasRelation) -> AliasRelation:
        return AliasRelation(self.domain, self.may | other.may, self.acyc & other.acyc)


# ----------------------------------------------------------------------
# transfer


def _remap(rel: AliasRelation, mapping: dict[Atom, frozenset], acyc: set) -> AliasRelation:
    d = rel.domain
    pre = {a: mapping.get(a, frozenset({a})) for a in d.atoms}
    may = set()
    for p in d.all_pairs():
        a, b = tuple(p)
        if any(rel.pair_may(x, y) for x in pre[a] for y in pre[b]):
            may.add(p)
    return AliasRelation(d, frozenset(may), frozenset(acyc))


def _value_info(rel: AliasRelation, e: T.Term, ty: Optional[str], attrs: list[str]):
    """(atoms, {attr: tail atoms}, {attr: acyclic}) describing expression *e*."""
    d = rel.domain
    s = rel.atoms(e)
    if s is None:
        s = d.of_type(ty)
    tails, acyc = {}, {}
    for a in attrs:
        tl = rel.tail(e, a)
        tails[a] = d.of_type(ty) if tl is None else tl
        acyc[a] = rel.acyclic_term(e, a)
    return s, tails, acyc


def assign_root(rel: AliasRelation, root: str, e: T.Term) -> AliasRelation:
    """Rebind a root atom (variable, or non-self-typed attribute) to the value of *e*."""
    d = rel.domain
    ty = d.root_type[root]
    attrs = d.self_attrs.get(ty, [])
    s, tails, acy = _value_info(rel, e, ty, attrs)
    mapping = {(root, None): s}
    acyc = {f for f in rel.acyc if f[0] != root}
    for a in attrs:
        mapping[(root, a)] = tails[a]
        if acy[a]:
            acyc.add((root, a))
    return _remap(rel, mapping, acyc)


def field_write(rel: AliasRelation, sx: Optional[frozenset], exact: Optional[str], a: str,
                c: T.Term) -> AliasRelation:
    """Effect of setting field *a* of the object(s) in *sx* to the value of *c*."""
    d = rel.domain
    ty = None
    for r, t in d.root_type.items():
        if a in d.self_attrs.get(t, []):
            ty = t
    owner_attr = d.unit.cls(d.owner).attribute(a)
    vty = owner_attr.type if owner_attr else ty
    sc, tails, acy = _value_info(rel, c, vty, [a] if ty else [])
    sct = tails.get(a, frozenset())
    cstar = sc | sct
    acyc_c = acy.get(a, False)
    sx = d.of_type(None) if sx is None else sx
    mapping: dict[Atom, frozenset] = {}
    acyc = set(rel.acyc)
    cur = frozenset({(CURRENT_ROOT, None)})
    # the current object's attribute a, when the written object may be Current
    r_attr = "@" + a
    value_changed = False
    if r_attr in d.root_type and not rel.never(sx, cur):
        value_changed = True
        if exact == CURRENT_ROOT:
            mapping[(r_attr, None)] = sc
        else:
            mapping[(r_attr, None)] = sc | {(r_attr, None)}
        for b in d.self_attrs.get(d.root_type[r_attr], []):
            if b != a:
                base = rel.tail(c, b)
                base = d.of_type(d.root_type[r_attr]) if base is None else base
                mapping[(r_attr, b)] = base | ({(r_attr, b)} if exact != CURRENT_ROOT else frozenset())
                if not (exact == CURRENT_ROOT and rel.acyclic_term(c, b)):
                    acyc.discard((r_attr, b))
    if ty is None:
        return _remap(rel, mapping, acyc)
    for r, rty in d.root_type.items():
        if a not in d.self_attrs.get(rty, []):
            continue
        rstar = frozenset({(r, None), (r, a)})
        if exact == r and not (r == r_attr and value_changed):
            mapping[(r, a)] = cstar
            ok = acyc_c and rel.never(sx, cstar)
        elif rel.never(sx, rstar) and not (r == r_attr and value_changed):
            continue
        else:
            mapping[(r, a)] = frozenset({(r, a)}) | sx | cstar
            ok = rel.is_acyc(r, a) and acyc_c and rel.never(sx, cstar) and rel.never(cstar, rstar)
            if r == r_attr and value_changed:
                ok = ok and rel.never(cur, cstar)
        if ok:
            acyc.add((r, a))
        else:
            acyc.discard((r, a))
    return _remap(rel, mapping, acyc)


def havoc(rel: AliasRelation) -> AliasRelation:
    """Anything reachable through the heap may change."""
    d = rel.domain
    mapping = {}
    for a in d.atoms:
        if a[1] is not None or a[0].startswith("@"):
            mapping[a] = d.of_type(d.type_of(a))
    return _remap(rel, mapping, set())


def _call_effect(rel: AliasRelation, target: T.Term, routine: Optional[RoutineDef],
                 actuals: tuple) -> AliasRelation:
    d = rel.domain
    if routine is None or not routine.has_body:
        return havoc(rel)
    sx = rel.atoms(target)
    exact = d.root_of(T.normalize(target))
    if has_qualified_calls(d.unit, routine):
        return havoc(rel)
    writes = []
    formals = routine.formal_names
    simple = routine.body and all(
        isinstance(i, Assign) and isinstance(i.target, T.Attr)
        and isinstance(i.source, T.Var) and i.source.name in formals for i in routine.body
    )
    if simple:
        for i in routine.body:
            writes.append((i.target.name, actuals[formals.index(i.source.name)]))
        if len(writes) > 1 and any(d.root_of(T.normalize(v)) is None and not isinstance(v, T.VoidK)
                                   for _, v in writes):
            return havoc(rel)
    else:
        # unknown values: anything of the attribute's type
        for a in sorted(directly_affected(d.unit, routine)):
            writes.append((a, None))
    for a, v in writes:
        rel = field_write(rel, sx, exact, a, v if v is not None else _TOP)
    return rel


_TOP = T.NegVar(T.Var("?"))  # never decomposable: stands for an unknown value


def transfer(i: Instr, rel: AliasRelation, use_assumptions: bool = True,
             record: Optional[dict] = None) -> AliasRelation:
    """Relation after executing *i* from a state described by *rel*."""
    d = rel.domain
    if record is not None and i.label:
        record[i.label] = rel.join(record[i.label]) if i.label in record else rel
    match i:
        case Assign(target, source):
            root = d.root_of(target)
            if root is None:
                return rel
            if isinstance(target, T.Attr):
                a = target.name
                if a in d.self_attrs.get(d.owner, []):
                    rel = field_write(rel, frozenset({(CURRENT_ROOT, None)}), CURRENT_ROOT, a, source)
                    return rel
            return assign_root(rel, root, source)
        case QualifiedCall(target, name, actuals):
            ty = _type_of(d, target)
            c = d.unit.cls(ty) if ty else None
            return _call_effect(rel, target, c.routine(name) if c else None, actuals)
        case UnqualifiedCall(name, actuals):
            r = d.unit.cls(d.owner).routine(name)
            return _call_effect(rel, T.CURRENT, r, actuals)
        case Cut(e, f):
            if not use_assumptions:
                return rel
            return _sever(rel, e, f)
        case Check(a):
            return assume(rel, a) if use_assumptions else rel
        case Loop():
            for j in i.init:
                rel = transfer(j, rel, use_assumptions, record)
            head = rel
            while True:
                body = head
                for j in i.body:
                    body = transfer(j, body, use_assumptions, None)
                nxt = head.join(body)
                if nxt == head:
                    break
                head = nxt
            if record is not None:
                record[i.label + "@head"] = head
                body = head
                for j in i.body:
                    body = transfer(j, body, use_assumptions, record)
            return exit_facts(head, i.exit)
    return rel


def _type_of(d: Domain, t: T.Term) -> Optional[str]:
    dec = d.decompose(t)
    if dec is not None:
        return d.root_type[dec[0]]
    items = T.spine(T.normalize(t))
    ty = None
    match items[0]:
        case T.Var(n):
            ty = d.routine.var_type(n)
        case T.Attr(n, c):
            cls = d.unit.cls(c or d.owner)
            ty = cls.attribute(n).type if cls and cls.attribute(n) else None
        case T.CurrentK():
            ty = d.owner
    for a in items[1:]:
        if not isinstance(a, T.Attr) or ty is None:
            return None
        cls = d.unit.cls(ty)
        ty = cls.attribute(a.name).type if cls and cls.attribute(a.name) else None
    return ty


def _sever(rel: AliasRelation, e: T.Term, f: T.Term) -> AliasRelation:
    se, sf = rel.atoms(e), rel.atoms(f)
    if se is None or sf is None or len(se) != 1 or len(sf) != 1 or se == sf:
        return rel
    return AliasRelation(rel.domain, rel.may - {se | sf}, rel.acyc)


def assume(rel: AliasRelation, a: T.Term) -> AliasRelation:
    """Strengthen *rel* with a boolean assertion where the domain can express it."""
    a = T.normalize(a)
    match a:
        case T.And(l, r):
            return assume(assume(rel, l), r)
        case T.Acyclic(p, attr):
            d = rel.domain
            dec = d.decompose(p if p is not None else T.CURRENT)
            if dec is not None and dec[2] == 0:
                return AliasRelation(d, rel.may, rel.acyc | {(dec[0], attr.name)})
            return rel
        case T.Neq(l, r):
            return _sever(rel, l, r)
        case T.Not(T.Eq(l, r)):
            return _sever(rel, l, r)
    return rel


def exit_facts(rel: AliasRelation, exit_: T.Term) -> AliasRelation:
    """After a loop whose exit is ``v = Void``, v holds no object."""
    match T.normalize(exit_):
        case T.Eq(v, T.VoidK()) | T.Eq(T.VoidK(), v):
            d = rel.domain
            root = d.root_of(v)
            if root is not None:
                return assign_root(rel, root, T.VOID)
    return rel


# ----------------------------------------------------------------------
# whole-routine analysis


def entry_relation(domain: Domain, precondition: Iterable[T.Term] = ()) -> AliasRelation:
    """All compatible pairs may alias, except those involving (void) locals."""
    may = {p for p in domain.all_pairs() if not any(a[0] in domain.locals for a in p)}
    acyc = {(r, a) for r in domain.locals for a in domain.self_attrs.get(domain.root_type[r], [])}
    rel = AliasRelation(domain, frozenset(may), frozenset(acyc))
    for clause in precondition:
        rel = assume(rel, clause)
    return rel


@dataclass
class FactBase:
    """Per-label relations (state before each labelled instruction)."""

    routine: RoutineDef
    at_label: dict[str, AliasRelation]
    without_assumptions: dict[str, AliasRelation]
    entry: AliasRelation
    exit: AliasRelation
    assumption_labels: list[str] = field(default_factory=list)

    def at(self, label: Optional[str]) -> AliasRelation:
        if label is None or label == "@entry":
            return self.entry
        if label == "@exit":
            return self.exit
        if label not in self.at_label:
            raise KeyError(f"no program location labelled {label!r} in {self.routine.name}")
        return self.at_label[label]

    def base_at(self, label: Optional[str]) -> AliasRelation:
        if label is None or label == "@entry":
            return self.entry
        return self.without_assumptions.get(label, self.at(label))

    def evidence(self, label: Optional[str], holds) -> Optional[str]:
        """'alias-engine' if *holds* is true without cut/check, 'assumed-fact' if only with them."""
        if holds(self.base_at(label)):
            return "alias-engine"
        if holds(self.at(label)):
            return "assumed-fact"
        return None

    def may_alias(self, e: T.Term, f: T.Term, at: Optional[str]) -> bool:
        return self.at(at).may_alias(e, f)

    def acyclic(self, p: T.Term, a: str, at: Optional[str]) -> bool:
        return self.at(at).acyclic_term(p, a)

    def cycle_free(self, x: str, e: T.Term, p: list[str], at: Optional[str], **kw) -> bool:
        return self.at(at).cycle_free(x, e, p, **kw)


def analyze(unit: SourceUnit, routine: RoutineDef, config: AnalysisConfig = AnalysisConfig()) -> FactBase:
    domain = Domain(unit, routine, config)
    entry = entry_relation(domain, routine.precondition)
    records = []
    for use in (True, False):
        rec: dict[str, AliasRelation] = {}
        rel = entry
        for i in routine.body:
            rel = transfer(i, rel, use, rec)
        records.append((rec, rel))
    (with_a, exit_rel), (without, _) = records
    from .program import walk
    assumption_labels = [i.label for i in walk(routine.body) if isinstance(i, (Cut, Check))]
    return FactBase(routine, with_a, without, entry, exit_rel, assumption_labels)


def may_alias(e: T.Term, f: T.Term, at: Optional[str], facts: FactBase) -> bool:
    return facts.may_alias(e, f, at)


def acyclic(p: T.Term, attr: str, at: Optional[str], facts: FactBase) -> bool:
    return facts.acyclic(p, attr, at)


def cycle_free(x: str, e: T.Term, p: list[str], at: Optional[str], facts: FactBase) -> bool:
    return facts.cycle_free(x, e, p, at)
