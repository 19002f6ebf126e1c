"""Parser, name resolution and setter classification for the toy language."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Optional

from . import terms as T
from .program import (
    BASIC_TYPES,
    BOOLEAN,
    INTEGER,
    NOT_A_SETTER,
    Assign,
    AttributeDef,
    Check,
    ClassDef,
    Cut,
    Instr,
    Loop,
    QualifiedCall,
    RoutineDef,
    SetterClass,
    SourceUnit,
    UnqualifiedCall,
    walk,
)


class LangError(Exception):
    pass


class ParseError(LangError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.line, self.col = line, col


class ResolveError(LangError):
    pass


class AmbiguityError(ResolveError):
    def __init__(self, name: str, candidates: list[str]):
        super().__init__(f"attribute {name!r} is ambiguous; candidates: {', '.join(candidates)}")
        self.candidates = candidates


# ----------------------------------------------------------------------
# lexer


@dataclass
class Token:
    kind: str  # NAME, INT, SYM, COMMENT, EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>--[^\n]*)"
    r"|(?P<int>\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<sym>:=|/=|<<|>>|\+\+|[:(),.+\-=;'])"
)

KEYWORDS = {
    "class", "feature", "end", "detachable", "note", "nonprodigal", "require", "local",
    "do", "ensure", "from", "until", "invariant", "variant", "loop", "cut", "check",
    "call", "old", "not", "and", "or", "Current", "Void", "true", "false", "rev",
    "integral", "depth", "acyclic",
}
_BLOCK = {"end", "do", "local", "ensure", "require", "loop", "variant", "invariant",
          "until", "from", "note", "feature", "class", "cut", "check", "call"}
_CHAIN = {"integral": T.Integral, "depth": T.Depth, "acyclic": T.Acyclic}


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    line, start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        col = pos - start + 1
        if kind == "nl":
            line, start = line + 1, m.end()
        elif kind == "comment":
            out.append(Token("COMMENT", m.group()[2:].strip(), line, col))
        elif kind == "int":
            out.append(Token("INT", m.group(), line, col))
        elif kind == "name":
            out.append(Token("NAME", m.group(), line, col))
        elif kind == "sym":
            out.append(Token("SYM", m.group(), line, col))
        pos = m.end()
    out.append(Token("EOF", "", line, pos - start + 1))
    return out


# ----------------------------------------------------------------------
# parser (raw names; resolution is a separate pass)


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.last: Optional[Token] = None

    # token helpers -----------------------------------------------------
    def peek(self, k: int = 0) -> Token:
        j, seen = self.i, 0
        while True:
            t = self.toks[j]
            if t.kind != "COMMENT":
                if seen == k:
                    return t
                seen += 1
            j += 1

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t.kind in ("NAME", "SYM") and t.text == text

    def next(self) -> Token:
        t = self.peek()
        self.i = self.toks.index(t, self.i)
        self.i += 1
        self.last = t
        return t

    def expect(self, text: str) -> Token:
        t = self.peek()
        if t.text != text or t.kind not in ("NAME", "SYM"):
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}", t.line, t.col)
        return self.next()

    def name(self) -> str:
        t = self.peek()
        if t.kind != "NAME" or t.text in KEYWORDS:
            raise ParseError(f"expected identifier, found {t.text or 'end of input'!r}", t.line, t.col)
        return self.next().text

    def trailing_label(self) -> str:
        t = self.toks[self.i] if self.i < len(self.toks) else None
        if (t is not None and t.kind == "COMMENT" and self.last is not None
                and t.line == self.last.line and re.fullmatch(r"[A-Za-z_]\w*", t.text)):
            self.i += 1
            return t.text
        return ""

    # structure ------------------------------------------------------------
    def unit(self) -> SourceUnit:
        classes = []
        while self.peek().kind != "EOF":
            classes.append(self.klass())
        if not classes:
            t = self.peek()
            raise ParseError("expected at least one class", t.line, t.col)
        return SourceUnit(classes)

    def klass(self) -> ClassDef:
        self.expect("class")
        c = ClassDef(self.name())
        self.expect("feature")
        while not self.at("end"):
            if self.peek().kind == "EOF":
                t = self.peek()
                raise ParseError("unterminated class", t.line, t.col)
            if self.at(":", 1):
                n = self.name()
                self.expect(":")
                det = bool(self.at("detachable") and self.next())
                c.attributes.append(AttributeDef(n, self.name(), det))
            else:
                r = self.routine()
                r.owner = c.name
                c.routines.append(r)
        self.expect("end")
        return c

    def decls(self) -> list[tuple[str, str]]:
        names = [self.name()]
        while self.at(","):
            self.next()
            names.append(self.name())
        self.expect(":")
        if self.at("detachable"):
            self.next()
        ty = self.name()
        return [(n, ty) for n in names]

    def routine(self) -> RoutineDef:
        r = RoutineDef(self.name())
        if self.at("("):
            self.next()
            if not self.at(")"):
                r.formals += self.decls()
                while self.at(";") or self.at(","):
                    self.next()
                    r.formals += self.decls()
            self.expect(")")
        if self.at("note"):
            self.next()
            self.expect("nonprodigal")
            r.note_nonprodigal = True
        if self.at("require"):
            self.next()
            r.precondition = self.term_list()
        if self.at("local"):
            self.next()
            while self.peek().kind == "NAME" and self.peek().text not in KEYWORDS:
                r.locals += self.decls()
                if self.at(";"):
                    self.next()
        r.has_body = self.at("do")
        if self.at("do"):
            self.next()
            r.body = self.instrs({"ensure", "end"})
        if self.at("ensure"):
            self.next()
            r.postcondition = self.term_list()
        self.expect("end")
        return r

    def term_list(self) -> list[T.Term]:
        out = [self.term()]
        while self.starts_term():
            out.append(self.term())
        return out

    def starts_term(self) -> bool:
        t = self.peek()
        if t.kind == "INT":
            return True
        if t.kind == "SYM":
            return t.text in ("(", "<<")
        if t.kind == "NAME":
            return t.text not in _BLOCK
        return False

    # instructions --------------------------------------------------------
    def instrs(self, stop: set[str]) -> list[Instr]:
        out = []
        while True:
            while self.at(";"):
                self.next()
            t = self.peek()
            if t.kind == "EOF" or (t.kind == "NAME" and t.text in stop):
                return out
            out.append(self.instr())

    def instr(self) -> Instr:
        t = self.peek()
        if self.at("from"):
            self.next()
            init = self.instrs({"until"})
            self.expect("until")
            exit_ = self.term()
            invs: list[T.Term] = []
            variant = None
            if self.at("invariant"):
                self.next()
                invs = self.term_list()
            if self.at("variant"):
                self.next()
                variant = self.term()
            self.expect("loop")
            body = self.instrs({"end"})
            self.expect("end")
            return Loop(tuple(init), exit_, tuple(invs), variant, tuple(body), self.trailing_label())
        if self.at("cut"):
            self.next()
            e = self.term()
            self.expect(",")
            f = self.term()
            return Cut(e, f, self.trailing_label())
        if self.at("check"):
            self.next()
            return Check(self.term(), self.trailing_label())
        explicit_call = False
        if self.at("call"):
            self.next()
            explicit_call = True
        if not (t.kind == "NAME" and (t.text not in KEYWORDS or t.text in ("call", "Current"))):
            raise ParseError(f"expected instruction, found {t.text or 'end of input'!r}", t.line, t.col)
        lhs = self.postfix()
        if self.at(":="):
            if explicit_call:
                raise ParseError("assignment after 'call'", t.line, t.col)
            if not isinstance(lhs, T.Var):
                raise ParseError("remote field writes are not allowed; use a setter call", t.line, t.col)
            self.next()
            return Assign(lhs, self.term(), self.trailing_label())
        actuals: list[T.Term] = []
        has_args = self.at("(")
        if has_args:
            self.next()
            if not self.at(")"):
                actuals.append(self.term())
                while self.at(","):
                    self.next()
                    actuals.append(self.term())
            self.expect(")")
        if not (has_args or explicit_call):
            raise ParseError("expected ':=' or a call", t.line, t.col)
        if isinstance(lhs, T.Var):
            return UnqualifiedCall(lhs.name, tuple(actuals), self.trailing_label())
        if isinstance(lhs, T.Dot) and isinstance(lhs.right, T.Var):
            return QualifiedCall(lhs.left, lhs.right.name, tuple(actuals), self.trailing_label())
        raise ParseError("malformed call", t.line, t.col)

    # terms -------------------------------------------------------------
    def term(self) -> T.Term:
        return self.or_()

    def or_(self) -> T.Term:
        left = self.and_()
        while self.at("or"):
            self.next()
            left = T.Or(left, self.and_())
        return left

    def and_(self) -> T.Term:
        left = self.not_()
        while self.at("and"):
            self.next()
            left = T.And(left, self.not_())
        return left

    def not_(self) -> T.Term:
        if self.at("not"):
            self.next()
            return T.Not(self.not_())
        return self.cmp()

    def cmp(self) -> T.Term:
        left = self.concat()
        if self.at("="):
            self.next()
            return T.Eq(left, self.concat())
        if self.at("/="):
            self.next()
            return T.Neq(left, self.concat())
        return left

    def concat(self) -> T.Term:
        left = self.add()
        if self.at("++"):
            self.next()
            return T.Concat(left, self.concat())
        return left

    def add(self) -> T.Term:
        left = self.postfix()
        while self.at("+") or self.at("-"):
            op = self.next().text
            right = self.postfix()
            left = T.IntPlus(left, right) if op == "+" else T.IntMinus(left, right)
        return left

    def postfix(self) -> T.Term:
        t = self.primary()
        while True:
            if self.at("'"):
                self.next()
                t = T.NegVar(t)
            elif self.at("."):
                self.next()
                if self.at("("):
                    self.next()
                    inner = self.term()
                    self.expect(")")
                    t = T.Dot(t, inner)
                    continue
                tok = self.peek()
                if tok.text in _CHAIN and self.at("(", 1):
                    self.next()
                    self.expect("(")
                    a = self.name()
                    self.expect(")")
                    t = _CHAIN[tok.text](t, T.Attr(a))
                elif tok.text == "Current":
                    self.next()
                    t = T.Dot(t, T.CURRENT)
                elif tok.text == "old" and self.at("(", 1):
                    t = T.Dot(t, self.primary())
                else:
                    t = T.Dot(t, T.Var(self.name()))
            else:
                return t

    def primary(self) -> T.Term:
        t = self.peek()
        if t.kind == "INT":
            self.next()
            return T.IntConst(int(t.text))
        if t.kind == "SYM" and t.text == "(":
            self.next()
            inner = self.term()
            self.expect(")")
            return inner
        if t.kind == "SYM" and t.text == "<<":
            self.next()
            if self.at(">>"):
                self.next()
                return T.EMPTY
            inner = self.term()
            self.expect(">>")
            return T.Singleton(inner)
        if t.kind == "NAME":
            match t.text:
                case "Current":
                    self.next()
                    return T.CURRENT
                case "Void":
                    self.next()
                    return T.VOID
                case "true" | "false":
                    self.next()
                    return T.BoolConst(t.text == "true")
                case "old" | "rev":
                    self.next()
                    self.expect("(")
                    inner = self.term()
                    self.expect(")")
                    return T.Old(inner) if t.text == "old" else T.Rev(inner)
                case "integral" | "depth" | "acyclic":
                    self.next()
                    self.expect("(")
                    a = self.name()
                    self.expect(")")
                    return _CHAIN[t.text](None, T.Attr(a))
            if t.text not in KEYWORDS:
                self.next()
                return T.Var(t.text)
        raise ParseError(f"expected term, found {t.text or 'end of input'!r}", t.line, t.col)


def parse_term_raw(text: str) -> T.Term:
    p = _Parser(text)
    t = p.term()
    if p.peek().kind != "EOF":
        tok = p.peek()
        raise ParseError(f"unexpected {tok.text!r} after term", tok.line, tok.col)
    return t


# ----------------------------------------------------------------------
# resolution

SEQ = "SEQUENCE"
ANY = "?"
NONE = "NONE"


def resolve_attribute(name: str, unit: SourceUnit, target_class: Optional[str] = None) -> str:
    """Return the qualified id ``CLASS_attr`` for an attribute name."""
    return "{0}_{1}".format(*_lookup_attr(name, unit, target_class))


def _lookup_attr(name: str, unit: SourceUnit, target_class: Optional[str]) -> tuple[str, str]:
    if target_class and target_class not in (ANY, NONE):
        c = unit.cls(target_class)
        if c and c.attribute(name):
            return c.name, name
    for c in unit.classes:
        prefix = c.name + "_"
        if name.startswith(prefix) and c.attribute(name[len(prefix):]):
            return c.name, name[len(prefix):]
    hits = [c.name for c in unit.classes if c.attribute(name)]
    if target_class and target_class not in (ANY, NONE):
        if hits:
            raise ResolveError(f"class {target_class} has no attribute {name!r}")
    if len(hits) == 1:
        return hits[0], name
    if len(hits) > 1:
        raise AmbiguityError(name, hits)
    raise ResolveError(f"unknown identifier {name!r}")


class Resolver:
    """Turns raw names into ``Var``/``Attr`` nodes and infers term types."""

    def __init__(self, unit: SourceUnit, cls: ClassDef, routine: Optional[RoutineDef] = None):
        self.unit, self.cls, self.routine = unit, cls, routine

    def attr_type(self, a: T.Attr) -> str:
        c = self.unit.cls(a.cls)
        d = c.attribute(a.name) if c else None
        return d.type if d else ANY

    def attr(self, name: str, ctx: str) -> T.Attr:
        cls, n = _lookup_attr(name, self.unit, ctx)
        return T.Attr(n, cls)

    def term(self, t: T.Term, ctx: Optional[str] = None, local: bool = True) -> tuple[T.Term, str]:
        ctx = ctx or self.cls.name
        match t:
            case T.Var(n):
                if local and self.routine is not None and self.routine.var_type(n) is not None:
                    return t, self.routine.var_type(n)
                a = self.attr(n, ctx)
                return a, self.attr_type(a)
            case T.Attr(n, cls):
                a = t if cls else self.attr(n, ctx)
                return a, self.attr_type(a)
            case T.CurrentK():
                return t, ctx
            case T.VoidK():
                return t, NONE
            case T.IntConst():
                return t, INTEGER
            case T.BoolConst():
                return t, BOOLEAN
            case T.EmptySeq():
                return t, SEQ
            case T.NegVar(target):
                rt, _ = self.term(target, ctx, local)
                return T.NegVar(rt), ANY
            case T.Old(inner):
                ri, ty = self.term(inner, ctx, local)
                return T.Old(ri), ty
            case T.Ghost():
                return t, ANY
            case T.Dot(left, right):
                rl, lt = self.term(left, ctx, local)
                if lt in BASIC_TYPES or lt == SEQ:
                    raise ResolveError(f"cannot apply '.' to a value of type {lt}")
                if isinstance(left, T.NegVar):
                    lt = ANY
                rr, rt = self.term(right, lt if lt != NONE else ANY, local=False)
                return T.Dot(rl, rr), rt
            case T.Integral(p, a) | T.Depth(p, a) | T.Acyclic(p, a):
                if p is None:
                    rp, pt = None, ctx
                else:
                    rp, pt = self.term(p, ctx, local)
                ra = a if a.cls else self.attr(a.name, pt if pt != NONE else ANY)
                result = {T.Integral: SEQ, T.Depth: INTEGER, T.Acyclic: BOOLEAN}[type(t)]
                return type(t)(rp, ra), result
            case T.Singleton(item):
                return T.Singleton(self.term(item, ctx, local)[0]), SEQ
            case T.Rev(s):
                return T.Rev(self.term(s, ctx, local)[0]), SEQ
            case T.Concat(l, r):
                return T.Concat(self.term(l, ctx, local)[0], self.term(r, ctx, local)[0]), SEQ
            case T.Not(o):
                return T.Not(self.term(o, ctx, local)[0]), BOOLEAN
            case T.Eq(l, r) | T.Neq(l, r) | T.And(l, r) | T.Or(l, r):
                ty = BOOLEAN
                return type(t)(self.term(l, ctx, local)[0], self.term(r, ctx, local)[0]), ty
            case T.IntPlus(l, r) | T.IntMinus(l, r):
                return type(t)(self.term(l, ctx, local)[0], self.term(r, ctx, local)[0]), INTEGER
        raise ResolveError(f"cannot resolve {t!r}")

    def instr(self, i: Instr) -> Instr:
        match i:
            case Assign(target, source):
                tgt, _ = self.term(target)
                if not isinstance(tgt, (T.Var, T.Attr)):
                    raise ResolveError("assignment target must be a variable or attribute")
                if isinstance(tgt, T.Attr) and tgt.cls != self.cls.name:
                    raise ResolveError(f"cannot assign to {tgt.qualified} from class {self.cls.name}")
                return replace(i, target=tgt, source=self.term(source)[0])
            case QualifiedCall(target, name, actuals):
                tgt, ty = self.term(target)
                c = self.unit.cls(ty)
                if c is None or c.routine(name) is None:
                    raise ResolveError(f"unknown routine {name!r} for target of type {ty}")
                r = c.routine(name)
                if len(r.formals) != len(actuals):
                    raise ResolveError(f"{name} expects {len(r.formals)} arguments, got {len(actuals)}")
                return replace(i, target=tgt, actuals=tuple(self.term(a)[0] for a in actuals))
            case UnqualifiedCall(name, actuals):
                r = self.cls.routine(name)
                if r is None:
                    raise ResolveError(f"unknown routine {name!r} in class {self.cls.name}")
                if len(r.formals) != len(actuals):
                    raise ResolveError(f"{name} expects {len(r.formals)} arguments, got {len(actuals)}")
                return replace(i, actuals=tuple(self.term(a)[0] for a in actuals))
            case Loop():
                exit_, ety = self.term(i.exit)
                if ety != BOOLEAN:
                    raise ResolveError("loop exit condition must be boolean")
                return replace(
                    i,
                    init=tuple(self.instr(j) for j in i.init),
                    exit=exit_,
                    invariants=tuple(self.term(v)[0] for v in i.invariants),
                    variant=self.term(i.variant)[0] if i.variant is not None else None,
                    body=tuple(self.instr(j) for j in i.body),
                )
            case Cut(e, f):
                (re_, et), (rf, ft) = self.term(e), self.term(f)
                for ty in (et, ft):
                    if ty in BASIC_TYPES or ty == SEQ:
                        raise ResolveError("cut operands must be references")
                return replace(i, e=re_, f=rf)
            case Check(a):
                return replace(i, assumption=self.term(a)[0])
        raise ResolveError(f"unknown instruction {i!r}")


# ----------------------------------------------------------------------
# labels


def _label_instrs(instrs, used: set[str], counter: list[int]) -> tuple:
    out = []
    for i in instrs:
        if isinstance(i, Loop):
            i = replace(i, init=_label_instrs(i.init, used, counter),
                        body=_label_instrs(i.body, used, counter))
        if not i.label:
            while True:
                counter[0] += 1
                name = f"pl{counter[0]}"
                if name not in used:
                    break
            used.add(name)
            i = replace(i, label=name)
        out.append(i)
    return tuple(out)


def _assign_labels(r: RoutineDef) -> None:
    explicit = [i.label for i in walk(r.body) if i.label]
    dupes = {x for x in explicit if explicit.count(x) > 1}
    if dupes:
        raise ResolveError(f"duplicate label(s) {sorted(dupes)} in routine {r.name}")
    r.body = list(_label_instrs(r.body, set(explicit), [0]))


# ----------------------------------------------------------------------
# entry points


def _check_declarations(unit: SourceUnit) -> None:
    seen = set()
    for c in unit.classes:
        if c.name in seen:
            raise ResolveError(f"duplicate class {c.name}")
        seen.add(c.name)
    for c in unit.classes:
        names = [a.name for a in c.attributes] + [r.name for r in c.routines]
        for n in names:
            if names.count(n) > 1:
                raise ResolveError(f"duplicate feature {n!r} in class {c.name}")
        for a in c.attributes:
            if a.type not in BASIC_TYPES and unit.cls(a.type) is None:
                raise ResolveError(f"unknown type {a.type!r} for {c.name}.{a.name}")
        for r in c.routines:
            vs = [n for n, _ in r.formals + r.locals]
            for n in vs:
                if vs.count(n) > 1:
                    raise ResolveError(f"duplicate variable {n!r} in {c.name}.{r.name}")
            for _, ty in r.formals + r.locals:
                if ty not in BASIC_TYPES and unit.cls(ty) is None:
                    raise ResolveError(f"unknown type {ty!r} in {c.name}.{r.name}")


def resolve_unit(unit: SourceUnit) -> SourceUnit:
    _check_declarations(unit)
    for c in unit.classes:
        for r in c.routines:
            r.owner = c.name
            res = Resolver(unit, c, r)
            r.precondition = [res.term(t)[0] for t in r.precondition]
            r.postcondition = [res.term(t)[0] for t in r.postcondition]
            r.body = [res.instr(i) for i in r.body]
            _assign_labels(r)
    return classify_setters(unit)


def parse(text: str) -> SourceUnit:
    """Parse and resolve a whole program."""
    return resolve_unit(_Parser(text).unit())


def parse_file(path) -> SourceUnit:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def parse_term(text: str, unit: SourceUnit, cls: str, routine: Optional[str] = None) -> T.Term:
    """Parse and resolve a term in the context of a class (and routine)."""
    c = unit.cls(cls)
    if c is None:
        raise ResolveError(f"unknown class {cls!r}")
    r = c.routine(routine) if routine else None
    return Resolver(unit, c, r).term(parse_term_raw(text))[0]


# ----------------------------------------------------------------------
# setters


def _setter_positions(r: RoutineDef) -> list[tuple[str, int]]:
    out = []
    formals = r.formal_names
    for clause in r.postcondition:
        if isinstance(clause, T.Eq):
            for a, f in ((clause.left, clause.right), (clause.right, clause.left)):
                if isinstance(a, T.Attr) and isinstance(f, T.Var) and f.name in formals:
                    out.append((a.name, formals.index(f.name) + 1))
                    break
    return out


def setter_position(r: RoutineDef, attr: str) -> Optional[int]:
    """1-based position of the argument *r* sets *attr* to, if *r* is a setter for it."""
    for a, k in _setter_positions(r):
        if a == attr:
            return k
    return None


def is_simple_body(r: RoutineDef) -> bool:
    formals = set(r.formal_names)
    return bool(r.body) and all(
        isinstance(i, Assign) and isinstance(i.target, T.Attr)
        and isinstance(i.source, T.Var) and i.source.name in formals
        for i in r.body
    )


def classify_setters(unit: SourceUnit) -> SourceUnit:
    """Fill ``setter_class`` and ``nonprodigal`` on every routine (idempotent)."""
    for c in unit.classes:
        for r in c.routines:
            pos = _setter_positions(r)
            simple = is_simple_body(r)
            if not pos:
                r.setter_class = NOT_A_SETTER
            else:
                attr, k = pos[0]
                assigned = simple and any(
                    i.target.name == attr and i.source.name == r.formal_names[k - 1] for i in r.body
                )
                kind = "simple-setter-for" if assigned else "setter-for"
                r.setter_class = SetterClass(kind, attr, k)
            r.nonprodigal = r.setter_class.kind == "simple-setter-for" or r.note_nonprodigal
    return unit


def directly_affected(unit: SourceUnit, r: RoutineDef, _seen: Optional[set] = None) -> set[str]:
    """Attributes of the current object the routine may assign."""
    seen = _seen if _seen is not None else set()
    if (r.owner, r.name) in seen:
        return set()
    seen.add((r.owner, r.name))
    out: set[str] = set()
    cls = unit.cls(r.owner)
    for i in walk(r.body):
        if isinstance(i, Assign) and isinstance(i.target, T.Attr):
            out.add(i.target.name)
        elif isinstance(i, UnqualifiedCall) and cls and cls.routine(i.routine):
            out |= directly_affected(unit, cls.routine(i.routine), seen)
    return out


def has_qualified_calls(unit: SourceUnit, r: RoutineDef, _seen: Optional[set] = None) -> bool:
    """True if executing *r* may perform a qualified call (so may affect other objects)."""
    seen = _seen if _seen is not None else set()
    if (r.owner, r.name) in seen:
        return False
    seen.add((r.owner, r.name))
    cls = unit.cls(r.owner)
    for i in walk(r.body):
        if isinstance(i, QualifiedCall):
            return True
        if isinstance(i, UnqualifiedCall) and cls and cls.routine(i.routine):
            if has_qualified_calls(unit, cls.routine(i.routine), seen):
                return True
    return False


def indirectly_affects(unit: SourceUnit, r: RoutineDef) -> bool:
    """Conservative: any reachable qualified call counts as an indirect effect."""
    if r.setter_class.kind == "simple-setter-for":
        return False
    return has_qualified_calls(unit, r)


# ----------------------------------------------------------------------
# pretty printing of units


def _fmt_decls(decls: list[tuple[str, str]], unit: Optional[SourceUnit] = None) -> str:
    def ty(t: str) -> str:
        return t if t in BASIC_TYPES else f"detachable {t}"
    return "; ".join(f"{n}: {ty(t)}" for n, t in decls)


def _fmt_instrs(instrs, indent: str) -> list[str]:
    lines = []
    for i in instrs:
        tag = f" -- {i.label}" if i.label else ""
        match i:
            case Assign(target, source):
                lines.append(f"{indent}{T.pretty(target)} := {T.pretty(source)}{tag}")
            case QualifiedCall(target, name, actuals):
                args = ", ".join(T.pretty(a) for a in actuals)
                lines.append(f"{indent}call {T.pretty(target, 6)}.{name}({args}){tag}")
            case UnqualifiedCall(name, actuals):
                args = ", ".join(T.pretty(a) for a in actuals)
                lines.append(f"{indent}call {name}({args}){tag}")
            case Cut(e, f):
                lines.append(f"{indent}cut {T.pretty(e)}, {T.pretty(f)}{tag}")
            case Check(a):
                lines.append(f"{indent}check {T.pretty(a)}{tag}")
            case Loop():
                lines.append(f"{indent}from")
                lines += _fmt_instrs(i.init, indent + "  ")
                lines.append(f"{indent}until")
                lines.append(f"{indent}  {T.pretty(i.exit)}")
                if i.invariants:
                    lines.append(f"{indent}invariant")
                    lines += [f"{indent}  ({T.pretty(v)})" for v in i.invariants]
                if i.variant is not None:
                    lines.append(f"{indent}variant")
                    lines.append(f"{indent}  {T.pretty(i.variant)}")
                lines.append(f"{indent}loop")
                lines += _fmt_instrs(i.body, indent + "  ")
                lines.append(f"{indent}end{tag}")
    return lines


def unparse(unit: SourceUnit) -> str:
    """Render a unit back to surface syntax; re-parses to an equal unit."""
    out = []
    for c in unit.classes:
        out.append(f"class {c.name}")
        out.append("feature")
        for a in c.attributes:
            det = "detachable " if a.detachable else ""
            out.append(f"  {a.name}: {det}{a.type}")
        for r in c.routines:
            head = f"  {r.name}"
            if r.formals:
                head += f" ({_fmt_decls(r.formals)})"
            if r.note_nonprodigal:
                head += " note nonprodigal"
            out.append(head)
            if r.precondition:
                out.append("    require")
                out += [f"      ({T.pretty(t)})" for t in r.precondition]
            if r.locals:
                out.append("    local")
                out += [f"      {_fmt_decls([d])}" for d in r.locals]
            if r.has_body:
                out.append("    do")
                out += _fmt_instrs(r.body, "      ")
            if r.postcondition:
                out.append("    ensure")
                out += [f"      ({T.pretty(t)})" for t in r.postcondition]
            out.append("    end")
        out.append("end")
        out.append("")
    return "\n".join(out)
