"""Program elements of the toy object language."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .terms import Term

INTEGER = "INTEGER"
BOOLEAN = "BOOLEAN"
BASIC_TYPES = (INTEGER, BOOLEAN)


@dataclass(frozen=True)
class Assign:
    target: Term  # Var or Attr
    source: Term
    label: str = ""


@dataclass(frozen=True)
class QualifiedCall:
    target: Term
    routine: str
    actuals: tuple[Term, ...] = ()
    label: str = ""


@dataclass(frozen=True)
class UnqualifiedCall:
    routine: str
    actuals: tuple[Term, ...] = ()
    label: str = ""


@dataclass(frozen=True)
class Loop:
    init: tuple["Instr", ...]
    exit: Term
    invariants: tuple[Term, ...]
    variant: Optional[Term]
    body: tuple["Instr", ...]
    label: str = ""


@dataclass(frozen=True)
class Cut:
    e: Term
    f: Term
    label: str = ""


@dataclass(frozen=True)
class Check:
    assumption: Term
    label: str = ""


Instr = Union[Assign, QualifiedCall, UnqualifiedCall, Loop, Cut, Check]


@dataclass(frozen=True)
class SetterClass:
    kind: str = "not-a-setter"  # or "setter-for", "simple-setter-for"
    attr: Optional[str] = None
    position: Optional[int] = None  # 1-based

    def __str__(self) -> str:
        if self.kind == "not-a-setter":
            return self.kind
        return f"{self.kind}({self.attr}, {self.position})"


NOT_A_SETTER = SetterClass()


@dataclass
class RoutineDef:
    name: str
    formals: list[tuple[str, str]] = field(default_factory=list)
    locals: list[tuple[str, str]] = field(default_factory=list)
    precondition: list[Term] = field(default_factory=list)
    body: list[Instr] = field(default_factory=list)
    postcondition: list[Term] = field(default_factory=list)
    setter_class: SetterClass = NOT_A_SETTER
    nonprodigal: bool = False
    note_nonprodigal: bool = False
    has_body: bool = True
    owner: str = ""

    @property
    def formal_names(self) -> list[str]:
        return [n for n, _ in self.formals]

    def var_type(self, name: str) -> Optional[str]:
        for n, t in self.formals + self.locals:
            if n == name:
                return t
        return None


@dataclass
class AttributeDef:
    name: str
    type: str
    detachable: bool = False


@dataclass
class ClassDef:
    name: str
    attributes: list[AttributeDef] = field(default_factory=list)
    routines: list[RoutineDef] = field(default_factory=list)

    def attribute(self, name: str) -> Optional[AttributeDef]:
        return next((a for a in self.attributes if a.name == name), None)

    def routine(self, name: str) -> Optional[RoutineDef]:
        return next((r for r in self.routines if r.name == name), None)


@dataclass
class SourceUnit:
    classes: list[ClassDef] = field(default_factory=list)

    def cls(self, name: str) -> Optional[ClassDef]:
        return next((c for c in self.classes if c.name == name), None)

    def find_routine(self, name: str) -> RoutineDef:
        hits = [r for c in self.classes for r in c.routines if r.name == name]
        if not hits:
            raise KeyError(f"no routine named {name!r}")
        if len(hits) > 1:
            owners = ", ".join(r.owner for r in hits)
            raise KeyError(f"routine {name!r} is declared in several classes: {owners}")
        return hits[0]


def walk(instrs) -> list:
    """All instructions, loops expanded in textual order."""
    out = []
    for i in instrs:
        out.append(i)
        if isinstance(i, Loop):
            out.extend(walk(i.init))
            out.extend(walk(i.body))
    return out
