"""Hypothesis strategies over the LIST/LINKABLE vocabulary of the reversal program."""

from __future__ import annotations

from hypothesis import strategies as st

from oocalc import oracle as O
from oocalc import terms as T

RIGHT = T.Attr("right", "LINKABLE")
FIRST = T.Attr("first", "LIST")
REF_VARS = ("previous", "next", "temp")


def paths(max_hops: int = 2):
    roots = st.sampled_from([T.Var(n) for n in REF_VARS] + [FIRST])
    hops = st.integers(0, max_hops)
    return st.builds(lambda r, k: _hop(r, k), roots, hops)


def _hop(root: T.Term, k: int) -> T.Term:
    for _ in range(k):
        root = T.Dot(root, RIGHT)
    return root


def seq_terms(max_leaves: int = 6):
    leaves = st.one_of(
        st.builds(lambda p: T.Integral(p, RIGHT), paths()),
        st.builds(T.Singleton, paths()),
        st.just(T.EMPTY),
    )
    return st.recursive(
        leaves,
        lambda inner: st.one_of(st.builds(T.Rev, inner), st.builds(T.Concat, inner, inner)),
        max_leaves=max_leaves,
    )


@st.composite
def list_heaps(draw, max_cells: int = 8, acyclic: bool | None = None):
    """An owner L whose ``first`` and the three locals point into LINKABLE cells."""
    n = draw(st.integers(1, max_cells))
    cells = [f"c{k}" for k in range(1, n + 1)]
    forward = draw(st.booleans()) if acyclic is None else acyclic
    h = O.Heap({"L": O.Obj("LIST", {})})
    for k, c in enumerate(cells):
        pool = cells[k + 1:] if forward else cells
        tgt = draw(st.one_of(st.none(), st.sampled_from(pool))) if pool else None
        h.objects[c] = O.Obj("LINKABLE", {"right": tgt}, {"item": k})
    ref = st.one_of(st.none(), st.sampled_from(cells))
    h.objects["L"].refs["first"] = draw(ref)
    env = O.Env("L", {v: draw(ref) for v in REF_VARS})
    return h, O.snapshot(h, env)
