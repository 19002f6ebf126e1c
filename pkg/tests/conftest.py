from __future__ import annotations

from pathlib import Path

import pytest

from oocalc import parse, parse_file, parse_term

PROGRAMS = Path(__file__).resolve().parent.parent / "programs"

MINI_SOURCE = """\
class C
feature
  item: INTEGER
  a: detachable C
  c: detachable C
  set_a (f: detachable C)
    do
      a := f
    ensure
      a = f
    end
  bump
    do
      item := item + 1
    ensure
      item = old(item) + 1
    end
  client (x: detachable C; y: INTEGER)
    local
      k: INTEGER
    do
      x.set_a(c)
    end
end
"""


@pytest.fixture(scope="session")
def reverse_unit():
    return parse_file(PROGRAMS / "reverse.oo")


@pytest.fixture(scope="session")
def swapped_unit():
    return parse_file(PROGRAMS / "reverse_swapped.oo")


@pytest.fixture(scope="session")
def mini():
    return parse(MINI_SOURCE)


@pytest.fixture
def rterm(reverse_unit):
    """Parse a term in the context of LIST.reverse."""
    return lambda s: parse_term(s, reverse_unit, "LIST", "reverse")


@pytest.fixture
def mterm(mini):
    """Parse a term in the context of C.client."""
    return lambda s: parse_term(s, mini, "C", "client")
