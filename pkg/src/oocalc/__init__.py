"""Symbolic and concrete reasoning about object-oriented programs with pointers."""

from .driver import Verdict, alias_query, prove, run
from .lang import parse, parse_file, parse_term
from .rewrite import NoRuleApplies, ProofTrace, RuleId, apply, freeze_old, seq_apply, wp

__all__ = [
    "NoRuleApplies", "ProofTrace", "RuleId", "Verdict", "alias_query", "apply", "freeze_old",
    "parse", "parse_file", "parse_term", "prove", "run", "seq_apply", "wp",
]
