"""Reference semantics for differential testing against the rule engine."""

from caseflow.oracles.dcr_ref import (
    RefMarking,
    dcr_accepting,
    dcr_enabled,
    dcr_initial,
    dcr_step,
)
from caseflow.oracles.token_game import NotOffered, TokenGame
from caseflow.oracles.diff import diff_traces

__all__ = [
    "NotOffered",
    "RefMarking",
    "TokenGame",
    "dcr_accepting",
    "dcr_enabled",
    "dcr_initial",
    "dcr_step",
    "diff_traces",
]
