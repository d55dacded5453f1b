"""Declarative process models: DCR graph parsing and rule compilation."""

from caseflow.dcr.model import DcrMarking, DcrModelIR, DcrValidationError, parse_dcr
from caseflow.dcr.compiler import (
    DcrStateError,
    accepting,
    compile_dcr,
    enabled_events,
    init_case_state,
    initial_rows,
)

__all__ = [
    "DcrMarking",
    "DcrModelIR",
    "DcrStateError",
    "DcrValidationError",
    "accepting",
    "compile_dcr",
    "enabled_events",
    "init_case_state",
    "initial_rows",
    "parse_dcr",
]
