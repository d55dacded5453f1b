"""Mini continuous-query engine: named streams, keyed tables, triggered rules."""

from caseflow.cql.schema import FieldType, SchemaDef, SchemaError, Table
from caseflow.cql.rules import (
    Action,
    CaseFilter,
    CaseWhen,
    Cmp,
    CondExpr,
    DeleteRows,
    DiagnosticEvent,
    EmitRecord,
    ExistsRow,
    GuardAnd,
    GuardNot,
    GuardOr,
    JoinedField,
    Lit,
    MapMerge,
    MergeUpsert,
    PairTsGeq,
    RowConstraint,
    RowField,
    RuleIR,
    TableJoin,
    Trigger,
    TriggerField,
    UpdateRows,
    render_rule,
    render_rules,
)
from caseflow.cql.engine import Cascade, EngineError, ProcessedEvent, RuleEngine, TableChange
from caseflow.cql.windows import WindowEmission, WindowSpec, eval_window

__all__ = [
    "Action",
    "Cascade",
    "CaseFilter",
    "CaseWhen",
    "Cmp",
    "CondExpr",
    "DeleteRows",
    "DiagnosticEvent",
    "EmitRecord",
    "EngineError",
    "ExistsRow",
    "FieldType",
    "GuardAnd",
    "GuardNot",
    "GuardOr",
    "JoinedField",
    "Lit",
    "MapMerge",
    "MergeUpsert",
    "PairTsGeq",
    "ProcessedEvent",
    "RowConstraint",
    "RowField",
    "RuleEngine",
    "RuleIR",
    "SchemaDef",
    "SchemaError",
    "Table",
    "TableChange",
    "TableJoin",
    "Trigger",
    "TriggerField",
    "UpdateRows",
    "WindowEmission",
    "WindowSpec",
    "eval_window",
    "render_rule",
    "render_rules",
]
